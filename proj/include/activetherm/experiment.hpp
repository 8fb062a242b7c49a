#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "activetherm/part.hpp"
#include "activetherm/perception.hpp"

namespace activetherm::experiment {

struct PartConfig {
  std::string type = "rect_pocket";  // or "mesh"
  part::RectPocketSpec rect;
  // Mesh parts: OBJ surface, control points by bounding-box grid, layers by
  // height bands unless a schedule file over control ids is given.
  std::string mesh_path;
  geometry::GridDims grid{6, 6, 6};
  std::string schedule_path;
  std::vector<Vec3> interior_points;
};

struct GroundTruthConfig {
  double mismatch_factor = 1.2;  // fine diffusivity / model diffusivity
  std::size_t refinement = 2;
  int substeps = 4;
  double boundary_loss = 0.012;
  std::size_t neighbors = 8;
  bool respect_active_window = false;
  std::string table_path;  // load this lookup table instead of simulating
  bool save_table = true;
};

struct CompareConfig {
  std::size_t seeds = 20;
  std::size_t cycles = 50;
  std::vector<perception::PolicyKind> policies{perception::PolicyKind::MaxUncertainty,
                                               perception::PolicyKind::MaxValue,
                                               perception::PolicyKind::UniformRandom};
  std::size_t threads = 0;  // 0: hardware concurrency
};

struct ExperimentConfig {
  PartConfig part;
  dynamics::ThermalParams model;
  std::size_t active_window = 4;
  double measurement_variance = 4.0;
  double prior_variance = 100.0;
  perception::Policy policy;
  groundtruth::CameraModel camera;
  double sensor_noise_std = 2.0;
  double slice_fraction = 0.1;
  double match_radius = 3.0;
  GroundTruthConfig groundtruth;
  Step steps_per_measurement = 40;
  Step horizon = 4800;
  std::uint64_t seed = 1;
  std::string output_dir = "out";
  CompareConfig compare;

  // Rejects unknown keys; missing keys take their defaults.
  static ExperimentConfig from_json(const nlohmann::json& doc);
  static ExperimentConfig load(const std::filesystem::path& path);
  // Every field, defaults included.
  nlohmann::json to_json() const;

  void validate() const;
  perception::LoopConfig loop_config() const;
  std::size_t cycle_count() const { return loop_config().cycle_count(); }
};

// Control points, schedule, meshes and ground truth covering `cycles`
// measurement cycles (default: the configured horizon).
perception::Scenario build_scenario(const ExperimentConfig& config, std::optional<std::size_t> cycles = std::nullopt);

// Control points and their schedule only (no ground truth).
struct PartModel {
  geometry::ControlPointSet points;
  dynamics::DepositionSchedule schedule;
};
PartModel build_part(const ExperimentConfig& config);

struct RunResult {
  perception::PerceptionTrace trace;
  double wall_seconds = 0.0;
  std::vector<filter::KalmanState> states;  // per cycle, when requested
};

RunResult run(const ExperimentConfig& config, const perception::Scenario& scenario, bool keep_states = false);

nlohmann::json summary_json(const ExperimentConfig& config, const RunResult& result);

// Gnuplot data: index 0 holds the error curves, index 1 the average covariance,
// both against time in seconds.
std::string curves_data(const perception::PerceptionTrace& trace, double dt);

// Writes trace.csv, summary.json, curves.dat (and states/ when present). Each
// file is written under a temporary name and renamed into place.
void write_run_outputs(const ExperimentConfig& config, const RunResult& result, const std::filesystem::path& dir);

struct CompareRow {
  std::uint64_t seed = 0;
  std::vector<double> final_avg_cov;  // one per configured policy
  std::vector<double> final_avg_err_ext;
};

struct CompareReport {
  std::vector<perception::PolicyKind> policies;
  std::vector<CompareRow> rows;
  std::vector<perception::PerceptionTrace> traces;  // row-major: seed, then policy
  double wall_seconds = 0.0;

  // Fraction of seeds where policy a ends with strictly lower average
  // covariance than policy b (indices into policies).
  double win_fraction(std::size_t a, std::size_t b) const;
  nlohmann::json to_json() const;
  std::string csv() const;
};

// Runs every configured policy for seeds config.seed, config.seed + 1, ...
// against one shared ground truth. Independent runs execute in parallel;
// results do not depend on the thread count.
CompareReport compare_policies(const ExperimentConfig& config);
void write_compare_outputs(const ExperimentConfig& config, const CompareReport& report,
                           const std::filesystem::path& dir);

// Writes `content` to `path` through a temporary file and a rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

}  // namespace activetherm::experiment
