#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "activetherm/dynamics.hpp"
#include "activetherm/filter.hpp"
#include "activetherm/geometry.hpp"
#include "activetherm/groundtruth.hpp"
#include "activetherm/part.hpp"
#include "activetherm/random.hpp"

namespace activetherm::perception {

enum class PolicyKind { MaxValue, MaxUncertainty, UniformRandom };

std::string_view to_string(PolicyKind kind);
PolicyKind policy_kind_from_string(std::string_view name);

struct Policy {
  PolicyKind kind = PolicyKind::MaxUncertainty;
  double alpha = 2.0;  // pose distance scale, > 1

  void validate() const;
};

// Index into state.point_ids of the policy target. Ties go to the lowest
// point id. UniformRandom draws from `engine`, which it then requires.
std::size_t select_target(const Policy& policy, const filter::KalmanState& state, rng::Engine* engine = nullptr);

// Pose on the ray from `center` through the target, at alpha times the
// target's distance, looking back at it.
geometry::SensorPose pose_towards(const Vec3& target, const Vec3& center, double alpha);

// select_target + pose_towards, with the centre taken as the centroid of the
// points currently in the state.
geometry::SensorPose next_pose(const Policy& policy, const filter::KalmanState& state,
                               const geometry::ControlPointSet& points, rng::Engine* engine = nullptr);

struct PixelMatch {
  std::size_t pixel = 0;
  double value = 0.0;
  double distance = 0.0;  // from the control point to the pixel's surface point; inf for a miss
  bool out_of_frame = false;
};

// One match per entry of `observed` (rows of `points_rot`, sensor frame). A
// point whose projection falls in the image takes the hit pixel whose surface
// point is closest to it; one projecting outside (or behind) the image is
// clamped to the nearest border pixel and flagged.
std::vector<PixelMatch> extract_measurements(const groundtruth::SensorFrame& frame,
                                             const std::vector<std::size_t>& observed, const Points& points_rot,
                                             const groundtruth::CameraModel& camera);

// Everything the loop needs: control points and their schedule, the surface
// to look at, and the emulated process.
struct Scenario {
  geometry::ControlPointSet points;
  dynamics::DepositionSchedule schedule;
  part::LayeredMesh meshes;
  groundtruth::GroundTruthField truth;
};

struct LoopConfig {
  dynamics::ThermalParams model;
  filter::MeasurementNoise measurement;
  double prior_variance = 100.0;
  Policy policy;
  groundtruth::CameraModel camera;
  double sensor_noise_std = 2.0;
  double slice_fraction = 0.1;
  double match_radius = 3.0;
  Step steps_per_measurement = 40;
  Step horizon = 4800;
  std::uint64_t seed = 1;

  void validate() const;
  std::size_t cycle_count() const;
};

struct CycleRecord {
  std::size_t cycle = 0;
  Step step = 0;
  geometry::SensorPose pose;
  PointId target = 0;
  std::vector<PointId> observed;  // control ids, C_k row order
  Eigen::VectorXd y;              // absolute temperatures
  std::size_t out_of_frame = 0;
  std::size_t state_dim = 0;
  double max_err_ext = 0.0;
  double avg_err_ext = 0.0;
  double max_err_int = 0.0;
  double avg_err_int = 0.0;
  double avg_cov_prior = 0.0;  // before the update
  double avg_cov = 0.0;        // after the update
};

struct PerceptionTrace {
  std::vector<CycleRecord> records;
  std::size_t predict_steps = 0;
  std::size_t out_of_frame = 0;
};

// Receives the posterior state of each cycle.
using StateObserver = std::function<void(const CycleRecord&, const filter::KalmanState&)>;

// Measure, update, then predict steps_per_measurement times, for every cycle
// that starts before the horizon.
PerceptionTrace run_loop(const Scenario& scenario, const LoopConfig& config, const StateObserver& observer = {});

// Absolute temperature of the process at a control point: the nearest active
// fine point at step k.
double truth_at(const groundtruth::GroundTruthField& truth, const Vec3& position, Step k);

void write_trace_csv(const PerceptionTrace& trace, const std::filesystem::path& path);
std::string trace_csv(const PerceptionTrace& trace);

}  // namespace activetherm::perception
