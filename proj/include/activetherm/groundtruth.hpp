#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "activetherm/dynamics.hpp"
#include "activetherm/geometry.hpp"
#include "activetherm/raycast.hpp"
#include "activetherm/spatial.hpp"
#include "activetherm/types.hpp"

namespace activetherm::groundtruth {

struct FineModelParams {
  double dt = 0.15;  // runtime model step; the fine step is dt / substeps
  int substeps = 4;
  double diffusivity = 1.2;
  double boundary_loss = 0.012;
  double ambient_temp = 25.0;
  std::size_t neighbors = 8;
  // Drop points leaving the deposition window (as the runtime model does).
  bool respect_active_window = false;
  Step horizon = 0;        // last simulated model step
  Step record_stride = 1;  // store every record_stride-th model step

  void validate() const;
};

struct FineSimulationSpec {
  Points positions;
  dynamics::DepositionSchedule deposition;  // ids index `positions`
  // Optional absolute start temperature per point, used instead of the layer
  // deposition temperature when the point activates.
  std::vector<double> initial_temps;
  FineModelParams params;
};

// Precomputed high-fidelity temperature history (the emulated process).
// temps(r, p) is the absolute temperature of fine point p at model step
// stored_steps()[r]; inactive points hold NaN.
class GroundTruthField {
 public:
  GroundTruthField() = default;
  GroundTruthField(Points fine_points, dynamics::DepositionSchedule deposition, std::vector<Step> stored_steps,
                   Eigen::MatrixXd temps, double dt, int substeps, double ambient_temp,
                   bool respect_active_window);

  const Points& fine_points() const { return fine_points_; }
  const dynamics::DepositionSchedule& deposition() const { return deposition_; }
  const std::vector<Step>& stored_steps() const { return stored_steps_; }
  const Eigen::MatrixXd& temps() const { return temps_; }
  double dt() const { return dt_; }
  int substeps() const { return substeps_; }
  double dt_fine() const { return dt_ / substeps_; }
  double ambient_temp() const { return ambient_temp_; }
  bool respect_active_window() const { return respect_active_window_; }
  std::size_t point_count() const { return static_cast<std::size_t>(fine_points_.rows()); }

  bool has_step(Step k) const { return row_of(k).has_value(); }
  // Throws InvalidArgument when k is not stored.
  Eigen::Index row(Step k) const;
  std::optional<Eigen::Index> row_of(Step k) const;

  bool active(Step k, std::size_t point) const;
  double temperature(Step k, std::size_t point) const;

  // Nearest fine point active at step k (ties towards the lower index).
  std::optional<std::size_t> nearest_active(const Vec3& position, Step k) const;

  bool operator==(const GroundTruthField& other) const;

 private:
  Points fine_points_;
  dynamics::DepositionSchedule deposition_;
  std::vector<Step> stored_steps_;
  Eigen::MatrixXd temps_;
  double dt_ = 0.15;
  int substeps_ = 1;
  double ambient_temp_ = 25.0;
  bool respect_active_window_ = false;
  KdTree tree_;
};

// Explicit finite-difference diffusion on the fine point graph with
// deposition events. Throws NumericalError on a stability (CFL) violation.
GroundTruthField simulate_fine(const FineSimulationSpec& spec);

// Pinhole camera looking along +x of the sensor frame; image columns run
// along +y and rows along +z. fov_deg is the horizontal field of view.
struct CameraModel {
  int width = 32;
  int height = 32;
  double fov_deg = 30.0;

  void validate() const;
  double focal_px() const;
  // Unnormalized sensor-frame ray through the centre of pixel (col, row).
  Vec3 ray_direction(int col, int row) const;
  // Continuous pixel coordinates (col, row) of a sensor-frame point, or
  // nothing for points at or behind the image plane.
  std::optional<Eigen::Vector2d> project(const Vec3& sensor_point) const;
};

struct SensorFrame {
  int width = 0;
  int height = 0;
  Eigen::MatrixXd values;       // height x width, absolute temperature
  Points pixel_positions;       // width*height rows (row-major pixel order); NaN row = no hit
  geometry::SensorPose pose;
  Step step = 0;

  std::size_t pixel_index(int col, int row) const { return static_cast<std::size_t>(row) * width + col; }
  bool hit(std::size_t pixel) const { return !std::isnan(pixel_positions(static_cast<Eigen::Index>(pixel), 0)); }
  double value(std::size_t pixel) const {
    return values(static_cast<Eigen::Index>(pixel / width), static_cast<Eigen::Index>(pixel % width));
  }
};

// Ray-casts every pixel against the mesh; a hit pixel reads the temperature of
// the nearest active fine point, a miss reads ambient.
SensorFrame sample_image(const GroundTruthField& field, const geometry::MeshRayCaster& mesh,
                         const geometry::SensorPose& pose, Step k, const CameraModel& camera = {});

// Adds i.i.d. N(0, sigma^2) to every hit pixel; deterministic per seed.
SensorFrame add_noise(const SensorFrame& frame, double sigma, std::uint64_t seed);

// Lookup-table binary, little-endian:
//   "ATHERMLT" | u32 version | u32 flags | u64 points | u64 rows | u64 layers
//   | f64 dt | i32 substeps | i32 reserved | f64 ambient | u64 active_window
//   | points x (f64 x, f64 y, f64 z)
//   | layers x (i64 activation_step, f64 deposition_temp, u64 count, count x u64 id)
//   | rows x i64 step | rows x points x f64 temperature
inline constexpr std::uint32_t kLookupTableVersion = 1;
std::uint64_t lookup_table_header_size(std::uint64_t points, const dynamics::DepositionSchedule& deposition,
                                       std::uint64_t rows);
void save_table(const GroundTruthField& field, const std::filesystem::path& path);
GroundTruthField load_table(const std::filesystem::path& path);

// CSV `point_id,x,y,z,temp,active` for one stored step.
void write_step_csv(const GroundTruthField& field, Step k, const std::filesystem::path& path);

}  // namespace activetherm::groundtruth
