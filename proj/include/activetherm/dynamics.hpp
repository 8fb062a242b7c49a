#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "activetherm/geometry.hpp"
#include "activetherm/types.hpp"

#include <json.hpp>

namespace activetherm::dynamics {

using SparseMatrix = Eigen::SparseMatrix<double>;

struct Layer {
  std::vector<PointId> point_ids;
  Step activation_step = 0;
  double deposition_temp = 500.0;

  bool operator==(const Layer&) const = default;
};

// Layer-by-layer material deposition. Only the `active_window` most recent
// activated layers take part in the estimated state.
struct DepositionSchedule {
  std::size_t active_window = 4;
  std::vector<Layer> layers;

  // Throws InvalidArgument unless activation steps strictly increase and
  // every point id appears in exactly one layer. When point_count is given,
  // ids must also be < point_count.
  void validate(std::optional<std::size_t> point_count = std::nullopt) const;

  // Number of layers with activation_step <= step.
  std::size_t layers_activated(Step step) const;

  // Layer index per point id (ids not in any layer map to SIZE_MAX).
  std::vector<std::size_t> layer_of_points(std::size_t point_count) const;

  nlohmann::json to_json() const;
  static DepositionSchedule from_json(const nlohmann::json& doc);
  static DepositionSchedule load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  bool operator==(const DepositionSchedule&) const = default;
};

struct ActiveSets {
  std::vector<PointId> active;
  std::vector<PointId> newly_activated;
  std::vector<PointId> retired;
};

// All three lists are ascending.
ActiveSets active_indices(const DepositionSchedule& schedule, Step step);

// Graph Laplacian of the symmetrized k-nearest-neighbour graph with weights
// 1 / |x_i - x_j|^2. Requires >= 2 points, k < point count and distinct
// positions.
SparseMatrix build_laplacian(const Points& positions, std::size_t k);

// Max absolute row sum.
double infinity_norm(const SparseMatrix& m);

// (1 - boundary_loss * dt) * (I - dt * diffusivity * L) over `positions`, with
// k clamped to point count - 1. Throws NumericalError when
// dt * diffusivity * |L|_inf >= 1.
SparseMatrix diffusion_step(const Points& positions, std::size_t k, double diffusivity, double dt,
                            double boundary_loss);

struct ThermalParams {
  double dt = 0.15;
  double diffusivity = 1.0;
  double ambient_temp = 25.0;
  std::size_t neighbors = 6;
  double boundary_loss = 0.01;
  double process_noise_density = 2.0;

  void validate() const;
};

// Runtime linear time-varying thermal model over the control points. The
// state is temperature above ambient; x_{k+1} = A_k x_k + w_k.
class LtvThermalModel {
 public:
  LtvThermalModel(geometry::ControlPointSet points, DepositionSchedule schedule, ThermalParams params);

  const geometry::ControlPointSet& points() const { return points_; }
  const DepositionSchedule& schedule() const { return schedule_; }
  const ThermalParams& params() const { return params_; }

  // A_k over active_indices(k).active in ascending id order.
  SparseMatrix step_matrix(Step k) const;
  // A over an explicit ordered list of point ids.
  SparseMatrix step_matrix_for(std::span<const PointId> ids) const;

  // W_k = process_noise_density * dt * I at the active dimension.
  Eigen::MatrixXd process_noise(Step k) const;
  Eigen::MatrixXd process_noise_for(std::size_t dim) const;

 private:
  geometry::ControlPointSet points_;
  DepositionSchedule schedule_;
  ThermalParams params_;
};

}  // namespace activetherm::dynamics
