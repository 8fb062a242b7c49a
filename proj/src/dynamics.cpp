#include "activetherm/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "activetherm/errors.hpp"
#include "activetherm/spatial.hpp"

namespace activetherm::dynamics {

// ---------------------------------------------------------------------------
// Deposition schedule

void DepositionSchedule::validate(std::optional<std::size_t> point_count) const {
  if (active_window == 0) throw InvalidArgument("active_window must be positive");
  std::vector<bool> seen;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const Layer& layer = layers[l];
    if (layer.activation_step < 0) throw InvalidArgument("layer activation step must be >= 0");
    if (l > 0 && layer.activation_step <= layers[l - 1].activation_step)
      throw InvalidArgument("layer activation steps must be strictly increasing (layer " + std::to_string(l) + ")");
    if (!std::isfinite(layer.deposition_temp)) throw InvalidArgument("deposition temperature must be finite");
    for (PointId id : layer.point_ids) {
      if (point_count && id >= *point_count)
        throw InvalidArgument("schedule references point " + std::to_string(id) + " but only " +
                              std::to_string(*point_count) + " points exist");
      if (id >= seen.size()) seen.resize(id + 1, false);
      if (seen[id]) throw InvalidArgument("point " + std::to_string(id) + " appears in more than one layer");
      seen[id] = true;
    }
  }
}

std::size_t DepositionSchedule::layers_activated(Step step) const {
  return static_cast<std::size_t>(
      std::upper_bound(layers.begin(), layers.end(), step,
                       [](Step s, const Layer& layer) { return s < layer.activation_step; }) -
      layers.begin());
}

std::vector<std::size_t> DepositionSchedule::layer_of_points(std::size_t point_count) const {
  std::vector<std::size_t> layer_of(point_count, std::numeric_limits<std::size_t>::max());
  for (std::size_t l = 0; l < layers.size(); ++l)
    for (PointId id : layers[l].point_ids)
      if (id < point_count) layer_of[id] = l;
  return layer_of;
}

nlohmann::json DepositionSchedule::to_json() const {
  nlohmann::json doc;
  doc["active_window"] = active_window;
  doc["layers"] = nlohmann::json::array();
  for (const Layer& layer : layers) {
    doc["layers"].push_back({{"point_ids", layer.point_ids},
                             {"activation_step", layer.activation_step},
                             {"deposition_temp", layer.deposition_temp}});
  }
  return doc;
}

DepositionSchedule DepositionSchedule::from_json(const nlohmann::json& doc) {
  DepositionSchedule schedule;
  try {
    const auto window = doc.at("active_window").get<long long>();
    if (window <= 0) throw InvalidArgument("active_window must be positive");
    schedule.active_window = static_cast<std::size_t>(window);
    for (const auto& entry : doc.at("layers")) {
      Layer layer;
      for (const auto& id : entry.at("point_ids")) {
        const auto v = id.get<long long>();
        if (v < 0) throw InvalidArgument("point ids must be non-negative");
        layer.point_ids.push_back(static_cast<PointId>(v));
      }
      layer.activation_step = entry.at("activation_step").get<Step>();
      layer.deposition_temp = entry.value("deposition_temp", 500.0);
      schedule.layers.push_back(std::move(layer));
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("malformed deposition schedule: ") + e.what());
  }
  schedule.validate();
  return schedule;
}

DepositionSchedule DepositionSchedule::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open schedule file " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
  return from_json(doc);
}

void DepositionSchedule::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write schedule file " + path.string());
  out << to_json().dump(2) << '\n';
  if (!out) throw IoError("error writing " + path.string());
}

ActiveSets active_indices(const DepositionSchedule& schedule, Step step) {
  ActiveSets sets;
  const std::size_t count = schedule.layers_activated(step);
  if (count == 0) return sets;
  const std::size_t first = count > schedule.active_window ? count - schedule.active_window : 0;
  for (std::size_t l = first; l < count; ++l)
    sets.active.insert(sets.active.end(), schedule.layers[l].point_ids.begin(), schedule.layers[l].point_ids.end());

  const Layer& newest = schedule.layers[count - 1];
  if (newest.activation_step == step) {
    sets.newly_activated = newest.point_ids;
    if (count > schedule.active_window) sets.retired = schedule.layers[first - 1].point_ids;
  }
  std::sort(sets.active.begin(), sets.active.end());
  std::sort(sets.newly_activated.begin(), sets.newly_activated.end());
  std::sort(sets.retired.begin(), sets.retired.end());
  return sets;
}

// ---------------------------------------------------------------------------
// Laplacian and step operator

SparseMatrix build_laplacian(const Points& positions, std::size_t k) {
  const auto n = static_cast<std::size_t>(positions.rows());
  if (n < 2) throw InvalidArgument("build_laplacian needs at least 2 points");
  if (k == 0 || k >= n) throw InvalidArgument("build_laplacian: neighbour count must satisfy 1 <= k < n");

  const KdTree tree(positions);
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  edges.reserve(n * k);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j : tree.k_nearest(positions.row(static_cast<Eigen::Index>(i)).transpose(), k, i))
      edges.emplace_back(std::min(i, j), std::max(i, j));
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());

  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(2 * edges.size() + n);
  std::vector<double> degree(n, 0.0);
  for (const auto& [i, j] : edges) {
    const double d2 = (positions.row(static_cast<Eigen::Index>(i)) - positions.row(static_cast<Eigen::Index>(j))).squaredNorm();
    if (d2 == 0.0)
      throw InvalidArgument("duplicate point positions (points " + std::to_string(i) + " and " + std::to_string(j) + ")");
    const double w = 1.0 / d2;
    triplets.emplace_back(static_cast<int>(i), static_cast<int>(j), -w);
    triplets.emplace_back(static_cast<int>(j), static_cast<int>(i), -w);
    degree[i] += w;
    degree[j] += w;
  }
  for (std::size_t i = 0; i < n; ++i) triplets.emplace_back(static_cast<int>(i), static_cast<int>(i), degree[i]);

  SparseMatrix laplacian(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  laplacian.setFromTriplets(triplets.begin(), triplets.end());
  return laplacian;
}

double infinity_norm(const SparseMatrix& m) {
  Eigen::VectorXd row_sums = Eigen::VectorXd::Zero(m.rows());
  for (Eigen::Index c = 0; c < m.outerSize(); ++c)
    for (SparseMatrix::InnerIterator it(m, c); it; ++it) row_sums[it.row()] += std::abs(it.value());
  return m.rows() == 0 ? 0.0 : row_sums.maxCoeff();
}

SparseMatrix diffusion_step(const Points& positions, std::size_t k, double diffusivity, double dt,
                            double boundary_loss) {
  const auto n = positions.rows();
  const double decay = 1.0 - boundary_loss * dt;
  SparseMatrix a(n, n);
  if (n == 0) return a;
  if (n == 1 || diffusivity == 0.0) {
    a.setIdentity();
    a *= decay;
    return a;
  }
  const SparseMatrix laplacian = build_laplacian(positions, std::min<std::size_t>(k, static_cast<std::size_t>(n - 1)));
  const double stability = dt * diffusivity * infinity_norm(laplacian);
  if (!(stability < 1.0)) {
    std::ostringstream msg;
    msg << "explicit Euler stability violated: dt * diffusivity * |L|_inf = " << stability << " >= 1";
    throw NumericalError(msg.str());
  }
  a.setIdentity();
  a -= (dt * diffusivity) * laplacian;
  a *= decay;
  a.makeCompressed();
  return a;
}

// ---------------------------------------------------------------------------
// LTV model

void ThermalParams::validate() const {
  if (!(dt > 0.0)) throw InvalidArgument("dt must be positive");
  if (!(diffusivity >= 0.0)) throw InvalidArgument("diffusivity must be non-negative");
  if (neighbors == 0) throw InvalidArgument("neighbour count must be positive");
  if (!(boundary_loss >= 0.0)) throw InvalidArgument("boundary loss must be non-negative");
  if (boundary_loss * dt > 1.0) throw InvalidArgument("boundary_loss * dt must not exceed 1");
  if (!(process_noise_density >= 0.0)) throw InvalidArgument("process noise density must be non-negative");
  if (!std::isfinite(ambient_temp)) throw InvalidArgument("ambient temperature must be finite");
}

LtvThermalModel::LtvThermalModel(geometry::ControlPointSet points, DepositionSchedule schedule, ThermalParams params)
    : points_(std::move(points)), schedule_(std::move(schedule)), params_(params) {
  params_.validate();
  schedule_.validate(points_.size());
  if (points_.size() >= 2 && params_.diffusivity > 0.0) {
    const auto k = std::min<std::size_t>(params_.neighbors, points_.size() - 1);
    const double stability = params_.dt * params_.diffusivity * infinity_norm(build_laplacian(points_.positions(), k));
    if (!(stability < 1.0)) {
      std::ostringstream msg;
      msg << "LTV model unstable: dt * diffusivity * |L|_inf = " << stability << " >= 1";
      throw NumericalError(msg.str());
    }
  }
}

SparseMatrix LtvThermalModel::step_matrix(Step k) const {
  const ActiveSets sets = active_indices(schedule_, k);
  return step_matrix_for(sets.active);
}

SparseMatrix LtvThermalModel::step_matrix_for(std::span<const PointId> ids) const {
  Points sub(static_cast<Eigen::Index>(ids.size()), 3);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= points_.size()) throw InvalidArgument("unknown control point id " + std::to_string(ids[i]));
    sub.row(static_cast<Eigen::Index>(i)) = points_.positions().row(static_cast<Eigen::Index>(ids[i]));
  }
  return diffusion_step(sub, params_.neighbors, params_.diffusivity, params_.dt, params_.boundary_loss);
}

Eigen::MatrixXd LtvThermalModel::process_noise(Step k) const {
  return process_noise_for(active_indices(schedule_, k).active.size());
}

Eigen::MatrixXd LtvThermalModel::process_noise_for(std::size_t dim) const {
  const auto n = static_cast<Eigen::Index>(dim);
  return (params_.process_noise_density * params_.dt) * Eigen::MatrixXd::Identity(n, n);
}

}  // namespace activetherm::dynamics
