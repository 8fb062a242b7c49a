#include "activetherm/groundtruth.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <sstream>

#include "activetherm/errors.hpp"
#include "activetherm/random.hpp"

namespace activetherm::groundtruth {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Points participating in the fine dynamics at `step`, ascending.
std::vector<PointId> fine_active_set(const dynamics::DepositionSchedule& deposition, Step step, bool respect_window) {
  if (respect_window) return dynamics::active_indices(deposition, step).active;
  std::vector<PointId> active;
  const std::size_t count = deposition.layers_activated(step);
  for (std::size_t l = 0; l < count; ++l)
    active.insert(active.end(), deposition.layers[l].point_ids.begin(), deposition.layers[l].point_ids.end());
  std::sort(active.begin(), active.end());
  return active;
}

}  // namespace

void FineModelParams::validate() const {
  if (!(dt > 0.0)) throw InvalidArgument("fine model: dt must be positive");
  if (substeps < 1) throw InvalidArgument("fine model: substeps must be >= 1");
  if (!(diffusivity >= 0.0)) throw InvalidArgument("fine model: diffusivity must be non-negative");
  if (!(boundary_loss >= 0.0) || boundary_loss * dt / substeps > 1.0)
    throw InvalidArgument("fine model: boundary loss must lie in [0, substeps / dt]");
  if (neighbors == 0) throw InvalidArgument("fine model: neighbour count must be positive");
  if (horizon < 0) throw InvalidArgument("fine model: horizon must be >= 0");
  if (record_stride < 1) throw InvalidArgument("fine model: record stride must be >= 1");
  if (!std::isfinite(ambient_temp)) throw InvalidArgument("fine model: ambient temperature must be finite");
}

// ---------------------------------------------------------------------------
// GroundTruthField

GroundTruthField::GroundTruthField(Points fine_points, dynamics::DepositionSchedule deposition,
                                   std::vector<Step> stored_steps, Eigen::MatrixXd temps, double dt, int substeps,
                                   double ambient_temp, bool respect_active_window)
    : fine_points_(std::move(fine_points)),
      deposition_(std::move(deposition)),
      stored_steps_(std::move(stored_steps)),
      temps_(std::move(temps)),
      dt_(dt),
      substeps_(substeps),
      ambient_temp_(ambient_temp),
      respect_active_window_(respect_active_window) {
  if (!(dt_ > 0.0) || substeps_ < 1) throw InvalidArgument("ground truth: invalid time step");
  if (temps_.rows() != static_cast<Eigen::Index>(stored_steps_.size()) || temps_.cols() != fine_points_.rows())
    throw InvalidArgument("ground truth: temperature table shape does not match steps x points");
  if (!std::is_sorted(stored_steps_.begin(), stored_steps_.end()) ||
      std::adjacent_find(stored_steps_.begin(), stored_steps_.end()) != stored_steps_.end())
    throw InvalidArgument("ground truth: stored steps must be strictly increasing");
  deposition_.validate(point_count());
  tree_ = KdTree(fine_points_);
}

std::optional<Eigen::Index> GroundTruthField::row_of(Step k) const {
  const auto it = std::lower_bound(stored_steps_.begin(), stored_steps_.end(), k);
  if (it == stored_steps_.end() || *it != k) return std::nullopt;
  return static_cast<Eigen::Index>(it - stored_steps_.begin());
}

Eigen::Index GroundTruthField::row(Step k) const {
  const auto r = row_of(k);
  if (!r) throw InvalidArgument("ground truth has no stored step " + std::to_string(k));
  return *r;
}

bool GroundTruthField::active(Step k, std::size_t point) const {
  return !std::isnan(temps_(row(k), static_cast<Eigen::Index>(point)));
}

double GroundTruthField::temperature(Step k, std::size_t point) const {
  return temps_(row(k), static_cast<Eigen::Index>(point));
}

std::optional<std::size_t> GroundTruthField::nearest_active(const Vec3& position, Step k) const {
  const Eigen::Index r = row(k);
  return tree_.nearest(position, [&](std::size_t i) { return !std::isnan(temps_(r, static_cast<Eigen::Index>(i))); });
}

bool GroundTruthField::operator==(const GroundTruthField& other) const {
  if (temps_.rows() != other.temps_.rows() || temps_.cols() != other.temps_.cols()) return false;
  // Bitwise on temperatures so NaN markers compare equal.
  const auto bytes = static_cast<std::size_t>(temps_.size()) * sizeof(double);
  if (fine_points_.rows() != other.fine_points_.rows()) return false;
  return fine_points_ == other.fine_points_ && deposition_ == other.deposition_ &&
         stored_steps_ == other.stored_steps_ && dt_ == other.dt_ && substeps_ == other.substeps_ &&
         ambient_temp_ == other.ambient_temp_ && respect_active_window_ == other.respect_active_window_ &&
         (bytes == 0 || std::memcmp(temps_.data(), other.temps_.data(), bytes) == 0);
}

// ---------------------------------------------------------------------------
// Fine simulation

GroundTruthField simulate_fine(const FineSimulationSpec& spec) {
  const FineModelParams& prm = spec.params;
  prm.validate();
  const auto n = static_cast<std::size_t>(spec.positions.rows());
  spec.deposition.validate(n);
  if (!spec.initial_temps.empty() && spec.initial_temps.size() != n)
    throw InvalidArgument("initial temperatures must match the fine point count");

  const double dt_fine = prm.dt / prm.substeps;
  std::vector<Step> stored;
  for (Step k = 0; k <= prm.horizon; k += prm.record_stride) stored.push_back(k);
  Eigen::MatrixXd temps = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(stored.size()),
                                                    static_cast<Eigen::Index>(n), kNaN);

  // Temperature above ambient.
  Eigen::VectorXd u = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  std::vector<PointId> active;
  dynamics::SparseMatrix op;
  std::size_t next_row = 0;
  std::size_t next_event = 0;

  auto apply_events = [&](Step step) {
    bool changed = false;
    while (next_event < spec.deposition.layers.size() && spec.deposition.layers[next_event].activation_step == step) {
      const dynamics::Layer& layer = spec.deposition.layers[next_event];
      for (PointId id : layer.point_ids) {
        const double start = spec.initial_temps.empty() ? layer.deposition_temp : spec.initial_temps[id];
        u[static_cast<Eigen::Index>(id)] = start - prm.ambient_temp;
      }
      ++next_event;
      changed = true;
    }
    if (!changed) return;
    active = fine_active_set(spec.deposition, step, prm.respect_active_window);
    Points sub(static_cast<Eigen::Index>(active.size()), 3);
    for (std::size_t i = 0; i < active.size(); ++i)
      sub.row(static_cast<Eigen::Index>(i)) = spec.positions.row(static_cast<Eigen::Index>(active[i]));
    op = dynamics::diffusion_step(sub, prm.neighbors, prm.diffusivity, dt_fine, prm.boundary_loss);
  };

  auto record = [&](Step step) {
    if (next_row >= stored.size() || stored[next_row] != step) return;
    const auto r = static_cast<Eigen::Index>(next_row++);
    for (PointId id : active) temps(r, static_cast<Eigen::Index>(id)) = u[static_cast<Eigen::Index>(id)] + prm.ambient_temp;
  };

  // Skip layers scheduled before step 0 is impossible (validated >= 0).
  apply_events(0);
  record(0);
  Eigen::VectorXd ua;
  for (Step step = 0; step < prm.horizon; ++step) {
    if (!active.empty()) {
      ua.resize(static_cast<Eigen::Index>(active.size()));
      for (std::size_t i = 0; i < active.size(); ++i) ua[static_cast<Eigen::Index>(i)] = u[static_cast<Eigen::Index>(active[i])];
      for (int s = 0; s < prm.substeps; ++s) ua = op * ua;
      for (std::size_t i = 0; i < active.size(); ++i) u[static_cast<Eigen::Index>(active[i])] = ua[static_cast<Eigen::Index>(i)];
    }
    apply_events(step + 1);
    record(step + 1);
  }

  return GroundTruthField(spec.positions, spec.deposition, std::move(stored), std::move(temps), prm.dt, prm.substeps,
                          prm.ambient_temp, prm.respect_active_window);
}

// ---------------------------------------------------------------------------
// Camera and frames

void CameraModel::validate() const {
  if (width < 1 || height < 1) throw InvalidArgument("camera dimensions must be positive");
  if (!(fov_deg > 0.0 && fov_deg < 180.0)) throw InvalidArgument("camera field of view must lie in (0, 180) degrees");
}

double CameraModel::focal_px() const {
  return 0.5 * width / std::tan(0.5 * fov_deg * std::numbers::pi / 180.0);
}

Vec3 CameraModel::ray_direction(int col, int row) const {
  const double f = focal_px();
  return Vec3(1.0, (col + 0.5 - 0.5 * width) / f, (row + 0.5 - 0.5 * height) / f);
}

std::optional<Eigen::Vector2d> CameraModel::project(const Vec3& p) const {
  if (!(p.x() > 0.0)) return std::nullopt;
  const double f = focal_px();
  return Eigen::Vector2d(f * p.y() / p.x() + 0.5 * width - 0.5, f * p.z() / p.x() + 0.5 * height - 0.5);
}

SensorFrame sample_image(const GroundTruthField& field, const geometry::MeshRayCaster& mesh,
                         const geometry::SensorPose& pose, Step k, const CameraModel& camera) {
  camera.validate();
  pose.validate();
  field.row(k);  // throws when k is not stored

  SensorFrame frame;
  frame.width = camera.width;
  frame.height = camera.height;
  frame.pose = pose;
  frame.step = k;
  frame.values = Eigen::MatrixXd::Constant(camera.height, camera.width, field.ambient_temp());
  frame.pixel_positions = Points::Constant(static_cast<Eigen::Index>(camera.width) * camera.height, 3, kNaN);

  for (int row = 0; row < camera.height; ++row) {
    for (int col = 0; col < camera.width; ++col) {
      const Vec3 dir = pose.rotation * camera.ray_direction(col, row);
      const auto hit = mesh.intersect(pose.position, dir);
      if (!hit) continue;
      const auto pixel = static_cast<Eigen::Index>(frame.pixel_index(col, row));
      frame.pixel_positions.row(pixel) = hit->point.transpose();
      if (const auto fine = field.nearest_active(hit->point, k)) frame.values(row, col) = field.temperature(k, *fine);
    }
  }
  return frame;
}

SensorFrame add_noise(const SensorFrame& frame, double sigma, std::uint64_t seed) {
  if (!(sigma >= 0.0)) throw InvalidArgument("noise standard deviation must be non-negative");
  SensorFrame noisy = frame;
  if (sigma == 0.0) return noisy;
  rng::Engine engine(seed);
  for (int row = 0; row < frame.height; ++row)
    for (int col = 0; col < frame.width; ++col)
      if (frame.hit(frame.pixel_index(col, row))) noisy.values(row, col) += sigma * rng::standard_normal(engine);
  return noisy;
}

void write_step_csv(const GroundTruthField& field, Step k, const std::filesystem::path& path) {
  const Eigen::Index r = field.row(k);
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "point_id,x,y,z,temp,active\n" << std::setprecision(12);
  const Points& pts = field.fine_points();
  for (Eigen::Index i = 0; i < pts.rows(); ++i) {
    const double t = field.temps()(r, i);
    out << i << ',' << pts(i, 0) << ',' << pts(i, 1) << ',' << pts(i, 2) << ',';
    if (std::isnan(t))
      out << "nan,0\n";
    else
      out << t << ",1\n";
  }
  if (!out) throw IoError("error writing " + path.string());
}

}  // namespace activetherm::groundtruth
