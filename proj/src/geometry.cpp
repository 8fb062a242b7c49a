#include "activetherm/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "activetherm/errors.hpp"
#include "activetherm/spatial.hpp"

namespace activetherm::geometry {

void TriMesh::validate() const {
  for (std::size_t f = 0; f < faces.size(); ++f) {
    for (std::size_t idx : faces[f]) {
      if (idx >= vertex_count()) {
        std::ostringstream msg;
        msg << "face " << f << " references vertex " << idx << " but mesh has " << vertex_count()
            << " vertices";
        throw InvalidArgument(msg.str());
      }
    }
  }
}

BoundingBox bounding_box(const Points& points) {
  if (points.rows() == 0) throw InvalidArgument("bounding box of an empty point set");
  BoundingBox box;
  box.min_corner = points.colwise().minCoeff().transpose();
  box.max_corner = points.colwise().maxCoeff().transpose();
  return box;
}

BoundingBox bounding_box(const TriMesh& mesh) { return bounding_box(mesh.vertices); }

// ---------------------------------------------------------------------------
// ControlPointSet

ControlPointSet ControlPointSet::from_vertices(const TriMesh& mesh, std::vector<std::size_t> vertex_indices) {
  ControlPointSet set;
  std::vector<bool> seen(mesh.vertex_count(), false);
  for (std::size_t idx : vertex_indices) {
    if (idx >= mesh.vertex_count())
      throw InvalidArgument("control point references vertex " + std::to_string(idx) + " out of range");
    if (seen[idx]) throw InvalidArgument("duplicate control point vertex " + std::to_string(idx));
    seen[idx] = true;
  }
  set.indices_ = std::move(vertex_indices);
  set.positions_.resize(static_cast<Eigen::Index>(set.indices_.size()), 3);
  for (std::size_t i = 0; i < set.indices_.size(); ++i)
    set.positions_.row(static_cast<Eigen::Index>(i)) = mesh.vertices.row(static_cast<Eigen::Index>(set.indices_[i]));
  set.interior_.assign(set.indices_.size(), false);
  set.recompute_center();
  return set;
}

void ControlPointSet::add_extra_point(const Vec3& position, bool interior) {
  const Eigen::Index n = positions_.rows();
  positions_.conservativeResize(n + 1, 3);
  positions_.row(n) = position.transpose();
  extra_points_.push_back(position);
  interior_.push_back(interior);
  recompute_center();
}

void ControlPointSet::recompute_center() {
  center_ = positions_.rows() == 0 ? Vec3::Zero() : Vec3(positions_.colwise().mean().transpose());
}

Vec3 ControlPointSet::centroid_of(std::span<const PointId> ids) const {
  if (ids.empty()) throw InvalidArgument("centroid of an empty id list");
  Vec3 sum = Vec3::Zero();
  for (PointId id : ids) {
    if (id >= size()) throw InvalidArgument("unknown control point id " + std::to_string(id));
    sum += position(id);
  }
  return sum / static_cast<double>(ids.size());
}

void ControlPointSet::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "index,x,y,z,interior\n" << std::setprecision(17);
  for (std::size_t i = 0; i < size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    out << i << ',' << positions_(r, 0) << ',' << positions_(r, 1) << ',' << positions_(r, 2) << ','
        << (interior_[i] ? 1 : 0) << '\n';
  }
  if (!out) throw IoError("error writing " + path.string());
}

ControlPointSet select_control_points(const TriMesh& mesh, GridDims grid) {
  if (mesh.vertex_count() == 0) throw InvalidArgument("select_control_points: empty mesh");
  if (grid.x < 1 || grid.y < 1 || grid.z < 1) throw InvalidArgument("select_control_points: grid dims must be >= 1");

  const BoundingBox box = bounding_box(mesh);
  const std::array<int, 3> dims{grid.x, grid.y, grid.z};
  auto coordinate = [&](int axis, int i) {
    if (dims[axis] == 1) return box.center()[axis];
    const double t = static_cast<double>(i) / (dims[axis] - 1);
    return box.min_corner[axis] + t * box.extent()[axis];
  };

  const KdTree tree(mesh.vertices);
  std::vector<std::size_t> chosen;
  std::vector<bool> taken(mesh.vertex_count(), false);
  // Grid linear index runs x fastest, then y, then z.
  for (int k = 0; k < grid.z; ++k) {
    for (int j = 0; j < grid.y; ++j) {
      for (int i = 0; i < grid.x; ++i) {
        const Vec3 g(coordinate(0, i), coordinate(1, j), coordinate(2, k));
        const std::size_t v = *tree.nearest(g);
        if (!taken[v]) {
          taken[v] = true;
          chosen.push_back(v);
        }
      }
    }
  }
  return ControlPointSet::from_vertices(mesh, std::move(chosen));
}

// ---------------------------------------------------------------------------
// Rotations and frames

Mat3 rotation_from_orientation(const Vec3& x_o) {
  const double norm = x_o.norm();
  if (!std::isfinite(norm) || std::abs(norm - 1.0) > 1e-6)
    throw InvalidArgument("sensor orientation must be a unit vector");
  const Vec3 x = x_o / norm;

  // Axis-angle form with cos = e1.x and sin = |e1 x x|; using the normalized
  // axis keeps R orthonormal and R e1 == x to rounding even near +-e1.
  const Vec3 v = Vec3::UnitX().cross(x);
  const double s = v.norm();
  const double c = x.x();
  if (s == 0.0) {
    if (c > 0.0) return Mat3::Identity();
    Mat3 half_turn = Mat3::Identity();
    half_turn(0, 0) = -1.0;
    half_turn(1, 1) = -1.0;
    return half_turn;
  }
  const Vec3 a = v / s;
  Mat3 skew;
  skew << 0.0, -a.z(), a.y(),
          a.z(), 0.0, -a.x(),
          -a.y(), a.x(), 0.0;
  return c * Mat3::Identity() + s * skew + (1.0 - c) * a * a.transpose();
}

SensorPose SensorPose::looking_along(const Vec3& position, const Vec3& orientation) {
  const double n = orientation.norm();
  if (!(n > 0.0) || !std::isfinite(n)) throw InvalidArgument("sensor orientation must be non-zero");
  SensorPose pose;
  pose.position = position;
  pose.orientation = orientation / n;
  pose.rotation = rotation_from_orientation(pose.orientation);
  return pose;
}

void SensorPose::validate() const {
  if (!position.allFinite()) throw InvalidArgument("sensor position is not finite");
  if (std::abs(orientation.norm() - 1.0) > 1e-9) throw InvalidArgument("sensor orientation is not a unit vector");
  if ((rotation * Vec3::UnitX() - orientation).norm() > 1e-9)
    throw InvalidArgument("sensor rotation does not map e1 to the orientation");
  if ((rotation.transpose() * rotation - Mat3::Identity()).norm() > 1e-9)
    throw InvalidArgument("sensor rotation is not orthonormal");
}

SensorPose SensorPose::transformed(const Mat3& q, const Vec3& t) const {
  SensorPose out;
  out.position = q * position + t;
  out.orientation = q * orientation;
  out.rotation = q * rotation;
  return out;
}

Points frame_change(const Points& world, const SensorPose& pose) {
  // Row form of R^T (v - x_s).
  return (world.rowwise() - pose.position.transpose()) * pose.rotation;
}

Points frame_change(const TriMesh& mesh, const SensorPose& pose) { return frame_change(mesh.vertices, pose); }

Points frame_change_inverse(const Points& sensor, const SensorPose& pose) {
  return (sensor * pose.rotation.transpose()).rowwise() + pose.position.transpose();
}

std::vector<std::size_t> partition_visible(const Points& mesh_rot, const Points& control_rot,
                                           double slice_fraction) {
  if (!(slice_fraction > 0.0 && slice_fraction <= 0.5))
    throw InvalidArgument("slice fraction must lie in (0, 0.5]");
  if (mesh_rot.rows() == 0) throw InvalidArgument("partition_visible: empty mesh");

  const double y_min = mesh_rot.col(1).minCoeff();
  const double y_max = mesh_rot.col(1).maxCoeff();
  const double half_width = slice_fraction * (y_max - y_min);

  double sum = 0.0;
  std::size_t count = 0;
  for (Eigen::Index i = 0; i < mesh_rot.rows(); ++i) {
    const double y = mesh_rot(i, 1);
    if (-half_width <= y && y <= half_width) {
      sum += mesh_rot(i, 0);
      ++count;
    }
  }
  if (count == 0)
    throw NumericalError("partition_visible: no mesh vertices in the central slice; the sensor does not face the object");
  const double x_bar = sum / static_cast<double>(count);

  std::vector<std::size_t> observed;
  for (Eigen::Index i = 0; i < control_rot.rows(); ++i)
    if (control_rot(i, 0) - x_bar < 0.0) observed.push_back(static_cast<std::size_t>(i));
  return observed;
}

// ---------------------------------------------------------------------------
// Observation matrix

ObservationMatrix::ObservationMatrix(std::vector<std::size_t> rows, std::size_t state_dim)
    : rows_(std::move(rows)), state_dim_(state_dim) {
  std::vector<bool> seen(state_dim, false);
  for (std::size_t r : rows_) {
    if (r >= state_dim)
      throw InvalidArgument("observation index " + std::to_string(r) + " >= state dimension " +
                            std::to_string(state_dim));
    if (seen[r]) throw InvalidArgument("duplicate observation index " + std::to_string(r));
    seen[r] = true;
  }
}

Eigen::MatrixXd ObservationMatrix::dense() const {
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows_.size()),
                                            static_cast<Eigen::Index>(state_dim_));
  for (std::size_t r = 0; r < rows_.size(); ++r) c(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(rows_[r])) = 1.0;
  return c;
}

Eigen::VectorXd ObservationMatrix::apply(const Eigen::VectorXd& x) const {
  if (static_cast<std::size_t>(x.size()) != state_dim_) throw InvalidArgument("observation: dimension mismatch");
  Eigen::VectorXd y(static_cast<Eigen::Index>(rows_.size()));
  for (std::size_t r = 0; r < rows_.size(); ++r) y[static_cast<Eigen::Index>(r)] = x[static_cast<Eigen::Index>(rows_[r])];
  return y;
}

ObservationMatrix build_observation_matrix(std::vector<std::size_t> observed, std::size_t state_dim) {
  std::sort(observed.begin(), observed.end());
  return ObservationMatrix(std::move(observed), state_dim);
}

}  // namespace activetherm::geometry
