#pragma once

#include <array>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "activetherm/types.hpp"

namespace activetherm::geometry {

using Face = std::array<std::size_t, 3>;

struct TriMesh {
  Points vertices;
  std::vector<Face> faces;

  std::size_t vertex_count() const { return static_cast<std::size_t>(vertices.rows()); }
  std::size_t face_count() const { return faces.size(); }

  // Throws InvalidArgument if a face references a missing vertex.
  void validate() const;
};

// Wavefront OBJ subset: `v x y z` and triangular `f i j k` records (1-based,
// `i/t/n` forms accepted). Comments and vn/vt/s/o/g/mtllib/usemtl records are
// skipped. Quads are rejected.
TriMesh load_mesh(const std::filesystem::path& path);
TriMesh parse_obj(std::istream& in, std::string_view source_name = "<stream>");
void save_obj(const TriMesh& mesh, const std::filesystem::path& path);

struct BoundingBox {
  Vec3 min_corner = Vec3::Zero();
  Vec3 max_corner = Vec3::Zero();

  Vec3 center() const { return 0.5 * (min_corner + max_corner); }
  Vec3 extent() const { return max_corner - min_corner; }
};

BoundingBox bounding_box(const TriMesh& mesh);
BoundingBox bounding_box(const Points& points);

struct GridDims {
  int x = 1, y = 1, z = 1;
};

// Reduced set of surface vertices (plus optional manually added points) that
// carry the estimated state. Control-point ids are row indices of
// positions(): mesh-vertex points first, extra points after.
class ControlPointSet {
 public:
  ControlPointSet() = default;

  // Rejects duplicate or out-of-range vertex indices.
  static ControlPointSet from_vertices(const TriMesh& mesh, std::vector<std::size_t> vertex_indices);

  void add_extra_point(const Vec3& position, bool interior);

  std::size_t size() const { return static_cast<std::size_t>(positions_.rows()); }
  bool empty() const { return size() == 0; }

  const std::vector<std::size_t>& vertex_indices() const { return indices_; }
  const std::vector<Vec3>& extra_points() const { return extra_points_; }
  const Points& positions() const { return positions_; }
  Vec3 position(PointId id) const { return positions_.row(static_cast<Eigen::Index>(id)).transpose(); }
  bool interior(PointId id) const { return interior_.at(id); }
  const std::vector<bool>& interior_mask() const { return interior_; }

  // Componentwise mean of all positions.
  const Vec3& center() const { return center_; }

  // Mean of the listed points' positions.
  Vec3 centroid_of(std::span<const PointId> ids) const;

  // Debug export, header `index,x,y,z,interior`.
  void write_csv(const std::filesystem::path& path) const;

 private:
  void recompute_center();

  std::vector<std::size_t> indices_;
  std::vector<Vec3> extra_points_;
  Points positions_;
  std::vector<bool> interior_;
  Vec3 center_ = Vec3::Zero();
};

// Places grid.x * grid.y * grid.z points uniformly over the mesh bounding box
// and keeps the vertex nearest to each (first occurrence wins on duplicates).
ControlPointSet select_control_points(const TriMesh& mesh, GridDims grid);

// Rotation R with R * e1 == x_o. Identity for e1, a half turn about e3 for -e1,
// otherwise the minimal rotation about normalize(e1 x x_o).
Mat3 rotation_from_orientation(const Vec3& x_o);

struct SensorPose {
  Vec3 position = Vec3::Zero();
  Vec3 orientation = Vec3::UnitX();
  Mat3 rotation = Mat3::Identity();

  // Orientation is normalized; rotation follows rotation_from_orientation.
  static SensorPose looking_along(const Vec3& position, const Vec3& orientation);

  void validate() const;

  Vec3 to_sensor(const Vec3& world) const { return rotation.transpose() * (world - position); }
  Vec3 to_world(const Vec3& sensor) const { return position + rotation * sensor; }

  // Applies the rigid motion p -> Q p + t to the pose.
  SensorPose transformed(const Mat3& q, const Vec3& t) const;
};

// Gamma_rot = R^T (Gamma - x_s), row per point.
Points frame_change(const Points& world, const SensorPose& pose);
Points frame_change(const TriMesh& mesh, const SensorPose& pose);
Points frame_change_inverse(const Points& sensor, const SensorPose& pose);

// Half-space visibility heuristic in the sensor frame (sensor at origin,
// looking along +x). Averages the x coordinate of the mesh vertices in the
// slab |y| <= slice_fraction * (y_max - y_min) and reports the control points
// strictly in front of that average. Result is ascending.
std::vector<std::size_t> partition_visible(const Points& mesh_rot, const Points& control_rot,
                                           double slice_fraction = 0.1);

// Selection matrix C_k: row r picks state entry rows()[r].
class ObservationMatrix {
 public:
  ObservationMatrix() = default;
  ObservationMatrix(std::vector<std::size_t> rows, std::size_t state_dim);

  const std::vector<std::size_t>& rows() const { return rows_; }
  std::size_t state_dim() const { return state_dim_; }
  std::size_t row_count() const { return rows_.size(); }
  bool empty() const { return rows_.empty(); }

  Eigen::MatrixXd dense() const;
  Eigen::VectorXd apply(const Eigen::VectorXd& x) const;

 private:
  std::vector<std::size_t> rows_;
  std::size_t state_dim_ = 0;
};

// Sorts the observed indices ascending; rejects duplicates and out-of-range
// entries.
ObservationMatrix build_observation_matrix(std::vector<std::size_t> observed, std::size_t state_dim);

}  // namespace activetherm::geometry
