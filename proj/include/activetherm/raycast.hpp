#pragma once

#include <limits>
#include <optional>
#include <vector>

#include "activetherm/geometry.hpp"

namespace activetherm::geometry {

struct RayHit {
  double t = 0.0;
  std::size_t face = 0;
  Vec3 point = Vec3::Zero();
};

// Moller-Trumbore intersection; returns the ray parameter of a hit in
// (t_min, t_max), two-sided.
std::optional<double> intersect_triangle(const Vec3& origin, const Vec3& dir, const Vec3& a, const Vec3& b,
                                         const Vec3& c, double t_min = 0.0,
                                         double t_max = std::numeric_limits<double>::infinity());

// Bounding-volume hierarchy over a triangle mesh. Immutable after
// construction.
class MeshRayCaster {
 public:
  explicit MeshRayCaster(TriMesh mesh);

  const TriMesh& mesh() const { return mesh_; }

  // Nearest hit along origin + t * dir for t in (t_min, t_max).
  std::optional<RayHit> intersect(const Vec3& origin, const Vec3& dir, double t_min = 1e-9,
                                  double t_max = std::numeric_limits<double>::infinity()) const;

  // True if any triangle crosses the open segment from -> to, ignoring the
  // relative margin `eps` at both ends.
  bool segment_blocked(const Vec3& from, const Vec3& to, double eps = 1e-6) const;

 private:
  struct Node {
    Eigen::Vector3d lo = Eigen::Vector3d::Zero(), hi = Eigen::Vector3d::Zero();
    std::size_t begin = 0, end = 0;  // leaf triangle range in order_
    std::size_t left = 0, right = 0;
    bool leaf = true;
  };

  std::size_t build(std::size_t begin, std::size_t end);
  template <typename Visitor>
  void traverse(const Vec3& origin, const Vec3& dir, double t_min, double& t_max, Visitor&& visit) const;

  TriMesh mesh_;
  std::vector<Vec3> centroids_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
};

}  // namespace activetherm::geometry
