#include "activetherm/raycast.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace activetherm::geometry {

namespace {

constexpr std::size_t kLeafTriangles = 4;

bool slab_hit(const Vec3& lo, const Vec3& hi, const Vec3& origin, const Vec3& inv_dir, double t_min,
              double t_max) {
  for (int a = 0; a < 3; ++a) {
    double t0 = (lo[a] - origin[a]) * inv_dir[a];
    double t1 = (hi[a] - origin[a]) * inv_dir[a];
    if (t0 > t1) std::swap(t0, t1);
    // NaN from 0 * inf (ray in the slab plane) leaves the bounds untouched.
    if (t0 > t_min) t_min = t0;
    if (t1 < t_max) t_max = t1;
    if (t_min > t_max) return false;
  }
  return true;
}

}  // namespace

std::optional<double> intersect_triangle(const Vec3& origin, const Vec3& dir, const Vec3& a, const Vec3& b,
                                         const Vec3& c, double t_min, double t_max) {
  const Vec3 e1 = b - a;
  const Vec3 e2 = c - a;
  const Vec3 p = dir.cross(e2);
  const double det = e1.dot(p);
  const double scale = e1.norm() * e2.norm() * dir.norm();
  if (std::abs(det) <= 1e-14 * scale) return std::nullopt;
  const double inv = 1.0 / det;
  const Vec3 s = origin - a;
  const double u = s.dot(p) * inv;
  if (u < 0.0 || u > 1.0) return std::nullopt;
  const Vec3 q = s.cross(e1);
  const double v = dir.dot(q) * inv;
  if (v < 0.0 || u + v > 1.0) return std::nullopt;
  const double t = e2.dot(q) * inv;
  if (t <= t_min || t >= t_max) return std::nullopt;
  return t;
}

MeshRayCaster::MeshRayCaster(TriMesh mesh) : mesh_(std::move(mesh)) {
  mesh_.validate();
  const std::size_t n = mesh_.face_count();
  centroids_.reserve(n);
  for (const Face& f : mesh_.faces) {
    centroids_.push_back((mesh_.vertices.row(static_cast<Eigen::Index>(f[0])) +
                          mesh_.vertices.row(static_cast<Eigen::Index>(f[1])) +
                          mesh_.vertices.row(static_cast<Eigen::Index>(f[2])))
                             .transpose() /
                         3.0);
  }
  order_.resize(n);
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  if (n > 0) {
    nodes_.reserve(2 * n / kLeafTriangles + 2);
    build(0, n);
  }
}

std::size_t MeshRayCaster::build(std::size_t begin, std::size_t end) {
  const std::size_t id = nodes_.size();
  nodes_.push_back(Node{});
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  Vec3 clo = lo, chi = hi;
  for (std::size_t i = begin; i < end; ++i) {
    for (std::size_t v : mesh_.faces[order_[i]]) {
      lo = lo.cwiseMin(mesh_.vertices.row(static_cast<Eigen::Index>(v)).transpose());
      hi = hi.cwiseMax(mesh_.vertices.row(static_cast<Eigen::Index>(v)).transpose());
    }
    clo = clo.cwiseMin(centroids_[order_[i]]);
    chi = chi.cwiseMax(centroids_[order_[i]]);
  }
  nodes_[id].lo = lo;
  nodes_[id].hi = hi;
  if (end - begin <= kLeafTriangles) {
    nodes_[id].begin = begin;
    nodes_[id].end = end;
    return id;
  }
  int axis = 0;
  (chi - clo).maxCoeff(&axis);
  const std::size_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](std::size_t a, std::size_t b) { return centroids_[a][axis] < centroids_[b][axis]; });
  const std::size_t left = build(begin, mid);
  const std::size_t right = build(mid, end);
  nodes_[id].leaf = false;
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

template <typename Visitor>
void MeshRayCaster::traverse(const Vec3& origin, const Vec3& dir, double t_min, double& t_max,
                             Visitor&& visit) const {
  if (nodes_.empty()) return;
  const Vec3 inv_dir = dir.cwiseInverse();
  std::vector<std::size_t> stack{0};
  while (!stack.empty()) {
    const Node& node = nodes_[stack.back()];
    stack.pop_back();
    if (!slab_hit(node.lo, node.hi, origin, inv_dir, t_min, t_max)) continue;
    if (node.leaf) {
      for (std::size_t i = node.begin; i < node.end; ++i)
        if (visit(order_[i])) return;
    } else {
      stack.push_back(node.right);
      stack.push_back(node.left);
    }
  }
}

std::optional<RayHit> MeshRayCaster::intersect(const Vec3& origin, const Vec3& dir, double t_min,
                                               double t_max) const {
  std::optional<RayHit> best;
  traverse(origin, dir, t_min, t_max, [&](std::size_t f) {
    const Face& face = mesh_.faces[f];
    const auto t = intersect_triangle(origin, dir, mesh_.vertices.row(static_cast<Eigen::Index>(face[0])).transpose(),
                                      mesh_.vertices.row(static_cast<Eigen::Index>(face[1])).transpose(),
                                      mesh_.vertices.row(static_cast<Eigen::Index>(face[2])).transpose(), t_min, t_max);
    // Equal t across a shared edge: keep the lower face index.
    if (t && (!best || *t < best->t || (*t == best->t && f < best->face))) {
      best = RayHit{*t, f, origin + *t * dir};
      t_max = std::nextafter(*t, std::numeric_limits<double>::infinity());
    }
    return false;
  });
  return best;
}

bool MeshRayCaster::segment_blocked(const Vec3& from, const Vec3& to, double eps) const {
  const Vec3 dir = to - from;
  double t_max = 1.0 - eps;
  bool blocked = false;
  traverse(from, dir, eps, t_max, [&](std::size_t f) {
    const Face& face = mesh_.faces[f];
    blocked = intersect_triangle(from, dir, mesh_.vertices.row(static_cast<Eigen::Index>(face[0])).transpose(),
                                 mesh_.vertices.row(static_cast<Eigen::Index>(face[1])).transpose(),
                                 mesh_.vertices.row(static_cast<Eigen::Index>(face[2])).transpose(), eps, 1.0 - eps)
                  .has_value();
    return blocked;
  });
  return blocked;
}

}  // namespace activetherm::geometry
