#include "activetherm/spatial.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <queue>

namespace activetherm {

namespace {

constexpr std::size_t kLeafSize = 8;

struct Candidate {
  double dist2;
  std::size_t index;
  bool operator<(const Candidate& other) const {
    return dist2 < other.dist2 || (dist2 == other.dist2 && index < other.index);
  }
};

}  // namespace

KdTree::KdTree(Points points) : points_(std::move(points)) {
  order_.resize(size());
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  if (!order_.empty()) {
    nodes_.reserve(2 * size() / kLeafSize + 2);
    build(0, order_.size());
  }
}

std::size_t KdTree::build(std::size_t begin, std::size_t end) {
  const std::size_t id = nodes_.size();
  nodes_.push_back(Node{});
  if (end - begin <= kLeafSize) {
    nodes_[id].begin = begin;
    nodes_[id].end = end;
    return id;
  }
  Eigen::Vector3d lo = Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity());
  Eigen::Vector3d hi = -lo;
  for (std::size_t i = begin; i < end; ++i) {
    lo = lo.cwiseMin(points_.row(order_[i]).transpose());
    hi = hi.cwiseMax(points_.row(order_[i]).transpose());
  }
  int axis = 0;
  (hi - lo).maxCoeff(&axis);
  const std::size_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](std::size_t a, std::size_t b) {
                     const double ca = points_(a, axis), cb = points_(b, axis);
                     return ca < cb || (ca == cb && a < b);
                   });
  const double split = points_(order_[mid], axis);
  const std::size_t left = build(begin, mid);
  const std::size_t right = build(mid, end);
  Node& node = nodes_[id];
  node.axis = axis;
  node.split = split;
  node.left = left;
  node.right = right;
  return id;
}

std::optional<std::size_t> KdTree::nearest(const Vec3& query, const Filter& accept) const {
  if (nodes_.empty()) return std::nullopt;
  Candidate best{std::numeric_limits<double>::infinity(), std::numeric_limits<std::size_t>::max()};

  auto visit = [&](auto&& self, std::size_t id) -> void {
    const Node& node = nodes_[id];
    if (node.axis < 0) {
      for (std::size_t i = node.begin; i < node.end; ++i) {
        const std::size_t p = order_[i];
        const Candidate c{(points_.row(p).transpose() - query).squaredNorm(), p};
        if (c < best && (!accept || accept(p))) best = c;
      }
      return;
    }
    const double diff = query[node.axis] - node.split;
    const std::size_t near = diff < 0.0 ? node.left : node.right;
    const std::size_t far = diff < 0.0 ? node.right : node.left;
    self(self, near);
    if (diff * diff <= best.dist2) self(self, far);
  };
  visit(visit, 0);

  if (best.index == std::numeric_limits<std::size_t>::max()) return std::nullopt;
  return best.index;
}

std::vector<std::size_t> KdTree::k_nearest(const Vec3& query, std::size_t k,
                                           std::optional<std::size_t> exclude) const {
  std::vector<std::size_t> result;
  if (nodes_.empty() || k == 0) return result;
  std::priority_queue<Candidate> heap;  // worst candidate on top

  auto visit = [&](auto&& self, std::size_t id) -> void {
    const Node& node = nodes_[id];
    if (node.axis < 0) {
      for (std::size_t i = node.begin; i < node.end; ++i) {
        const std::size_t p = order_[i];
        if (exclude && *exclude == p) continue;
        const Candidate c{(points_.row(p).transpose() - query).squaredNorm(), p};
        if (heap.size() < k) {
          heap.push(c);
        } else if (c < heap.top()) {
          heap.pop();
          heap.push(c);
        }
      }
      return;
    }
    const double diff = query[node.axis] - node.split;
    const std::size_t near = diff < 0.0 ? node.left : node.right;
    const std::size_t far = diff < 0.0 ? node.right : node.left;
    self(self, near);
    if (heap.size() < k || diff * diff <= heap.top().dist2) self(self, far);
  };
  visit(visit, 0);

  result.resize(heap.size());
  for (std::size_t i = heap.size(); i-- > 0;) {
    result[i] = heap.top().index;
    heap.pop();
  }
  return result;
}

}  // namespace activetherm
