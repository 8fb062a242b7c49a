#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "activetherm/types.hpp"

namespace activetherm {

// Static 3-d tree over a point cloud. Queries break distance ties towards the
// lowest point index, so results are deterministic for degenerate inputs.
class KdTree {
 public:
  using Filter = std::function<bool(std::size_t)>;

  KdTree() = default;
  explicit KdTree(Points points);

  std::size_t size() const { return static_cast<std::size_t>(points_.rows()); }
  const Points& points() const { return points_; }

  // Nearest point accepted by `accept` (all points when empty).
  std::optional<std::size_t> nearest(const Vec3& query, const Filter& accept = {}) const;

  // Up to k nearest points ordered by (distance, index); `exclude` is skipped.
  std::vector<std::size_t> k_nearest(const Vec3& query, std::size_t k,
                                     std::optional<std::size_t> exclude = std::nullopt) const;

 private:
  struct Node {
    int axis = -1;  // -1 marks a leaf
    double split = 0.0;
    std::size_t begin = 0, end = 0;  // leaf range in order_
    std::size_t left = 0, right = 0;
  };

  std::size_t build(std::size_t begin, std::size_t end);

  Points points_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
};

}  // namespace activetherm
