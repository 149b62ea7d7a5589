#pragma once

#include "cloudiff/geometry.hpp"

#include <cstddef>
#include <cstdint>
#include <vector>

namespace cloudiff {

// Static 3D kd-tree over a fixed point cloud. The cloud is copied at build
// time and never changes, so concurrent queries are safe.
class KdTree {
 public:
  struct Neighbor {
    std::size_t index = 0;  // index into the indexed cloud
    double squared_distance = 0.0;
  };

  KdTree() = default;
  explicit KdTree(const PointCloud& cloud, std::size_t leaf_size = 12);

  [[nodiscard]] std::size_t size() const { return points_.size(); }
  [[nodiscard]] bool empty() const { return points_.empty(); }

  /// Exact nearest neighbour; ties resolve to the lowest cloud index.
  /// Throws std::logic_error on an empty tree.
  [[nodiscard]] Neighbor nearest(const Point3& query) const;

  /// The k nearest points sorted by ascending distance (fewer if the cloud is
  /// smaller than k).
  [[nodiscard]] std::vector<Neighbor> knn(const Point3& query,
                                          std::size_t k) const;

  /// Indices of all points within `radius` (inclusive), ascending.
  [[nodiscard]] std::vector<std::size_t> radius_search(const Point3& query,
                                                       double radius) const;

  /// Point `i` in the original cloud order.
  [[nodiscard]] const Point3& point(std::size_t i) const {
    return points_[position_of_[i]];
  }

 private:
  struct Node {
    std::uint32_t begin = 0;
    std::uint32_t end = 0;
    std::int32_t left = -1;
    std::int32_t right = -1;
    int axis = 0;
    double split = 0.0;
  };

  std::int32_t build(std::uint32_t begin, std::uint32_t end);
  void nearest_impl(std::int32_t node, const Point3& q, Neighbor& best) const;

  std::size_t leaf_size_ = 12;
  std::vector<Node> nodes_;
  std::vector<Point3> points_;          // reordered copy
  std::vector<std::size_t> original_;   // reordered slot -> cloud index
  std::vector<std::size_t> position_of_;  // cloud index -> reordered slot
};

/// Euclidean distance from `p` to the closest indexed point. The empty-cloud
/// case is an error: callers decide what an empty reference cloud means.
double nearest_distance(const Point3& p, const KdTree& index);

}  // namespace cloudiff
