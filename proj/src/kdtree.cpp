#include "cloudiff/kdtree.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <queue>
#include <stdexcept>

namespace cloudiff {

KdTree::KdTree(const PointCloud& cloud, std::size_t leaf_size)
    : leaf_size_(std::max<std::size_t>(leaf_size, 1)) {
  if (cloud.size() >= std::numeric_limits<std::uint32_t>::max()) {
    throw std::length_error("KdTree: cloud too large");
  }
  require_finite(cloud);
  original_.resize(cloud.size());
  std::iota(original_.begin(), original_.end(), 0);
  points_ = cloud.points;
  if (points_.empty()) return;

  nodes_.reserve(2 * cloud.size() / leaf_size_ + 2);
  build(0, static_cast<std::uint32_t>(points_.size()));

  // Reorder the point copy to match leaf order for cache-friendly scans.
  std::vector<Point3> reordered(points_.size());
  for (std::size_t slot = 0; slot < original_.size(); ++slot) {
    reordered[slot] = cloud.points[original_[slot]];
  }
  points_ = std::move(reordered);
  position_of_.resize(original_.size());
  for (std::size_t slot = 0; slot < original_.size(); ++slot) {
    position_of_[original_[slot]] = slot;
  }
}

std::int32_t KdTree::build(std::uint32_t begin, std::uint32_t end) {
  const auto id = static_cast<std::int32_t>(nodes_.size());
  nodes_.push_back({begin, end, -1, -1, 0, 0.0});
  if (end - begin <= leaf_size_) return id;

  Point3 lo = Point3::Constant(std::numeric_limits<double>::infinity());
  Point3 hi = -lo;
  for (std::uint32_t i = begin; i < end; ++i) {
    const Point3& p = points_[original_[i]];
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  int axis = 0;
  (hi - lo).maxCoeff(&axis);
  if (hi[axis] == lo[axis]) return id;  // all points coincide

  const std::uint32_t mid = begin + (end - begin) / 2;
  std::nth_element(original_.begin() + begin, original_.begin() + mid,
                   original_.begin() + end,
                   [&](std::size_t a, std::size_t b) {
                     return points_[a][axis] < points_[b][axis];
                   });
  const double split = points_[original_[mid]][axis];

  const std::int32_t left = build(begin, mid);
  const std::int32_t right = build(mid, end);
  nodes_[id].left = left;
  nodes_[id].right = right;
  nodes_[id].axis = axis;
  nodes_[id].split = split;
  return id;
}

void KdTree::nearest_impl(std::int32_t id, const Point3& q,
                          Neighbor& best) const {
  const Node& node = nodes_[id];
  if (node.left < 0) {
    for (std::uint32_t slot = node.begin; slot < node.end; ++slot) {
      const double d2 = (points_[slot] - q).squaredNorm();
      const std::size_t idx = original_[slot];
      if (d2 < best.squared_distance ||
          (d2 == best.squared_distance && idx < best.index)) {
        best = {idx, d2};
      }
    }
    return;
  }
  const double diff = q[node.axis] - node.split;
  const std::int32_t near = diff < 0.0 ? node.left : node.right;
  const std::int32_t far = diff < 0.0 ? node.right : node.left;
  nearest_impl(near, q, best);
  if (diff * diff <= best.squared_distance) nearest_impl(far, q, best);
}

KdTree::Neighbor KdTree::nearest(const Point3& query) const {
  if (points_.empty()) {
    throw std::logic_error("KdTree::nearest on an empty cloud");
  }
  Neighbor best{std::numeric_limits<std::size_t>::max(),
                std::numeric_limits<double>::infinity()};
  nearest_impl(0, query, best);
  return best;
}

std::vector<KdTree::Neighbor> KdTree::knn(const Point3& query,
                                          std::size_t k) const {
  std::vector<Neighbor> out;
  if (points_.empty() || k == 0) return out;
  k = std::min(k, points_.size());

  auto worse = [](const Neighbor& a, const Neighbor& b) {
    return a.squared_distance < b.squared_distance ||
           (a.squared_distance == b.squared_distance && a.index < b.index);
  };
  // Max-heap on distance holding the current k best.
  std::priority_queue<Neighbor, std::vector<Neighbor>, decltype(worse)> heap(
      worse);

  std::vector<std::int32_t> stack{0};
  while (!stack.empty()) {
    const Node& node = nodes_[stack.back()];
    stack.pop_back();
    if (node.left < 0) {
      for (std::uint32_t slot = node.begin; slot < node.end; ++slot) {
        const Neighbor cand{original_[slot],
                            (points_[slot] - query).squaredNorm()};
        if (heap.size() < k) {
          heap.push(cand);
        } else if (worse(cand, heap.top())) {
          heap.pop();
          heap.push(cand);
        }
      }
      continue;
    }
    const double diff = query[node.axis] - node.split;
    const std::int32_t near = diff < 0.0 ? node.left : node.right;
    const std::int32_t far = diff < 0.0 ? node.right : node.left;
    if (heap.size() < k || diff * diff <= heap.top().squared_distance) {
      stack.push_back(far);
    }
    stack.push_back(near);
  }

  out.resize(heap.size());
  for (std::size_t i = out.size(); i-- > 0;) {
    out[i] = heap.top();
    heap.pop();
  }
  return out;
}

std::vector<std::size_t> KdTree::radius_search(const Point3& query,
                                               double radius) const {
  std::vector<std::size_t> out;
  if (points_.empty() || radius < 0.0) return out;
  const double r2 = radius * radius;
  std::vector<std::int32_t> stack{0};
  while (!stack.empty()) {
    const Node& node = nodes_[stack.back()];
    stack.pop_back();
    if (node.left < 0) {
      for (std::uint32_t slot = node.begin; slot < node.end; ++slot) {
        if ((points_[slot] - query).squaredNorm() <= r2) {
          out.push_back(original_[slot]);
        }
      }
      continue;
    }
    const double diff = query[node.axis] - node.split;
    if (diff <= radius) stack.push_back(node.left);
    if (diff >= -radius) stack.push_back(node.right);
  }
  std::sort(out.begin(), out.end());
  return out;
}

double nearest_distance(const Point3& p, const KdTree& index) {
  return std::sqrt(index.nearest(p).squared_distance);
}

}  // namespace cloudiff
