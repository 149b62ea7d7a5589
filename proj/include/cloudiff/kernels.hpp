#pragma once

// Data-parallel kernels shared by the pipeline stages. Each OpenMP kernel has
// a plain serial counterpart in `serial::` that computes the same result; the
// tests check them against each other and bench/ times them side by side.

#include "cloudiff/geometry.hpp"
#include "cloudiff/kdtree.hpp"

#include <cstddef>
#include <vector>

namespace cloudiff::kernels {

/// Number of OpenMP threads to use for `requested` (0 = runtime default).
int resolve_threads(int requested);

/// Distance from every query point to its nearest neighbour in `index`.
std::vector<double> nearest_distances(const PointCloud& queries,
                                      const KdTree& index, int threads = 0);

/// Stable subset of `cloud` whose nearest distance to `index` is <= (or >=)
/// `threshold`. An empty index makes every distance +infinity.
PointCloud select_within(const PointCloud& cloud, const KdTree& index,
                         double threshold, int threads = 0);
PointCloud select_beyond(const PointCloud& cloud, const KdTree& index,
                         double threshold, int threads = 0);

namespace serial {

std::vector<double> nearest_distances(const PointCloud& queries,
                                      const KdTree& index);
PointCloud select_within(const PointCloud& cloud, const KdTree& index,
                         double threshold);
PointCloud select_beyond(const PointCloud& cloud, const KdTree& index,
                         double threshold);

}  // namespace serial
}  // namespace cloudiff::kernels
