#include "cloudiff/kernels.hpp"

#include <omp.h>

#include <cmath>
#include <limits>

namespace cloudiff::kernels {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

PointCloud gather(const PointCloud& cloud, const std::vector<double>& dist,
                  double threshold, bool within) {
  PointCloud out;
  out.frame_id = cloud.frame_id;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const bool keep = within ? dist[i] <= threshold : dist[i] >= threshold;
    if (keep) out.points.push_back(cloud.points[i]);
  }
  return out;
}

}  // namespace

int resolve_threads(int requested) {
  return requested > 0 ? requested : omp_get_max_threads();
}

std::vector<double> nearest_distances(const PointCloud& queries,
                                      const KdTree& index, int threads) {
  const auto n = static_cast<std::ptrdiff_t>(queries.size());
  std::vector<double> out(queries.size(), kInf);
  if (index.empty()) return out;
#pragma omp parallel for schedule(static) num_threads(resolve_threads(threads))
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    out[i] = nearest_distance(queries.points[i], index);
  }
  return out;
}

PointCloud select_within(const PointCloud& cloud, const KdTree& index,
                         double threshold, int threads) {
  return gather(cloud, nearest_distances(cloud, index, threads), threshold,
                true);
}

PointCloud select_beyond(const PointCloud& cloud, const KdTree& index,
                         double threshold, int threads) {
  return gather(cloud, nearest_distances(cloud, index, threads), threshold,
                false);
}

namespace serial {

std::vector<double> nearest_distances(const PointCloud& queries,
                                      const KdTree& index) {
  std::vector<double> out(queries.size(), kInf);
  if (index.empty()) return out;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    out[i] = nearest_distance(queries.points[i], index);
  }
  return out;
}

PointCloud select_within(const PointCloud& cloud, const KdTree& index,
                         double threshold) {
  return gather(cloud, nearest_distances(cloud, index), threshold, true);
}

PointCloud select_beyond(const PointCloud& cloud, const KdTree& index,
                         double threshold) {
  return gather(cloud, nearest_distances(cloud, index), threshold, false);
}

}  // namespace serial
}  // namespace cloudiff::kernels
