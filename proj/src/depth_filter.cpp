#include "cloudiff/depth_filter.hpp"

#include "cloudiff/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cloudiff {

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) {
    throw std::invalid_argument("CameraIntrinsics: focal lengths must be > 0");
  }
  if (width <= 0 || height <= 0 || !(cx >= 0.0) || !(cx < width) ||
      !(cy >= 0.0) || !(cy < height)) {
    throw std::invalid_argument(
        "CameraIntrinsics: principal point outside the image");
  }
}

CameraIntrinsics CameraIntrinsics::from_fov(int width, int height,
                                            double hfov_rad) {
  CameraIntrinsics k;
  k.width = width;
  k.height = height;
  k.fx = 0.5 * width / std::tan(0.5 * hfov_rad);
  k.fy = k.fx;
  k.cx = 0.5 * (width - 1);
  k.cy = 0.5 * (height - 1);
  k.validate();
  return k;
}

std::size_t DepthImage::valid_count() const {
  return static_cast<std::size_t>(
      std::count_if(depth.begin(), depth.end(), [](double d) { return d > 0.0; }));
}

void FilterConfig::validate() const {
  if (!(depth_threshold > 0.0) || min_successes < 1 || window < 1) {
    throw std::invalid_argument(
        "FilterConfig: need depth_threshold > 0, alpha >= 1, window >= 1");
  }
}

DepthImage reproject_depth(const Keyframe& source, const Keyframe& target) {
  if (!(source.intrinsics == target.intrinsics)) {
    throw std::invalid_argument("reproject_depth: intrinsics differ");
  }
  const CameraIntrinsics& K = target.intrinsics;
  DepthImage out(K.width, K.height);

  // target_from_source = T_wt^-1 * T_ws
  const Pose rel = target.pose.inverse() * source.pose;
  const Matrix3 R = rel.rotation();
  const DepthImage& src = source.depth;
  for (int v = 0; v < src.height; ++v) {
    for (int u = 0; u < src.width; ++u) {
      const double d = src.at(u, v);
      if (!(d > 0.0)) continue;
      const Point3 p = R * source.intrinsics.backproject(u, v, d) + rel.t;
      if (!(p.z() > 0.0)) continue;
      const long tu = std::lround(K.fx * p.x() / p.z() + K.cx);
      const long tv = std::lround(K.fy * p.y() / p.z() + K.cy);
      if (tu < 0 || tv < 0 || tu >= K.width || tv >= K.height) continue;
      double& slot = out.at(static_cast<int>(tu), static_cast<int>(tv));
      if (!(slot > 0.0) || p.z() < slot) slot = p.z();
    }
  }
  return out;
}

DepthImage temporal_filter(std::span<const Keyframe> window,
                           std::int64_t center_id, const FilterConfig& config) {
  config.validate();
  const auto center = std::find_if(window.begin(), window.end(),
                                   [&](const Keyframe& k) { return k.id == center_id; });
  if (center == window.end()) {
    throw std::invalid_argument("temporal_filter: centre keyframe not in window");
  }
  const DepthImage& raw = center->depth;
  const std::size_t n = raw.depth.size();
  std::vector<int> successes(n, 0);
  std::vector<double> sums(n, 0.0);

  for (const Keyframe& nb : window) {
    const auto offset = std::abs(nb.id - center_id);
    if (offset == 0 || offset > config.window) continue;
    const DepthImage projected = reproject_depth(nb, *center);
    for (std::size_t i = 0; i < n; ++i) {
      const double di = raw.depth[i];
      const double dj = projected.depth[i];
      if (di > 0.0 && dj > 0.0 && std::abs(dj - di) < config.depth_threshold) {
        ++successes[i];
        sums[i] += dj;
      }
    }
  }

  DepthImage out(raw.width, raw.height);
  for (std::size_t i = 0; i < n; ++i) {
    if (successes[i] > config.min_successes) {
      out.depth[i] = (raw.depth[i] + sums[i]) / (successes[i] + 1);
    }
  }
  return out;
}

std::vector<DepthImage> temporal_filter_sequence(
    std::span<const Keyframe> frames, const FilterConfig& config, int threads) {
  config.validate();
  std::vector<DepthImage> out(frames.size());
  const auto n = static_cast<std::ptrdiff_t>(frames.size());
  const auto w = static_cast<std::ptrdiff_t>(config.window);
#pragma omp parallel for schedule(dynamic) \
    num_threads(kernels::resolve_threads(threads))
  for (std::ptrdiff_t k = 0; k < n; ++k) {
    const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, k - w);
    const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(n, k + w + 1);
    out[k] = temporal_filter(frames.subspan(lo, hi - lo), frames[k].id, config);
  }
  return out;
}

PointCloud depth_to_cloud(const Keyframe& frame, double max_depth) {
  PointCloud out;
  const Matrix3 R = frame.pose.rotation();
  const DepthImage& img = frame.depth;
  for (int v = 0; v < img.height; ++v) {
    for (int u = 0; u < img.width; ++u) {
      const double d = img.at(u, v);
      if (d > 0.0 && d < max_depth) {
        out.points.emplace_back(R * frame.intrinsics.backproject(u, v, d) +
                                frame.pose.t);
      }
    }
  }
  return out;
}

}  // namespace cloudiff
