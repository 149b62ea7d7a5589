#pragma once

#include "cloudiff/geometry.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace cloudiff {

// Pinhole camera. Optical frame: x right, y down, z forward. Pixel (u, v) has
// its centre at integer coordinates.
struct CameraIntrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;

  void validate() const;

  /// Horizontal field of view `hfov_rad` with square pixels and a centred
  /// principal point.
  static CameraIntrinsics from_fov(int width, int height, double hfov_rad);

  [[nodiscard]] Point3 backproject(double u, double v, double depth) const {
    return {(u - cx) / fx * depth, (v - cy) / fy * depth, depth};
  }
  bool operator==(const CameraIntrinsics&) const = default;
};

// Depth along the optical axis in meters; 0 encodes EMPTY.
struct DepthImage {
  static constexpr double kEmpty = 0.0;

  int width = 0;
  int height = 0;
  std::vector<double> depth;

  DepthImage() = default;
  DepthImage(int w, int h) : width(w), height(h), depth(std::size_t(w) * h, kEmpty) {}

  [[nodiscard]] double at(int u, int v) const { return depth[index(u, v)]; }
  double& at(int u, int v) { return depth[index(u, v)]; }
  [[nodiscard]] bool is_empty(int u, int v) const { return !(at(u, v) > 0.0); }
  [[nodiscard]] std::size_t index(int u, int v) const {
    return std::size_t(v) * width + u;
  }
  [[nodiscard]] std::size_t valid_count() const;
};

struct Keyframe {
  std::int64_t id = 0;
  double timestamp = 0.0;
  Pose pose;  // camera in world
  DepthImage depth;
  CameraIntrinsics intrinsics;
};

struct FilterConfig {
  double depth_threshold = 0.2;  // delta_d, m
  int min_successes = 2;         // alpha; a pixel needs strictly more
  int window = 2;                // neighbours i-window .. i+window

  void validate() const;
};

/// Re-project every valid source pixel into the target camera. The result is
/// a target-sized image holding the projected depth d_j^i at the pixel where
/// each point lands; when several points land on one pixel the nearest wins.
DepthImage reproject_depth(const Keyframe& source, const Keyframe& target);

/// Temporal filter for the keyframe with id `center_id`. Neighbours are the
/// frames of `window` whose id differs from the centre by 1..config.window.
/// Throws std::invalid_argument if the centre frame is not in the window.
DepthImage temporal_filter(std::span<const Keyframe> window,
                           std::int64_t center_id, const FilterConfig& config);

/// Filter a whole keyframe sequence; frame k uses its own neighbourhood.
/// Frames are processed in parallel (OpenMP).
std::vector<DepthImage> temporal_filter_sequence(
    std::span<const Keyframe> frames, const FilterConfig& config,
    int threads = 0);

/// Valid pixels with depth < max_depth, back-projected into the world frame
/// in row-major order.
PointCloud depth_to_cloud(const Keyframe& frame, double max_depth);

}  // namespace cloudiff
