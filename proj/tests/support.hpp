#pragma once

#include "cloudiff/geometry.hpp"
#include "cloudiff/kdtree.hpp"
#include "cloudiff/synthworld.hpp"

#include <cmath>
#include <limits>
#include <algorithm>
#include <numbers>
#include <random>
#include <set>
#include <tuple>

namespace cloudiff::test {

inline PointCloud random_cloud(std::size_t n, double lo, double hi, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  PointCloud c;
  c.points.reserve(n);
  for (std::size_t i = 0; i < n; ++i) c.points.emplace_back(u(rng), u(rng), u(rng));
  return c;
}

inline Pose random_pose(std::mt19937_64& rng, double max_t = 5.0, double max_angle = 3.1) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Point3 axis(u(rng), u(rng), u(rng));
  axis.normalize();
  const double angle = max_angle * std::abs(u(rng));
  return Pose(Point3(u(rng), u(rng), u(rng)) * max_t, so3::exp(axis * angle));
}

inline double brute_nearest(const PointCloud& c, const Point3& q) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& p : c.points) best = std::min(best, (p - q).squaredNorm());
  return std::sqrt(best);
}

inline double angle_between(const Eigen::Quaterniond& a, const Eigen::Quaterniond& b) {
  return so3::log(a.inverse() * b).norm();
}

// A few buildings on a ground patch, sampled on their surfaces.
inline synth::Scene building_scene() {
  synth::Scene s;
  s.name = "blocks";
  s.bounds = {Point3(0, 0, 0), Point3(30, 30, 15)};
  s.boxes = {
      {"A", Point3(4, 5, 0), Point3(10, 12, 8)},
      {"B", Point3(15, 4, 0), Point3(21, 9, 12)},
      {"C", Point3(12, 17, 0), Point3(20, 25, 6)},
  };
  return s;
}

inline PointCloud building_cloud(std::size_t target, std::uint64_t seed) {
  const auto scene = building_scene();
  PointCloud dense = synth::sample_surface(scene, 8.0, seed);
  std::mt19937_64 rng(seed + 1);
  std::shuffle(dense.points.begin(), dense.points.end(), rng);
  if (dense.size() > target) dense.points.resize(target);
  return dense;
}

inline CameraIntrinsics small_camera(int w = 64, int h = 48) {
  return CameraIntrinsics::from_fov(w, h, 1.2);
}

// Camera looking along +z of the world at a wall z = depth (camera frame =
// world frame rotated by nothing), displaced in the wall's plane.
inline Keyframe wall_frame(std::int64_t id, double depth, const Point3& offset,
                           const CameraIntrinsics& K) {
  Keyframe kf;
  kf.id = id;
  kf.timestamp = 0.1 * static_cast<double>(id);
  kf.pose = Pose(offset, Eigen::Quaterniond::Identity());
  kf.intrinsics = K;
  kf.depth = DepthImage(K.width, K.height);
  for (double& d : kf.depth.depth) d = depth - offset.z();
  return kf;
}

// Five keyframes along a short flight segment through the default scene,
// rendered exactly and then perturbed by depth-proportional noise.
inline std::vector<Keyframe> scene_window(std::uint64_t seed, double sigma_img,
                                          const CameraIntrinsics& K) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto scene = synth::default_scene();
  Point3 c, heading;
  double yaw = 0.0, yaw_rate = 0.0;
  for (bool clear = false; !clear;) {
    c = Point3(42.0 + 16.0 * u(rng), 46.0 + 8.0 * u(rng), 3.0 + 3.0 * u(rng));
    yaw = 2.0 * std::numbers::pi * u(rng);
    yaw_rate = 0.05 * (u(rng) - 0.5);
    heading = Point3(std::cos(yaw), std::sin(yaw), 0.0);
    clear = true;
    for (int j = -2; j <= 2; ++j) {
      for (const auto& b : scene.boxes) clear = clear && b.distance(c + 0.275 * j * heading) > 1.5;
    }
  }
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<Keyframe> frames;
  for (int j = -2; j <= 2; ++j) {
    Keyframe kf;
    kf.id = 10 + j;
    kf.timestamp = 0.1 * kf.id;
    kf.pose = Pose(c + 0.275 * j * heading, synth::camera_orientation(yaw + yaw_rate * j, 0.0));
    kf.intrinsics = K;
    kf.depth = synth::render_depth(scene, kf.pose, K, 1);
    for (double& d : kf.depth.depth) {
      if (d > 0.0) d = std::max(1e-3, d + sigma_img * d * g(rng));
    }
    frames.push_back(std::move(kf));
  }
  return frames;
}

using KeySet = std::set<std::tuple<std::int64_t, std::int64_t, std::int64_t>>;

inline std::tuple<std::int64_t, std::int64_t, std::int64_t> key_tuple(const VoxelKey& k) {
  return {k.x, k.y, k.z};
}

// Voxels whose closed box meets the segment in more than a single point.
inline KeySet slab_voxels(
    const Point3& a, const Point3& b, double res) {
  KeySet out;
  const Point3 lo = a.cwiseMin(b) / res, hi = a.cwiseMax(b) / res;
  for (auto x = std::int64_t(std::floor(lo.x())); x <= std::int64_t(std::floor(hi.x())); ++x)
    for (auto y = std::int64_t(std::floor(lo.y())); y <= std::int64_t(std::floor(hi.y())); ++y)
      for (auto z = std::int64_t(std::floor(lo.z())); z <= std::int64_t(std::floor(hi.z())); ++z) {
        double t0 = 0.0, t1 = 1.0;
        const double kmin[3] = {x * res, y * res, z * res};
        for (int ax = 0; ax < 3; ++ax) {
          const double d = b[ax] - a[ax];
          const double s0 = kmin[ax], s1 = kmin[ax] + res;
          if (std::abs(d) < 1e-300) {
            if (a[ax] < s0 || a[ax] >= s1) t1 = -1.0;
            continue;
          }
          double e0 = (s0 - a[ax]) / d, e1 = (s1 - a[ax]) / d;
          if (e0 > e1) std::swap(e0, e1);
          t0 = std::max(t0, e0);
          t1 = std::min(t1, e1);
        }
        if (t1 - t0 > 1e-9) out.insert({x, y, z});
      }
  return out;
}

}  // namespace cloudiff::test
