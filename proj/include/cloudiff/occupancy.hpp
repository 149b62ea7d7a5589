#pragma once

#include "cloudiff/depth_filter.hpp"
#include "cloudiff/geometry.hpp"

#include <cmath>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

namespace cloudiff {

enum class VoxelState : std::uint8_t { kUnknown = 0, kFree = 1, kOccupied = 2 };

const char* to_string(VoxelState s);

struct Bounds {
  Point3 min = Point3::Zero();
  Point3 max = Point3::Zero();

  [[nodiscard]] bool contains(const Point3& p) const {
    return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
  }
  bool operator==(const Bounds& o) const { return min == o.min && max == o.max; }
};

// Three-state occupancy lattice at a fixed resolution over a bounded region.
// Voxel states only ever move up the lattice UNKNOWN < FREE < OCCUPIED, so the
// final map is independent of the order in which rays are integrated. The
// observed area is the set of non-UNKNOWN voxels.
class OccupancyMap {
 public:
  OccupancyMap(double resolution, const Bounds& bounds);

  [[nodiscard]] double resolution() const { return resolution_; }
  [[nodiscard]] const Bounds& bounds() const { return bounds_; }
  [[nodiscard]] VoxelKey min_key() const { return lo_; }
  [[nodiscard]] VoxelKey max_key() const { return hi_; }

  [[nodiscard]] bool in_bounds(const VoxelKey& k) const;
  [[nodiscard]] VoxelState state(const VoxelKey& k) const;
  [[nodiscard]] VoxelState state(const Point3& p) const {
    return state(voxel_key(p, resolution_));
  }
  /// True iff the voxel holding `p` is FREE or OCCUPIED.
  [[nodiscard]] bool contains(const Point3& p) const {
    return state(p) != VoxelState::kUnknown;
  }

  /// Raise the voxel to `s` if it is below it. Out-of-bounds keys are ignored.
  void mark(const VoxelKey& k, VoxelState s);
  /// Same as mark() but safe to call concurrently on one map.
  void mark_atomic(const VoxelKey& k, VoxelState s);

  [[nodiscard]] std::size_t count(VoxelState s) const;
  [[nodiscard]] std::size_t observed_count() const {
    return count(VoxelState::kFree) + count(VoxelState::kOccupied);
  }
  [[nodiscard]] Point3 center(const VoxelKey& k) const;

  /// Keys of all non-UNKNOWN voxels in ascending order.
  [[nodiscard]] std::vector<VoxelKey> observed_keys() const;

  /// One `x y z state` line per observed voxel (voxel centres).
  void write_text(std::ostream& os) const;

  bool operator==(const OccupancyMap& other) const;

 private:
  [[nodiscard]] std::size_t offset(const VoxelKey& k) const;

  double resolution_;
  Bounds bounds_;
  VoxelKey lo_, hi_;
  std::int64_t nx_ = 0, ny_ = 0, nz_ = 0;
  std::vector<std::uint8_t> cells_;
};

/// Visit the voxels pierced by the segment origin -> end, in order, starting
/// with the origin voxel and ending with the end voxel (exact grid walk).
template <typename Visit>
void traverse_voxels(const Point3& origin, const Point3& end, double resolution,
                     Visit&& visit) {
  const Point3 o = origin / resolution;
  const Point3 e = end / resolution;
  const Point3 d = e - o;
  const VoxelKey k0 = voxel_key(origin, resolution);
  const VoxelKey k1 = voxel_key(end, resolution);
  std::int64_t key[3] = {k0.x, k0.y, k0.z};
  const std::int64_t target[3] = {k1.x, k1.y, k1.z};
  int step[3];
  double t_max[3];
  double t_delta[3];
  std::int64_t remaining = 0;
  for (int a = 0; a < 3; ++a) {
    remaining += target[a] > key[a] ? target[a] - key[a] : key[a] - target[a];
    if (target[a] > key[a]) {
      step[a] = 1;
      t_max[a] = (static_cast<double>(key[a] + 1) - o[a]) / d[a];
      t_delta[a] = 1.0 / d[a];
    } else if (target[a] < key[a]) {
      step[a] = -1;
      t_max[a] = (static_cast<double>(key[a]) - o[a]) / d[a];
      t_delta[a] = -1.0 / d[a];
    } else {
      step[a] = 0;
      t_max[a] = HUGE_VAL;
      t_delta[a] = HUGE_VAL;
    }
  }
  if (!visit(VoxelKey{key[0], key[1], key[2]})) return;
  for (; remaining > 0; --remaining) {
    int axis = -1;
    for (int a = 0; a < 3; ++a) {
      if (key[a] == target[a]) continue;
      if (axis < 0 || t_max[a] < t_max[axis]) axis = a;
    }
    key[axis] += step[axis];
    t_max[axis] += t_delta[axis];
    if (!visit(VoxelKey{key[0], key[1], key[2]})) return;
  }
}

enum class RayKind : std::uint8_t {
  kSurface,   // ends on a measured surface
  kFreeProbe  // synthetic endpoint for a pixel without a usable depth
};

struct RayBatch {
  Point3 origin = Point3::Zero();
  std::vector<Point3> endpoints;
  std::vector<RayKind> kinds;
};

/// Integrate a ray batch: voxels before the endpoint become FREE, SURFACE
/// endpoints OCCUPIED, FREE_PROBE endpoints FREE. Rays are clipped where they
/// leave the map bounds. Parallel over rays.
void cast_rays(OccupancyMap& map, const RayBatch& batch, int threads = 0);

struct ObservedAreaConfig {
  double max_depth = 30.0;   // th_d
  double probe_depth = 20.0;  // th_f
  double resolution = 0.8;   // rho_o
};

/// Observed area from keyframes with filtered depth; `poses[k]` replaces
/// `keyframes[k].pose`. Pixels with depth < th_d cast SURFACE rays, every other
/// pixel (EMPTY or too far) casts a FREE_PROBE ray to depth th_f.
/// When the unfiltered images `raw` are given, a pixel the filter rejected
/// although the sensor returned a depth < th_d casts no ray at all.
OccupancyMap build_observed_area(std::span<const Keyframe> keyframes,
                                 std::span<const Pose> poses,
                                 const ObservedAreaConfig& config,
                                 const Bounds& bounds, int threads = 0,
                                 std::span<const DepthImage> raw = {});

/// The rays one keyframe contributes (see build_observed_area for `raw`).
RayBatch keyframe_rays(const Keyframe& frame, const Pose& pose,
                       const ObservedAreaConfig& config,
                       const DepthImage* raw = nullptr);

namespace serial {

void cast_rays(OccupancyMap& map, const RayBatch& batch);
OccupancyMap build_observed_area(std::span<const Keyframe> keyframes,
                                 std::span<const Pose> poses,
                                 const ObservedAreaConfig& config,
                                 const Bounds& bounds,
                                 std::span<const DepthImage> raw = {});

}  // namespace serial
}  // namespace cloudiff
