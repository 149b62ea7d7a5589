#include "cloudiff/occupancy.hpp"

#include "cloudiff/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <ostream>
#include <stdexcept>

namespace cloudiff {

const char* to_string(VoxelState s) {
  switch (s) {
    case VoxelState::kFree:
      return "FREE";
    case VoxelState::kOccupied:
      return "OCCUPIED";
    case VoxelState::kUnknown:
      break;
  }
  return "UNKNOWN";
}

OccupancyMap::OccupancyMap(double resolution, const Bounds& bounds)
    : resolution_(resolution), bounds_(bounds) {
  if (!(resolution > 0.0)) {
    throw std::invalid_argument("OccupancyMap: resolution must be > 0");
  }
  if (!(bounds.max.array() >= bounds.min.array()).all()) {
    throw std::invalid_argument("OccupancyMap: inverted bounds");
  }
  lo_ = voxel_key(bounds.min, resolution);
  hi_ = voxel_key(bounds.max, resolution);
  nx_ = hi_.x - lo_.x + 1;
  ny_ = hi_.y - lo_.y + 1;
  nz_ = hi_.z - lo_.z + 1;
  const auto total = static_cast<double>(nx_) * ny_ * nz_;
  if (total > 4e9) throw std::length_error("OccupancyMap: region too large");
  cells_.assign(static_cast<std::size_t>(nx_ * ny_ * nz_), 0);
}

bool OccupancyMap::in_bounds(const VoxelKey& k) const {
  return k.x >= lo_.x && k.x <= hi_.x && k.y >= lo_.y && k.y <= hi_.y &&
         k.z >= lo_.z && k.z <= hi_.z;
}

std::size_t OccupancyMap::offset(const VoxelKey& k) const {
  return static_cast<std::size_t>(((k.z - lo_.z) * ny_ + (k.y - lo_.y)) * nx_ +
                                  (k.x - lo_.x));
}

VoxelState OccupancyMap::state(const VoxelKey& k) const {
  if (!in_bounds(k)) return VoxelState::kUnknown;
  return static_cast<VoxelState>(cells_[offset(k)]);
}

void OccupancyMap::mark(const VoxelKey& k, VoxelState s) {
  if (!in_bounds(k)) return;
  auto& cell = cells_[offset(k)];
  cell = std::max(cell, static_cast<std::uint8_t>(s));
}

void OccupancyMap::mark_atomic(const VoxelKey& k, VoxelState s) {
  if (!in_bounds(k)) return;
  std::atomic_ref<std::uint8_t> cell(cells_[offset(k)]);
  const auto want = static_cast<std::uint8_t>(s);
  std::uint8_t cur = cell.load(std::memory_order_relaxed);
  while (cur < want &&
         !cell.compare_exchange_weak(cur, want, std::memory_order_relaxed)) {
  }
}

std::size_t OccupancyMap::count(VoxelState s) const {
  return static_cast<std::size_t>(
      std::count(cells_.begin(), cells_.end(), static_cast<std::uint8_t>(s)));
}

Point3 OccupancyMap::center(const VoxelKey& k) const {
  return Point3(static_cast<double>(k.x) + 0.5, static_cast<double>(k.y) + 0.5,
                static_cast<double>(k.z) + 0.5) *
         resolution_;
}

std::vector<VoxelKey> OccupancyMap::observed_keys() const {
  std::vector<VoxelKey> out;
  for (std::int64_t x = lo_.x; x <= hi_.x; ++x) {
    for (std::int64_t y = lo_.y; y <= hi_.y; ++y) {
      for (std::int64_t z = lo_.z; z <= hi_.z; ++z) {
        const VoxelKey k{x, y, z};
        if (cells_[offset(k)] != 0) out.push_back(k);
      }
    }
  }
  return out;
}

void OccupancyMap::write_text(std::ostream& os) const {
  for (const auto& k : observed_keys()) {
    const Point3 c = center(k);
    os << c.x() << ' ' << c.y() << ' ' << c.z() << ' ' << to_string(state(k))
       << '\n';
  }
}

bool OccupancyMap::operator==(const OccupancyMap& other) const {
  return resolution_ == other.resolution_ && lo_ == other.lo_ &&
         hi_ == other.hi_ && cells_ == other.cells_;
}

namespace {

template <bool Atomic>
void cast_one(OccupancyMap& map, const Point3& origin, const Point3& end,
              RayKind kind) {
  const VoxelKey last = voxel_key(end, map.resolution());
  traverse_voxels(origin, end, map.resolution(), [&](const VoxelKey& k) {
    if (!map.in_bounds(k)) return false;  // left the region: clip
    VoxelState s = VoxelState::kFree;
    if (k == last && kind == RayKind::kSurface) s = VoxelState::kOccupied;
    if constexpr (Atomic) {
      map.mark_atomic(k, s);
    } else {
      map.mark(k, s);
    }
    return true;
  });
}

void check_batch(const OccupancyMap& map, const RayBatch& batch) {
  if (batch.endpoints.size() != batch.kinds.size()) {
    throw std::invalid_argument("RayBatch: endpoints/kinds size mismatch");
  }
  if (!map.bounds().contains(batch.origin)) {
    throw std::invalid_argument("cast_rays: origin outside the map bounds");
  }
}

}  // namespace

RayBatch keyframe_rays(const Keyframe& frame, const Pose& pose,
                       const ObservedAreaConfig& config, const DepthImage* raw) {
  if (raw != nullptr &&
      (raw->width != frame.depth.width || raw->height != frame.depth.height)) {
    throw std::invalid_argument("keyframe_rays: raw/filtered image size mismatch");
  }
  RayBatch batch;
  batch.origin = pose.t;
  const Matrix3 R = pose.rotation();
  const DepthImage& img = frame.depth;
  batch.endpoints.reserve(img.depth.size());
  batch.kinds.reserve(img.depth.size());
  for (int v = 0; v < img.height; ++v) {
    for (int u = 0; u < img.width; ++u) {
      const double d = img.at(u, v);
      const bool surface = d > 0.0 && d < config.max_depth;
      if (!surface && raw != nullptr) {
        // A rejected measurement is not an absent one: no ray.
        const double r = raw->at(u, v);
        if (r > 0.0 && r < config.max_depth) continue;
      }
      const double range = surface ? d : config.probe_depth;
      batch.endpoints.emplace_back(
          R * frame.intrinsics.backproject(u, v, range) + pose.t);
      batch.kinds.push_back(surface ? RayKind::kSurface : RayKind::kFreeProbe);
    }
  }
  return batch;
}

void cast_rays(OccupancyMap& map, const RayBatch& batch, int threads) {
  check_batch(map, batch);
  const auto n = static_cast<std::ptrdiff_t>(batch.endpoints.size());
#pragma omp parallel for schedule(dynamic, 256) \
    num_threads(kernels::resolve_threads(threads))
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    cast_one<true>(map, batch.origin, batch.endpoints[i], batch.kinds[i]);
  }
}

OccupancyMap build_observed_area(std::span<const Keyframe> keyframes,
                                 std::span<const Pose> poses,
                                 const ObservedAreaConfig& config,
                                 const Bounds& bounds, int threads,
                                 std::span<const DepthImage> raw) {
  if (keyframes.size() != poses.size() || (!raw.empty() && raw.size() != poses.size())) {
    throw std::invalid_argument("build_observed_area: keyframes/poses mismatch");
  }
  OccupancyMap map(config.resolution, bounds);
  for (std::size_t k = 0; k < keyframes.size(); ++k) {
    if (!bounds.contains(poses[k].t)) continue;
    cast_rays(map, keyframe_rays(keyframes[k], poses[k], config, raw.empty() ? nullptr : &raw[k]), threads);
  }
  return map;
}

namespace serial {

void cast_rays(OccupancyMap& map, const RayBatch& batch) {
  check_batch(map, batch);
  for (std::size_t i = 0; i < batch.endpoints.size(); ++i) {
    cast_one<false>(map, batch.origin, batch.endpoints[i], batch.kinds[i]);
  }
}

OccupancyMap build_observed_area(std::span<const Keyframe> keyframes,
                                 std::span<const Pose> poses,
                                 const ObservedAreaConfig& config,
                                 const Bounds& bounds, std::span<const DepthImage> raw) {
  if (keyframes.size() != poses.size() || (!raw.empty() && raw.size() != poses.size())) {
    throw std::invalid_argument("build_observed_area: keyframes/poses mismatch");
  }
  OccupancyMap map(config.resolution, bounds);
  for (std::size_t k = 0; k < keyframes.size(); ++k) {
    if (!bounds.contains(poses[k].t)) continue;
    serial::cast_rays(map, keyframe_rays(keyframes[k], poses[k], config, raw.empty() ? nullptr : &raw[k]));
  }
  return map;
}

}  // namespace serial
}  // namespace cloudiff
