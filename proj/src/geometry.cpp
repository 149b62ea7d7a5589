#include "cloudiff/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_map>

namespace cloudiff {

void require_finite(const PointCloud& cloud) {
  for (const auto& p : cloud.points) {
    if (!p.allFinite()) {
      throw std::invalid_argument("point cloud '" + cloud.frame_id +
                                  "' contains a non-finite point");
    }
  }
}

Pose::Pose(const Point3& translation, const Eigen::Quaterniond& rotation)
    : t(translation), q(rotation.normalized()) {}

Pose Pose::operator*(const Pose& other) const {
  Pose out;
  out.t = q * other.t + t;
  out.q = (q * other.q).normalized();
  return out;
}

Pose Pose::inverse() const {
  Pose out;
  out.q = q.conjugate().normalized();
  out.t = -(out.q * t);
  return out;
}

bool Pose::is_finite() const {
  return t.allFinite() && q.coeffs().allFinite();
}

namespace so3 {

Matrix3 hat(const Point3& v) {
  Matrix3 m;
  m << 0.0, -v.z(), v.y(),  //
      v.z(), 0.0, -v.x(),   //
      -v.y(), v.x(), 0.0;
  return m;
}

Eigen::Quaterniond exp(const Point3& phi) {
  const double theta = phi.norm();
  const double half = 0.5 * theta;
  double w = 0.0;
  double k = 0.0;
  if (theta < 1e-8) {
    w = 1.0 - theta * theta / 8.0;
    k = 0.5 - theta * theta / 48.0;
  } else {
    w = std::cos(half);
    k = std::sin(half) / theta;
  }
  Eigen::Quaterniond q(w, k * phi.x(), k * phi.y(), k * phi.z());
  return q.normalized();
}

Point3 log(const Eigen::Quaterniond& q_in) {
  Eigen::Quaterniond q = q_in.normalized();
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  const Point3 v = q.vec();
  const double n = v.norm();
  const double w = q.w();
  if (n < 1e-8) {
    // atan2(n, w) / n ~ 1/w - n^2 / (3 w^3)
    return (2.0 / w - 2.0 * n * n / (3.0 * w * w * w)) * v;
  }
  const double theta = 2.0 * std::atan2(n, w);
  return (theta / n) * v;
}

Matrix3 right_jacobian_inverse(const Point3& phi) {
  const double theta = phi.norm();
  const Matrix3 W = hat(phi);
  if (theta < 1e-5) {
    return Matrix3::Identity() + 0.5 * W + (1.0 / 12.0) * W * W;
  }
  const double coeff =
      1.0 / (theta * theta) -
      (1.0 + std::cos(theta)) / (2.0 * theta * std::sin(theta));
  return Matrix3::Identity() + 0.5 * W + coeff * W * W;
}

}  // namespace so3

PointCloud transform_cloud(const PointCloud& cloud, const Pose& pose) {
  PointCloud out;
  out.frame_id = cloud.frame_id;
  out.points.reserve(cloud.size());
  const Matrix3 R = pose.rotation();
  for (const auto& p : cloud.points) out.points.emplace_back(R * p + pose.t);
  return out;
}

std::size_t VoxelKeyHash::operator()(const VoxelKey& k) const noexcept {
  // Teschner et al. spatial hash primes.
  const auto h = static_cast<std::uint64_t>(k.x) * 73856093ULL ^
                 static_cast<std::uint64_t>(k.y) * 19349663ULL ^
                 static_cast<std::uint64_t>(k.z) * 83492791ULL;
  return static_cast<std::size_t>(h);
}

VoxelKey voxel_key(const Point3& p, double resolution) {
  return {static_cast<std::int64_t>(std::floor(p.x() / resolution)),
          static_cast<std::int64_t>(std::floor(p.y() / resolution)),
          static_cast<std::int64_t>(std::floor(p.z() / resolution))};
}

PointCloud voxel_downsample(const PointCloud& cloud, double resolution) {
  if (!(resolution > 0.0)) {
    throw std::invalid_argument("voxel_downsample: resolution must be > 0");
  }
  struct Accum {
    Point3 sum = Point3::Zero();
    std::size_t count = 0;
  };
  std::unordered_map<VoxelKey, Accum, VoxelKeyHash> cells;
  cells.reserve(cloud.size());
  for (const auto& p : cloud.points) {
    auto& a = cells[voxel_key(p, resolution)];
    a.sum += p;
    ++a.count;
  }

  std::vector<std::pair<VoxelKey, const Accum*>> ordered;
  ordered.reserve(cells.size());
  for (const auto& [key, acc] : cells) ordered.emplace_back(key, &acc);
  std::sort(ordered.begin(), ordered.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });

  PointCloud out;
  out.frame_id = cloud.frame_id;
  out.points.reserve(ordered.size());
  for (const auto& [key, acc] : ordered) {
    Point3 c = acc->sum / static_cast<double>(acc->count);
    // Rounding in the mean can push a centroid onto the neighbouring voxel's
    // boundary; walk it back so the centroid stays in its own voxel.
    const std::int64_t want[3] = {key.x, key.y, key.z};
    for (int axis = 0; axis < 3; ++axis) {
      for (int guard = 0; guard < 8; ++guard) {
        const auto k =
            static_cast<std::int64_t>(std::floor(c[axis] / resolution));
        if (k == want[axis]) break;
        c[axis] = std::nextafter(c[axis], k > want[axis] ? -HUGE_VAL : HUGE_VAL);
      }
    }
    out.points.emplace_back(c);
  }
  return out;
}

}  // namespace cloudiff
