#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace cloudiff {

using Point3 = Eigen::Vector3d;
using Matrix3 = Eigen::Matrix3d;
using Matrix6 = Eigen::Matrix<double, 6, 6>;
using Vector6 = Eigen::Matrix<double, 6, 1>;

// Ordered list of 3D points in meters. Order is meaningful: every transform
// and filter in the library keeps it (stable subsetting).
struct PointCloud {
  std::vector<Point3> points;
  std::string frame_id = "world";

  PointCloud() = default;
  explicit PointCloud(std::vector<Point3> pts, std::string frame = "world")
      : points(std::move(pts)), frame_id(std::move(frame)) {}

  [[nodiscard]] std::size_t size() const { return points.size(); }
  [[nodiscard]] bool empty() const { return points.empty(); }
  const Point3& operator[](std::size_t i) const { return points[i]; }
};

/// Throws std::invalid_argument if any coordinate is NaN or infinite.
void require_finite(const PointCloud& cloud);

// Rigid transform of a body/camera frame expressed in the world frame.
// `q` is kept unit-norm: every composing operation re-normalizes it.
struct Pose {
  Point3 t = Point3::Zero();
  Eigen::Quaterniond q = Eigen::Quaterniond::Identity();

  Pose() = default;
  Pose(const Point3& translation, const Eigen::Quaterniond& rotation);

  static Pose identity() { return {}; }

  [[nodiscard]] Point3 operator*(const Point3& p) const { return q * p + t; }
  [[nodiscard]] Pose operator*(const Pose& other) const;
  [[nodiscard]] Pose inverse() const;
  [[nodiscard]] Matrix3 rotation() const { return q.toRotationMatrix(); }
  [[nodiscard]] bool is_finite() const;
};

struct StampedPose {
  double timestamp = 0.0;
  Pose pose;
};

namespace so3 {

Matrix3 hat(const Point3& v);

/// Exponential map from a rotation vector to a unit quaternion.
Eigen::Quaterniond exp(const Point3& phi);

/// Logarithm map: rotation vector (axis * angle, angle in [0, pi]).
Point3 log(const Eigen::Quaterniond& q);

/// Inverse of the right Jacobian of SO(3), evaluated at `phi`.
Matrix3 right_jacobian_inverse(const Point3& phi);

}  // namespace so3

/// output[i] = pose.q * cloud[i] + pose.t
PointCloud transform_cloud(const PointCloud& cloud, const Pose& pose);

// Integer voxel coordinate: floor(coord / resolution) per axis. A point on a
// voxel boundary belongs to the higher-index voxel.
struct VoxelKey {
  std::int64_t x = 0;
  std::int64_t y = 0;
  std::int64_t z = 0;

  auto operator<=>(const VoxelKey&) const = default;
};

struct VoxelKeyHash {
  std::size_t operator()(const VoxelKey& k) const noexcept;
};

VoxelKey voxel_key(const Point3& p, double resolution);

/// One centroid per occupied voxel, emitted in ascending voxel-key order.
/// Throws std::invalid_argument for a non-positive resolution.
PointCloud voxel_downsample(const PointCloud& cloud, double resolution);

}  // namespace cloudiff
