#pragma once

// Synthetic box-world: scenes of axis-aligned buildings on a ground plane,
// scene edits, ground-truth surface sampling, analytic depth rendering,
// trajectories and the sensor noise model used to corrupt them.

#include "cloudiff/depth_filter.hpp"
#include "cloudiff/geometry.hpp"
#include "cloudiff/occupancy.hpp"
#include "cloudiff/pose_graph.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cloudiff::synth {

struct Box {
  std::string name;
  Point3 min = Point3::Zero();
  Point3 max = Point3::Zero();

  [[nodiscard]] double volume() const { return (max - min).prod(); }
  [[nodiscard]] double distance(const Point3& p) const;
  bool operator==(const Box&) const = default;
};

// Axis-aligned reflective rectangle lying in the plane `axis` = `offset`.
// `lo`/`hi` bound the two remaining axes in increasing axis order.
struct MirrorPatch {
  int axis = 2;
  double offset = 0.0;
  Eigen::Vector2d lo = Eigen::Vector2d::Zero();
  Eigen::Vector2d hi = Eigen::Vector2d::Zero();
  bool operator==(const MirrorPatch&) const = default;
};

struct Scene {
  std::string name = "scene";
  Bounds bounds;          // x/y extent of the ground plane, z up to the sky limit
  bool has_ground = true;  // ground plane at z = bounds.min.z
  std::vector<Box> boxes;
  std::vector<MirrorPatch> mirrors;

  /// Throws std::invalid_argument for degenerate or out-of-bounds boxes.
  void validate() const;
  [[nodiscard]] const Box* find(const std::string& box_name) const;
  bool operator==(const Scene&) const = default;
};

struct SceneEdit {
  std::vector<std::string> remove;
  std::vector<Box> add;
  bool operator==(const SceneEdit&) const = default;
};

struct ScenePair {
  Scene original;
  Scene changed;
  SceneEdit manifest;
};

/// changed = original minus the removed boxes plus the added ones.
/// Throws std::invalid_argument when a removed box does not exist.
ScenePair make_scene_pair(const Scene& original, const SceneEdit& edit);

/// The edit that turns `pair.changed` back into `pair.original`.
SceneEdit inverse_edit(const ScenePair& pair);

/// Apply an edit without bookkeeping.
Scene apply_edit(const Scene& scene, const SceneEdit& edit);

/// Default 100 x 100 x 20 m city block with ten buildings around a central
/// loop, and its one-swap edit (one building removed, one added).
Scene default_scene();
SceneEdit default_edit();

/// Uniform random samples on every exposed face (box tops and walls, box
/// bottoms when lifted, the ground outside footprints). Each face receives
/// round(area * density) points. Deterministic for a given seed.
PointCloud sample_surface(const Scene& scene, double density, std::uint64_t seed);

/// Nearest positive ray parameter t of origin + t * dir against the scene,
/// following at most one mirror bounce. For a reflected hit, t is the
/// unfolded path length in units of |dir|.
std::optional<double> intersect(const Scene& scene, const Point3& origin,
                                const Point3& dir);

/// Exact z-depth image seen from `pose` (camera in world); EMPTY where the
/// pixel ray hits nothing. Rows render in parallel.
DepthImage render_depth(const Scene& scene, const Pose& pose,
                        const CameraIntrinsics& intrinsics, int threads = 0);

namespace serial {
DepthImage render_depth(const Scene& scene, const Pose& pose,
                        const CameraIntrinsics& intrinsics);
}  // namespace serial

// Rounded-rectangle loop flown at constant height and speed. The camera looks
// along the path tangent (optical axis horizontal, tilted by `pitch`).
struct TrajectorySpec {
  Eigen::Vector2d center{50.0, 50.0};
  double length = 20.0;  // along x, m
  double width = 10.0;   // along y, m
  double corner_radius = 3.0;
  double height = 4.0;
  double speed = 2.75;   // m/s
  double rate = 10.0;    // keyframes per second
  double pitch = 0.0;    // rad, positive tilts the camera down
  double min_clearance = 1.0;
};

struct Trajectory {
  std::vector<StampedPose> poses;
  std::string label;
  double height = 0.0;
};

/// Throws std::invalid_argument for a degenerate path, or a path that comes
/// closer than `min_clearance` to any box or leaves the scene bounds.
Trajectory generate_trajectory(const Scene& scene, const TrajectorySpec& spec);

/// Camera orientation (x right, y down, z forward) for a heading `yaw` in the
/// world x-y plane and a downward `pitch`.
Eigen::Quaterniond camera_orientation(double yaw, double pitch);

struct NoiseSpec {
  double gyro = 0.0;             // sigma_g,  rad / sqrt(s)
  double accel = 0.0;            // sigma_a,  m / s^(3/2)
  double gyro_bias_walk = 0.0;   // sigma_bg, rad / s^(3/2)
  double accel_bias_walk = 0.0;  // sigma_ba, m / s^(5/2)
  double image = 0.0;            // sigma_img, depth std per meter of depth
  double dark_empty_rate = 0.0;  // fraction of pixels dropped (low light)
  std::uint64_t seed = 0;

  void validate() const;
  static NoiseSpec none(std::uint64_t seed = 0);
  static NoiseSpec small(std::uint64_t seed = 0);
  static NoiseSpec big(std::uint64_t seed = 0);
};

struct CorruptedData {
  std::vector<OdometryMeasurement> odometry;
  std::vector<DepthImage> depths;
};

/// Relative odometry between consecutive poses perturbed by integrated IMU
/// noise: gyro white noise plus bias random walk on rotation, accelerometer
/// white noise plus bias random walk integrated twice on translation. Depth
/// pixels get zero-mean Gaussian noise with std image * depth.
CorruptedData corrupt(const Trajectory& trajectory,
                      std::span<const DepthImage> depths, const NoiseSpec& noise);

/// Odometry measurements without noise (exact relative poses).
std::vector<OdometryMeasurement> exact_odometry(const Trajectory& trajectory,
                                                const NoiseSpec& noise);

/// Keyframes pairing trajectory poses with depth images.
std::vector<Keyframe> make_keyframes(const Trajectory& trajectory,
                                     std::span<const DepthImage> depths,
                                     const CameraIntrinsics& intrinsics);

/// Default camera: 256 x 144 pixels, 90 degree horizontal field of view.
CameraIntrinsics default_intrinsics();

}  // namespace cloudiff::synth
