#pragma once

// On-disk formats:
//   PLY        binary little-endian float32 x y z on write; ascii and binary
//              little-endian (float or double x y z) on read.
//   trajectory one pose per line: `timestamp tx ty tz qx qy qz qw`.
//   odometry   `t_from t_to tx ty tz qx qy qz qw sigma_rot sigma_trans` with
//              the relative pose expressed in the `from` frame.
//   depth      16-byte header (8-byte magic "CDDEPTH1", u32 width, u32 height)
//              followed by width*height little-endian float32, row-major,
//              0.0 = EMPTY.
//   scene.json boxes, changed scene, edit manifest, intrinsics, noise, seed.

#include "cloudiff/depth_filter.hpp"
#include "cloudiff/geometry.hpp"
#include "cloudiff/pose_graph.hpp"
#include "cloudiff/synthworld.hpp"

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace cloudiff::io {

namespace fs = std::filesystem;

/// Malformed or unreadable input file.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void write_ply(const fs::path& path, const PointCloud& cloud);
PointCloud read_ply(const fs::path& path);

void write_trajectory(const fs::path& path, const std::vector<StampedPose>& poses);
std::vector<StampedPose> read_trajectory(const fs::path& path);

// Odometry rows carry timestamps; indices are recovered by matching them
// against the keyframe timestamps.
void write_odometry(const fs::path& path,
                    const std::vector<OdometryMeasurement>& odometry,
                    const std::vector<double>& timestamps);
std::vector<OdometryMeasurement> read_odometry(const fs::path& path,
                                               const std::vector<double>& timestamps);

void write_depth(const fs::path& path, const DepthImage& image);
DepthImage read_depth(const fs::path& path);

struct DatasetMeta {
  synth::ScenePair scenes;
  CameraIntrinsics intrinsics;
  synth::NoiseSpec noise;
  std::string noise_label = "none";
  std::string trajectory_label;
  double surface_density = 0.0;
  std::uint64_t seed = 0;
  int format_version = 1;
};

void write_scene_json(const fs::path& path, const DatasetMeta& meta);
DatasetMeta read_scene_json(const fs::path& path);

/// `depth/NNNNNN.bin` relative to a dataset root.
fs::path depth_path(const fs::path& root, std::size_t index);

}  // namespace cloudiff::io
