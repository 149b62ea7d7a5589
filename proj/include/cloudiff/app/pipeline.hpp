#pragma once

#include "cloudiff/app/config.hpp"
#include "cloudiff/change_detect.hpp"
#include "cloudiff/evaluation.hpp"
#include "cloudiff/io.hpp"
#include "cloudiff/pose_graph.hpp"

#include <filesystem>
#include <optional>
#include <span>
#include <vector>

namespace cloudiff::app {

// A synthetic run in memory: the outdated prior (original scene), the
// ground-truth cloud of the changed scene the camera flies through, and the
// sensor streams recorded there.
struct Dataset {
  io::DatasetMeta meta;
  PointCloud prior;
  PointCloud changed;
  std::vector<StampedPose> ground_truth;
  std::vector<OdometryMeasurement> odometry;
  std::vector<DepthImage> depths;

  [[nodiscard]] std::size_t size() const { return ground_truth.size(); }
  [[nodiscard]] std::vector<double> timestamps() const;
  [[nodiscard]] GraphState true_poses() const;
  /// Scene bounds padded so that noisy ground returns stay inside the map.
  [[nodiscard]] Bounds map_bounds() const;
  /// Keyframes with the given depth images and poses.
  [[nodiscard]] std::vector<Keyframe> keyframes(std::span<const DepthImage> depths,
                                                std::span<const Pose> poses) const;
};

Dataset synthesize(const RunConfig& cfg);
void write_dataset(const std::filesystem::path& root, const Dataset& data);
/// Throws io::FormatError when a file is missing or malformed.
Dataset load_dataset(const std::filesystem::path& root);

/// Odometry chained from the first ground-truth pose (accurate initial pose).
GraphState odometry_poses(const Dataset& data);

/// Yaw drift about the first pose whose largest position error is `bias`
/// metres; the drift direction is drawn from `seed`.
GraphState apply_bias(GraphState poses, double bias, std::uint64_t seed);

/// Neighbours of keyframe k inside a sequence of `count` keyframes.
std::size_t filter_neighbours(std::size_t k, std::size_t count, const FilterConfig& cfg);

std::vector<DepthImage> filter_depths(const Dataset& data, std::span<const Pose> poses,
                                      const RunConfig& cfg);

struct LocalRegistration {
  std::size_t keyframe = 0;  // last keyframe of the group; the cloud's frame
  std::size_t points = 0;
  Pose initial_guess;
  RegistrationResult result;
};

struct Localization {
  GraphState odometry;
  GraphState initial;  // odometry re-anchored at every accepted registration
  GraphState fused;
  std::vector<LocalRegistration> registrations;
  std::vector<PriorMeasurement> priors;
  OptimizationResult optimization;
};

/// Cloud of keyframes [first, last] expressed in the camera frame of `last`,
/// using odometry for the relative poses.
PointCloud local_cloud(std::span<const Keyframe> keyframes, std::span<const Pose> odometry,
                       std::size_t first, std::size_t last, double max_depth,
                       double resolution);

/// Register local clouds against the prior, keep the accepted ones as prior
/// measurements and fuse them with odometry in the pose graph.
Localization localize(const Dataset& data, std::span<const DepthImage> filtered,
                      const RunConfig& cfg);

struct DetectionRun {
  GraphState poses;
  std::vector<DepthImage> filtered;
  ChangeReport report;
  MetricsReport metrics;
  std::optional<Localization> localization;
};

/// filter -> (localize) -> detect -> evaluate for the configured pose source.
DetectionRun run_detection(const Dataset& data, const RunConfig& cfg);

}  // namespace cloudiff::app
