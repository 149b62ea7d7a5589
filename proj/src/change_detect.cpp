#include "cloudiff/change_detect.hpp"

#include "cloudiff/kernels.hpp"

#include <cmath>

namespace cloudiff {

void ChangeConfig::validate() const {
  if (!(change_threshold > 0.0) || !(downsample_resolution > 0.0) ||
      !(octree_resolution > 0.0) || !(max_depth > 0.0) || !(probe_depth > 0.0)) {
    throw std::invalid_argument("ChangeConfig: all thresholds must be positive");
  }
  if (!(change_threshold > downsample_resolution)) {
    throw std::invalid_argument("ChangeConfig: th_ch must exceed rho_p");
  }
  alignment.validate();
}

PointCloud build_global_cloud(std::span<const Keyframe> keyframes,
                              std::span<const Pose> poses, double max_depth,
                              double downsample_resolution) {
  if (keyframes.size() != poses.size()) {
    throw std::invalid_argument("build_global_cloud: keyframes/poses mismatch");
  }
  PointCloud all;
  for (std::size_t k = 0; k < keyframes.size(); ++k) {
    Keyframe frame = keyframes[k];
    frame.pose = poses[k];
    auto pts = depth_to_cloud(frame, max_depth);
    all.points.insert(all.points.end(), pts.points.begin(), pts.points.end());
  }
  return voxel_downsample(all, downsample_resolution);
}

Alignment align_global_to_prior(const PointCloud& global_cloud,
                                const PointCloud& prior_cloud,
                                const RegistrationConfig& config) {
  if (global_cloud.empty() || prior_cloud.empty()) {
    throw std::invalid_argument("align_global_to_prior: empty cloud");
  }
  Alignment out;
  out.aligned = global_cloud;
  out.registration =
      register_gicp(global_cloud, prior_cloud, Pose::identity(), config);
  out.accepted = out.registration.accepted;
  if (out.accepted) {
    out.aligned = transform_cloud(global_cloud, out.registration.transform);
  }
  return out;
}

PointCloud build_observed_prior(const PointCloud& prior_cloud,
                                const KdTree& global_index,
                                const ObservedArea& observed,
                                double change_threshold, int threads) {
  const auto dist = kernels::nearest_distances(prior_cloud, global_index, threads);
  PointCloud out;
  out.frame_id = prior_cloud.frame_id;
  for (std::size_t i = 0; i < prior_cloud.size(); ++i) {
    const Point3& p = prior_cloud.points[i];
    if (observed.contains(p) || dist[i] <= change_threshold) {
      out.points.push_back(p);
    }
  }
  return out;
}

Classification classify_changes(const PointCloud& global_cloud,
                                const PointCloud& observed_prior,
                                double change_threshold, int threads) {
  const KdTree global_index(global_cloud);
  const KdTree prior_index(observed_prior);
  Classification out;
  out.new_points = kernels::select_beyond(global_cloud, prior_index,
                                          change_threshold, threads);
  out.removed_points = kernels::select_beyond(observed_prior, global_index,
                                              change_threshold, threads);
  return out;
}

ChangeReport detect(std::span<const Keyframe> keyframes,
                    std::span<const Pose> poses, const PointCloud& prior_cloud,
                    const Bounds& bounds, const ChangeConfig& config,
                    std::span<const DepthImage> raw) {
  config.validate();
  ChangeReport report;

  try {
    report.global_cloud = build_global_cloud(keyframes, poses, config.max_depth,
                                             config.downsample_resolution);
    report.prior_cloud = voxel_downsample(prior_cloud, config.downsample_resolution);
  } catch (const std::exception& e) {
    throw PipelineError("build_global_cloud", e.what());
  }

  Pose map_from_global = Pose::identity();
  if (config.align_to_prior) {
    try {
      const Alignment al = align_global_to_prior(
          report.global_cloud, report.prior_cloud, config.alignment);
      report.alignment = al.registration;
      report.aligned = al.accepted;
      if (al.accepted) {
        report.global_cloud = al.aligned;
        map_from_global = al.registration.transform.inverse();
      } else {
        report.warnings.push_back(
            "alignment rejected by validation; proceeding unaligned");
      }
    } catch (const std::invalid_argument& e) {
      report.warnings.push_back(std::string("alignment skipped: ") + e.what());
    }
  }

  try {
    auto map = std::make_shared<OccupancyMap>(build_observed_area(
        keyframes, poses, config.observed_area(), bounds, config.threads, raw));
    report.observed_area = ObservedArea(std::move(map), map_from_global);
  } catch (const std::exception& e) {
    throw PipelineError("build_observed_area", e.what());
  }

  try {
    const KdTree global_index(report.global_cloud);
    report.observed_prior =
        build_observed_prior(report.prior_cloud, global_index,
                             report.observed_area, config.change_threshold,
                             config.threads);
    auto cls = classify_changes(report.global_cloud, report.observed_prior,
                                config.change_threshold, config.threads);
    report.new_points = std::move(cls.new_points);
    report.removed_points = std::move(cls.removed_points);
  } catch (const std::exception& e) {
    throw PipelineError("classify_changes", e.what());
  }
  return report;
}

}  // namespace cloudiff
