#include "cloudiff/app/pipeline.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace cloudiff::app {

GraphState odometry_poses(const Dataset& data) {
  return integrate_odometry(data.ground_truth.front().pose, data.odometry, data.size());
}

GraphState apply_bias(GraphState poses, double bias, std::uint64_t seed) {
  if (bias == 0.0 || poses.size() < 2) return poses;
  // Yaw drift about the first pose, growing with the distance travelled. The
  // drift rate is scaled so that the largest position error equals `bias`.
  std::vector<double> s(poses.size(), 0.0);
  for (std::size_t k = 1; k < poses.size(); ++k) {
    s[k] = s[k - 1] + (poses[k].t - poses[k - 1].t).norm();
  }
  const double length = s.back();
  if (!(length > 0.0)) return poses;
  const Point3 pivot = poses.front().t;
  auto max_error = [&](double rate) {
    double e = 0.0;
    for (std::size_t k = 0; k < poses.size(); ++k) {
      const Point3 r = poses[k].t - pivot;
      e = std::max(e, 2.0 * std::abs(std::sin(0.5 * rate * s[k] / length)) * r.head<2>().norm());
    }
    return e;
  };
  double lo = 0.0;
  double hi = std::numbers::pi;
  if (max_error(hi) < bias) {
    throw std::invalid_argument("pose_bias " + std::to_string(bias) +
                                " m is larger than yaw drift can produce on this trajectory");
  }
  for (int it = 0; it < 100; ++it) {
    const double mid = 0.5 * (lo + hi);
    (max_error(mid) < bias ? lo : hi) = mid;
  }
  std::mt19937_64 rng(seed ^ 0x94d049bb133111ebULL);
  const double sign = std::bernoulli_distribution(0.5)(rng) ? 1.0 : -1.0;
  const double rate = sign * 0.5 * (lo + hi);
  for (std::size_t k = 0; k < poses.size(); ++k) {
    const Pose drift(Point3::Zero(),
                     Eigen::Quaterniond(Eigen::AngleAxisd(rate * s[k] / length, Point3::UnitZ())));
    const Pose about_pivot = Pose(pivot, Eigen::Quaterniond::Identity()) * drift *
                             Pose(-pivot, Eigen::Quaterniond::Identity());
    poses[k] = about_pivot * poses[k];
  }
  return poses;
}

std::size_t filter_neighbours(std::size_t k, std::size_t count, const FilterConfig& cfg) {
  const auto w = static_cast<std::size_t>(cfg.window);
  const std::size_t lo = k >= w ? k - w : 0;
  const std::size_t hi = std::min(count - 1, k + w);
  return hi - lo;
}

std::vector<DepthImage> filter_depths(const Dataset& data, std::span<const Pose> poses,
                                      const RunConfig& cfg) {
  const auto frames = data.keyframes(data.depths, poses);
  return temporal_filter_sequence(frames, cfg.filter, cfg.threads);
}

PointCloud local_cloud(std::span<const Keyframe> keyframes, std::span<const Pose> odometry,
                       std::size_t first, std::size_t last, double max_depth,
                       double resolution) {
  const Pose last_inv = odometry[last].inverse();
  PointCloud merged;
  merged.frame_id = "keyframe_" + std::to_string(last);
  for (std::size_t k = first; k <= last; ++k) {
    Keyframe kf = keyframes[k];
    kf.pose = last_inv * odometry[k];
    const PointCloud c = depth_to_cloud(kf, max_depth);
    merged.points.insert(merged.points.end(), c.points.begin(), c.points.end());
  }
  PointCloud out = voxel_downsample(merged, resolution);
  out.frame_id = merged.frame_id;
  return out;
}

Localization localize(const Dataset& data, std::span<const DepthImage> filtered,
                      const RunConfig& cfg) {
  Localization loc;
  loc.odometry = odometry_poses(data);
  const auto frames = data.keyframes(filtered, loc.odometry);

  RegistrationConfig reg = cfg.registration;
  reg.thread_count = cfg.threads;
  const GicpTarget target(voxel_downsample(data.prior, cfg.local_resolution),
                          reg.knn_for_covariance, cfg.threads);

  // correction maps odometry poses onto the prior frame; it is refreshed at
  // every accepted registration.
  Pose correction = Pose::identity();
  std::size_t next_initial = 0;

  // The starting pose is known in the prior frame, so keyframe 0 carries the
  // first prior and the rotation factors hang off it.
  PriorMeasurement start;
  start.index = 0;
  start.position = loc.odometry.front().t;
  start.orientation = loc.odometry.front().q;
  start.information = Matrix6::Identity();
  loc.priors.push_back(start);
  loc.initial.resize(data.size());
  const std::size_t n = data.size();
  for (std::size_t first = 0; first < n; first += kLocalCloudWindow) {
    const std::size_t last = std::min(n - 1, first + kLocalCloudWindow - 1);
    const PointCloud local = local_cloud(frames, loc.odometry, first, last,
                                         cfg.change.max_depth, cfg.local_resolution);
    LocalRegistration rec;
    rec.keyframe = last;
    rec.points = local.size();
    rec.initial_guess = correction * loc.odometry[last];
    if (local.size() >= 50) {
      rec.result = register_gicp(local, target, rec.initial_guess, reg);
    }
    for (; next_initial <= last; ++next_initial) {
      loc.initial[next_initial] = correction * loc.odometry[next_initial];
    }
    if (rec.result.accepted) {
      const Pose& T = rec.result.transform;
      correction = T * loc.odometry[last].inverse();
      loc.initial[last] = T;

      // The registration perturbs rotation on the left (world frame); the
      // graph perturbs on the right, so rotate the rotation block.
      Matrix6 ad = Matrix6::Identity();
      ad.topLeftCorner<3, 3>() = T.rotation();
      PriorMeasurement m;
      m.index = last;
      m.position = T.t;
      m.orientation = T.q;
      m.information = ad.transpose() * rec.result.hessian * ad;
      m.information = 0.5 * (m.information + m.information.transpose()).eval();
      loc.priors.push_back(m);
    }
    loc.registrations.push_back(rec);
  }

  PoseGraphConfig pg;
  pg.gauge = Gauge::kFixFirst;
  try {
    loc.optimization = optimize(loc.initial, data.odometry, loc.priors, pg);
  } catch (const RankDeficientError& e) {
    throw PipelineError("optimize", e.what());
  }
  loc.fused = loc.optimization.states;
  return loc;
}

DetectionRun run_detection(const Dataset& data, const RunConfig& cfg) {
  DetectionRun run;
  GraphState filter_poses;
  try {
    filter_poses =
        cfg.poses == PoseSource::kGroundTruth ? data.true_poses() : odometry_poses(data);
    run.filtered = filter_depths(data, filter_poses, cfg);
  } catch (const std::invalid_argument& e) {
    throw PipelineError("filter", e.what());
  }

  switch (cfg.poses) {
    case PoseSource::kGroundTruth:
    case PoseSource::kOdometry:
      run.poses = filter_poses;
      break;
    case PoseSource::kFused:
      try {
        run.localization = localize(data, run.filtered, cfg);
      } catch (const std::invalid_argument& e) {
        throw PipelineError("register", e.what());
      }
      run.poses = run.localization->fused;
      break;
  }
  run.poses = apply_bias(std::move(run.poses), cfg.pose_bias, cfg.seed);

  // Frames whose neighbourhood is too short to pass the count test carry an
  // all-EMPTY filtered image; they are left out of the change detection.
  GraphState poses;
  std::vector<DepthImage> raw;
  std::vector<std::size_t> used;
  for (std::size_t k = 0; k < data.size(); ++k) {
    if (filter_neighbours(k, data.size(), cfg.filter) <= static_cast<std::size_t>(std::max(0, cfg.filter.min_successes))) continue;
    poses.push_back(run.poses[k]);
    raw.push_back(data.depths[k]);
    used.push_back(k);
  }
  if (used.empty()) {
    throw PipelineError("filter", "no keyframe has enough neighbours for the temporal filter");
  }

  ChangeConfig change = cfg.change;
  change.threads = cfg.threads;
  change.alignment = cfg.registration;
  change.alignment.thread_count = cfg.threads;
  auto frames = data.keyframes(run.filtered, run.poses);
  std::vector<Keyframe> subset;
  subset.reserve(used.size());
  for (std::size_t k : used) subset.push_back(std::move(frames[k]));
  run.report = detect(subset, poses, data.prior, data.map_bounds(), change, raw);
  try {
    run.metrics = evaluate_detection(run.report, data.prior, data.changed, change);
  } catch (const std::exception& e) {
    throw PipelineError("evaluate", e.what());
  }
  return run;
}

}  // namespace cloudiff::app
