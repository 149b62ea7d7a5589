#include "cloudiff/evaluation.hpp"

#include "cloudiff/kernels.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace cloudiff {
namespace {

std::optional<double> ratio(std::size_t num, std::size_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

GroundTruthChanges build_ground_truth(const PointCloud& original_prior,
                                      const PointCloud& changed_prior,
                                      double change_threshold, int threads) {
  auto cls = classify_changes(changed_prior, original_prior, change_threshold,
                              threads);
  GroundTruthChanges gt;
  gt.prior_new = std::move(cls.new_points);
  gt.prior_removed = std::move(cls.removed_points);
  return gt;
}

void restrict_to_observed(GroundTruthChanges& gt, const PointCloud& global_cloud,
                          const ObservedArea& observed, double change_threshold,
                          int threads) {
  const KdTree index(global_cloud);
  gt.observed_new =
      build_observed_prior(gt.prior_new, index, observed, change_threshold, threads);
  gt.observed_removed = build_observed_prior(gt.prior_removed, index, observed,
                                             change_threshold, threads);
}

TruePositiveClouds build_tp_clouds(const PointCloud& observed_prior_removed,
                                   const PointCloud& observed_prior_new,
                                   const PointCloud& removed,
                                   const PointCloud& added,
                                   double change_threshold, int threads) {
  const KdTree rm_index(removed);
  const KdTree new_index(added);
  const KdTree prior_rm_index(observed_prior_removed);
  const KdTree prior_new_index(observed_prior_new);
  TruePositiveClouds tp;
  tp.prior_removed = kernels::select_within(observed_prior_removed, rm_index,
                                            change_threshold, threads);
  tp.prior_new = kernels::select_within(observed_prior_new, new_index,
                                        change_threshold, threads);
  tp.removed =
      kernels::select_within(removed, prior_rm_index, change_threshold, threads);
  tp.added =
      kernels::select_within(added, prior_new_index, change_threshold, threads);
  return tp;
}

MetricsReport compute_metrics(const MetricCounts& c) {
  MetricsReport m;
  m.counts = c;
  m.recall_new = ratio(c.prior_new_obs_tp, c.prior_new_obs);
  m.precision_new = ratio(c.detected_new_tp, c.detected_new);
  m.recall_removed = ratio(c.prior_rm_obs_tp, c.prior_rm_obs);
  m.precision_removed = ratio(c.detected_rm_tp, c.detected_rm);
  return m;
}

MetricsReport compute_metrics(const TruePositiveClouds& tp,
                              const GroundTruthChanges& gt,
                              const PointCloud& removed,
                              const PointCloud& added) {
  MetricCounts c;
  c.prior_new_obs = gt.observed_new.size();
  c.prior_new_obs_tp = tp.prior_new.size();
  c.detected_new = added.size();
  c.detected_new_tp = tp.added.size();
  c.prior_rm_obs = gt.observed_removed.size();
  c.prior_rm_obs_tp = tp.prior_removed.size();
  c.detected_rm = removed.size();
  c.detected_rm_tp = tp.removed.size();
  return compute_metrics(c);
}

MetricsReport evaluate_detection(const ChangeReport& report,
                                 const PointCloud& original_prior,
                                 const PointCloud& changed_prior,
                                 const ChangeConfig& config,
                                 GroundTruthChanges* gt_out) {
  const double rho = config.downsample_resolution;
  const double th = config.change_threshold;
  const int threads = config.threads;

  GroundTruthChanges gt =
      build_ground_truth(voxel_downsample(original_prior, rho),
                         voxel_downsample(changed_prior, rho), th, threads);
  const PointCloud global = voxel_downsample(report.global_cloud, rho);
  restrict_to_observed(gt, global, report.observed_area, th, threads);

  const PointCloud removed = voxel_downsample(report.removed_points, rho);
  const PointCloud added = voxel_downsample(report.new_points, rho);
  const TruePositiveClouds tp = build_tp_clouds(
      gt.observed_removed, gt.observed_new, removed, added, th, threads);
  MetricsReport m = compute_metrics(tp, gt, removed, added);
  if (gt_out != nullptr) *gt_out = std::move(gt);
  return m;
}

std::string format_metric(const std::optional<double>& v) {
  if (!v) return "NA";
  std::ostringstream os;
  os << std::fixed << std::setprecision(6) << *v;
  return os.str();
}

std::string metrics_csv_header() {
  return "trajectory,noise,th_f,th_ch,R_new,P_new,R_rm,P_rm,"
         "N_p_new_obs,N_p_new_obs_tp,N_new,N_new_tp,"
         "N_p_rm_obs,N_p_rm_obs_tp,N_rm,N_rm_tp";
}

std::string metrics_csv_row(const CsvContext& ctx, const MetricsReport& m) {
  std::ostringstream os;
  const auto& c = m.counts;
  os << ctx.trajectory << ',' << ctx.noise << ',' << ctx.probe_depth << ','
     << ctx.change_threshold << ',' << format_metric(m.recall_new) << ','
     << format_metric(m.precision_new) << ',' << format_metric(m.recall_removed)
     << ',' << format_metric(m.precision_removed) << ',' << c.prior_new_obs << ','
     << c.prior_new_obs_tp << ',' << c.detected_new << ',' << c.detected_new_tp
     << ',' << c.prior_rm_obs << ',' << c.prior_rm_obs_tp << ',' << c.detected_rm
     << ',' << c.detected_rm_tp;
  return os.str();
}

AteStats compute_ate(const std::vector<StampedPose>& estimated,
                     const std::vector<StampedPose>& ground_truth,
                     double max_dt, bool align_se3) {
  std::vector<StampedPose> gt_sorted = ground_truth;
  std::sort(gt_sorted.begin(), gt_sorted.end(),
            [](const auto& a, const auto& b) { return a.timestamp < b.timestamp; });

  std::vector<Point3> est_pts;
  std::vector<Point3> gt_pts;
  for (const auto& e : estimated) {
    auto it = std::lower_bound(
        gt_sorted.begin(), gt_sorted.end(), e.timestamp,
        [](const StampedPose& g, double t) { return g.timestamp < t; });
    const StampedPose* best = nullptr;
    double best_dt = max_dt;
    for (auto cand : {it, it == gt_sorted.begin() ? it : std::prev(it)}) {
      if (cand == gt_sorted.end()) continue;
      const double dt = std::abs(cand->timestamp - e.timestamp);
      if (dt <= best_dt) {
        best_dt = dt;
        best = &*cand;
      }
    }
    if (best == nullptr) continue;
    est_pts.push_back(e.pose.t);
    gt_pts.push_back(best->pose.t);
  }
  if (est_pts.size() < 2) {
    throw std::invalid_argument("compute_ate: fewer than 2 associated poses");
  }

  if (align_se3) {
    Eigen::Matrix3Xd src(3, est_pts.size());
    Eigen::Matrix3Xd dst(3, gt_pts.size());
    for (std::size_t i = 0; i < est_pts.size(); ++i) {
      src.col(static_cast<Eigen::Index>(i)) = est_pts[i];
      dst.col(static_cast<Eigen::Index>(i)) = gt_pts[i];
    }
    const Eigen::Matrix4d T = Eigen::umeyama(src, dst, false);
    for (auto& p : est_pts) p = T.topLeftCorner<3, 3>() * p + T.topRightCorner<3, 1>();
  }

  AteStats s;
  s.pairs = est_pts.size();
  double sum = 0.0;
  double sum2 = 0.0;
  for (std::size_t i = 0; i < est_pts.size(); ++i) {
    const double e = (est_pts[i] - gt_pts[i]).norm();
    sum += e;
    sum2 += e * e;
    s.max = std::max(s.max, e);
  }
  const double n = static_cast<double>(s.pairs);
  const double mean = sum / n;
  s.rmse = std::sqrt(sum2 / n);
  s.stddev = std::sqrt(std::max(0.0, sum2 / n - mean * mean));
  return s;
}

}  // namespace cloudiff
