#pragma once

#include "cloudiff/change_detect.hpp"
#include "cloudiff/geometry.hpp"

#include <optional>
#include <string>
#include <vector>

namespace cloudiff {

struct GroundTruthChanges {
  PointCloud prior_new;         // P_{p,new}
  PointCloud prior_removed;     // P_{p,rm}
  PointCloud observed_new;      // P_{p,new}^obs
  PointCloud observed_removed;  // P_{p,rm}^obs
};

/// Ground-truth change clouds: the classifier run with the changed scene's
/// cloud in place of P_g and the original scene's cloud in place of P_p^obs.
/// Fills prior_new / prior_removed only.
GroundTruthChanges build_ground_truth(const PointCloud& original_prior,
                                      const PointCloud& changed_prior,
                                      double change_threshold, int threads = 0);

/// Fills observed_new / observed_removed by running the observed-prior
/// predicate on each ground-truth cloud.
void restrict_to_observed(GroundTruthChanges& gt, const PointCloud& global_cloud,
                          const ObservedArea& observed, double change_threshold,
                          int threads = 0);

struct TruePositiveClouds {
  PointCloud prior_removed;  // P_{p,rm}^{obs,TP}
  PointCloud prior_new;      // P_{p,new}^{obs,TP}
  PointCloud removed;        // P_rm^TP
  PointCloud added;          // P_new^TP
};

/// A point is a true positive iff its nearest distance to the counterpart
/// cloud is <= th_ch.
TruePositiveClouds build_tp_clouds(const PointCloud& observed_prior_removed,
                                   const PointCloud& observed_prior_new,
                                   const PointCloud& removed,
                                   const PointCloud& added,
                                   double change_threshold, int threads = 0);

struct MetricCounts {
  std::size_t prior_new_obs = 0;     // N(P_{p,new}^obs)
  std::size_t prior_new_obs_tp = 0;  // N(P_{p,new}^{obs,TP})
  std::size_t detected_new = 0;      // N(P_new)
  std::size_t detected_new_tp = 0;   // N(P_new^TP)
  std::size_t prior_rm_obs = 0;
  std::size_t prior_rm_obs_tp = 0;
  std::size_t detected_rm = 0;
  std::size_t detected_rm_tp = 0;
};

// A metric with a zero denominator is std::nullopt (NOT_APPLICABLE).
struct MetricsReport {
  std::optional<double> recall_new;
  std::optional<double> precision_new;
  std::optional<double> recall_removed;
  std::optional<double> precision_removed;
  MetricCounts counts;
};

MetricsReport compute_metrics(const MetricCounts& counts);
MetricsReport compute_metrics(const TruePositiveClouds& tp,
                              const GroundTruthChanges& gt,
                              const PointCloud& removed,
                              const PointCloud& added);

/// Score a detection end to end. Every cloud is re-downsampled at rho_p.
MetricsReport evaluate_detection(const ChangeReport& report,
                                 const PointCloud& original_prior,
                                 const PointCloud& changed_prior,
                                 const ChangeConfig& config,
                                 GroundTruthChanges* gt_out = nullptr);

struct CsvContext {
  std::string trajectory;
  std::string noise;
  double probe_depth = 0.0;       // th_f
  double change_threshold = 0.0;  // th_ch
};

std::string metrics_csv_header();
std::string metrics_csv_row(const CsvContext& ctx, const MetricsReport& m);
std::string format_metric(const std::optional<double>& v);

// Absolute trajectory error on translation.
struct AteStats {
  double rmse = 0.0;
  double stddev = 0.0;
  double max = 0.0;
  std::size_t pairs = 0;
};

/// Associates each estimated pose with the ground-truth pose nearest in time
/// (within `max_dt`). With `align_se3` the estimate is first rigidly aligned
/// (Umeyama, no scale). Throws if fewer than two pairs associate.
AteStats compute_ate(const std::vector<StampedPose>& estimated,
                     const std::vector<StampedPose>& ground_truth,
                     double max_dt = 0.01, bool align_se3 = false);

}  // namespace cloudiff
