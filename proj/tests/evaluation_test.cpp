#include "cloudiff/evaluation.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

namespace cloudiff {
namespace {

std::size_t brute_count_within(const PointCloud& c, const PointCloud& other, double th) {
  std::size_t n = 0;
  for (const auto& p : c.points) {
    if (!other.empty() && test::brute_nearest(other, p) <= th) ++n;
  }
  return n;
}

TEST(Metrics, FromCounts) {
  MetricCounts c;
  c.prior_new_obs = 10;
  c.prior_new_obs_tp = 8;
  c.detected_new = 4;
  c.detected_new_tp = 3;
  c.prior_rm_obs = 0;
  c.detected_rm = 0;
  const auto m = compute_metrics(c);
  EXPECT_DOUBLE_EQ(*m.recall_new, 0.8);
  EXPECT_DOUBLE_EQ(*m.precision_new, 0.75);
  EXPECT_FALSE(m.recall_removed.has_value());
  EXPECT_FALSE(m.precision_removed.has_value());
  EXPECT_EQ(format_metric(m.recall_removed), "NA");
  EXPECT_EQ(format_metric(0.5), "0.500000");
  CsvContext ctx{"square_4m", "small", 20.0, 3.2};
  EXPECT_EQ(metrics_csv_row(ctx, m), "square_4m,small,20,3.2,0.800000,0.750000,NA,NA,10,8,4,3,0,0,0,0");
  const auto cols = [](const std::string& s) { return std::count(s.begin(), s.end(), ','); };
  EXPECT_EQ(cols(metrics_csv_header()), cols(metrics_csv_row(ctx, m)));
}

TEST(TruePositives, MatchBruteForce) {
  const auto obs_rm = test::random_cloud(300, 0.0, 10.0, 1);
  const auto obs_new = test::random_cloud(300, 20.0, 30.0, 2);
  const auto rm = test::random_cloud(200, 5.0, 15.0, 3);
  const auto added = test::random_cloud(200, 18.0, 25.0, 4);
  for (double th : {1.0, 3.2}) {
    const auto tp = build_tp_clouds(obs_rm, obs_new, rm, added, th, 2);
    EXPECT_EQ(tp.prior_removed.size(), brute_count_within(obs_rm, rm, th));
    EXPECT_EQ(tp.prior_new.size(), brute_count_within(obs_new, added, th));
    EXPECT_EQ(tp.removed.size(), brute_count_within(rm, obs_rm, th));
    EXPECT_EQ(tp.added.size(), brute_count_within(added, obs_new, th));
  }
}

TEST(TruePositives, PerfectDetectionScoresOne) {
  GroundTruthChanges gt;
  gt.observed_removed = test::random_cloud(100, 0.0, 5.0, 5);
  gt.observed_new = test::random_cloud(80, 10.0, 15.0, 6);
  const auto tp = build_tp_clouds(gt.observed_removed, gt.observed_new, gt.observed_removed,
                                  gt.observed_new, 0.1);
  const auto m = compute_metrics(tp, gt, gt.observed_removed, gt.observed_new);
  EXPECT_DOUBLE_EQ(*m.recall_new, 1.0);
  EXPECT_DOUBLE_EQ(*m.precision_new, 1.0);
  EXPECT_DOUBLE_EQ(*m.recall_removed, 1.0);
  EXPECT_DOUBLE_EQ(*m.precision_removed, 1.0);
  const auto none = build_tp_clouds(gt.observed_removed, gt.observed_new, {}, {}, 0.1);
  const auto z = compute_metrics(none, gt, {}, {});
  EXPECT_DOUBLE_EQ(*z.recall_new, 0.0);
  EXPECT_FALSE(z.precision_new.has_value());
}

TEST(TruePositives, RecallGrowsWithDetections) {
  GroundTruthChanges gt;
  gt.observed_removed = test::random_cloud(200, 0.0, 10.0, 7);
  const auto detected = test::random_cloud(200, 0.0, 14.0, 8);
  double prev = -1.0;
  for (std::size_t n = 0; n <= detected.size(); n += 40) {
    const PointCloud part({detected.points.begin(), detected.points.begin() + n});
    const auto tp = build_tp_clouds(gt.observed_removed, {}, part, {}, 1.0);
    const auto m = compute_metrics(tp, gt, part, {});
    EXPECT_GE(*m.recall_removed, prev);
    prev = *m.recall_removed;
  }
}

TEST(GroundTruth, EditedBuildingsAppearOnTheRightSide) {
  const auto scene = synth::default_scene();
  const auto edit = synth::default_edit();
  const auto changed = synth::apply_edit(scene, edit);
  const auto orig = voxel_downsample(synth::sample_surface(scene, 4.0, 1), 0.8);
  const auto chg = voxel_downsample(synth::sample_surface(changed, 4.0, 2), 0.8);
  const auto gt = build_ground_truth(orig, chg, 3.2);
  ASSERT_FALSE(gt.prior_new.empty());
  ASSERT_FALSE(gt.prior_removed.empty());
  const auto* removed = scene.find(edit.remove.front());
  ASSERT_NE(removed, nullptr);
  for (const auto& p : gt.prior_removed.points) EXPECT_LT(removed->distance(p), 1e-6);
  for (const auto& p : gt.prior_new.points) EXPECT_LT(edit.add.front().distance(p), 1e-6);
  // with no change there is nothing to find
  const auto same = build_ground_truth(orig, orig, 3.2);
  EXPECT_TRUE(same.prior_new.empty());
  EXPECT_TRUE(same.prior_removed.empty());
}

TEST(GroundTruth, RestrictionUsesObservedPredicate) {
  GroundTruthChanges gt;
  gt.prior_new = test::random_cloud(200, 0.0, 10.0, 9);
  gt.prior_removed = test::random_cloud(200, 0.0, 10.0, 10);
  const auto global = test::random_cloud(50, 0.0, 3.0, 11);
  restrict_to_observed(gt, global, ObservedArea(), 2.0);
  EXPECT_EQ(gt.observed_new.size(), brute_count_within(gt.prior_new, global, 2.0));
  EXPECT_EQ(gt.observed_removed.size(), brute_count_within(gt.prior_removed, global, 2.0));
}

std::vector<StampedPose> line_track(std::size_t n, const Pose& T = Pose::identity()) {
  std::vector<StampedPose> out;
  for (std::size_t k = 0; k < n; ++k) {
    const double s = static_cast<double>(k);
    out.push_back({0.1 * s, T * Pose(Point3(s, 0.1 * s * s, 2.0), Eigen::Quaterniond::Identity())});
  }
  return out;
}

TEST(Ate, Examples) {
  const auto gt = line_track(10);
  auto est = gt;
  for (auto& p : est) p.pose.t.x() += 1.0;
  auto s = compute_ate(est, gt);
  EXPECT_NEAR(s.rmse, 1.0, 1e-12);
  EXPECT_NEAR(s.max, 1.0, 1e-12);
  EXPECT_NEAR(s.stddev, 0.0, 1e-6);
  EXPECT_EQ(s.pairs, 10u);
  EXPECT_NEAR(compute_ate(est, gt, 0.01, true).rmse, 0.0, 1e-9);

  est = gt;
  est[3].pose.t.z() += 2.0;  // one error of 2 among 10
  s = compute_ate(est, gt);
  EXPECT_NEAR(s.rmse, std::sqrt(0.4), 1e-12);
  EXPECT_NEAR(s.max, 2.0, 1e-12);
  EXPECT_NEAR(s.stddev, std::sqrt(0.4 - 0.04), 1e-12);
}

TEST(Ate, RigidAlignmentRemovesWorldTransform) {
  const Pose T(Point3(3, -2, 1), so3::exp(Point3(0.1, 0.2, 0.9)));
  const auto gt = line_track(20);
  const auto est = line_track(20, T);
  EXPECT_GT(compute_ate(est, gt).rmse, 1.0);
  EXPECT_NEAR(compute_ate(est, gt, 0.01, true).rmse, 0.0, 1e-9);
}

TEST(Ate, AssociatesByNearestTimestamp) {
  const auto gt = line_track(10);
  auto est = gt;
  for (auto& p : est) p.timestamp += 0.004;
  EXPECT_EQ(compute_ate(est, gt).pairs, 10u);
  for (auto& p : est) p.timestamp += 0.04;
  EXPECT_THROW(compute_ate(est, gt), std::invalid_argument);
  auto shuffled = gt;
  std::reverse(shuffled.begin(), shuffled.end());
  EXPECT_NEAR(compute_ate(gt, shuffled).rmse, 0.0, 1e-15);
}

}  // namespace
}  // namespace cloudiff
