#include "cloudiff/change_detect.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

namespace cloudiff {
namespace {

std::vector<Point3> brute_within(const PointCloud& c, const PointCloud& other, double th,
                                 bool within) {
  std::vector<Point3> out;
  for (const auto& p : c.points) {
    const double d = other.empty() ? HUGE_VAL : test::brute_nearest(other, p);
    if ((d < th) == within) out.push_back(p);
  }
  return out;
}

ObservedArea box_area(const Point3& lo, const Point3& hi) {
  auto map = std::make_shared<OccupancyMap>(1.0, Bounds{Point3(-20, -20, -20), Point3(20, 20, 20)});
  for (auto x = std::int64_t(lo.x()); x < std::int64_t(hi.x()); ++x)
    for (auto y = std::int64_t(lo.y()); y < std::int64_t(hi.y()); ++y)
      for (auto z = std::int64_t(lo.z()); z < std::int64_t(hi.z()); ++z)
        map->mark(VoxelKey{x, y, z}, VoxelState::kFree);
  return ObservedArea(map, Pose::identity());
}

TEST(ChangeConfigTest, Validation) {
  ChangeConfig c;
  EXPECT_NO_THROW(c.validate());
  c.change_threshold = 0.5;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.octree_resolution = -1.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(ObservedPrior, MatchesPredicateOracle) {
  const auto prior = test::random_cloud(1500, -10.0, 10.0, 1);
  const auto global = test::random_cloud(300, -10.0, 0.0, 2);
  const auto area = box_area(Point3(2, 2, 2), Point3(8, 8, 8));
  const KdTree index(global);
  for (double th : {0.5, 1.5, 3.2}) {
    const auto got = build_observed_prior(prior, index, area, th, 2);
    std::vector<Point3> want;
    for (const auto& p : prior.points) {
      if (area.contains(p) || test::brute_nearest(global, p) <= th) want.push_back(p);
    }
    EXPECT_EQ(got.points, want) << th;
  }
  const auto only_area = build_observed_prior(prior, KdTree(), area, 3.2);
  for (const auto& p : only_area.points) EXPECT_TRUE(area.contains(p));
  EXPECT_GT(only_area.size(), 0u);
}

TEST(ObservedAreaQuery, MapsQueriesIntoMapFrame) {
  auto map = std::make_shared<OccupancyMap>(1.0, Bounds{Point3(-5, -5, -5), Point3(5, 5, 5)});
  map->mark(VoxelKey{0, 0, 0}, VoxelState::kOccupied);
  const ObservedArea shifted(map, Pose(Point3(-3, 0, 0), Eigen::Quaterniond::Identity()));
  EXPECT_TRUE(shifted.contains(Point3(3.5, 0.5, 0.5)));
  EXPECT_FALSE(shifted.contains(Point3(0.5, 0.5, 0.5)));
  EXPECT_FALSE(ObservedArea().contains(Point3::Zero()));
}

TEST(Classify, MatchesBruteForceAndIsSymmetric) {
  const auto a = test::random_cloud(800, 0.0, 20.0, 3);
  const auto b = test::random_cloud(600, 5.0, 25.0, 4);
  for (double th : {0.8, 2.0, 3.2}) {
    const auto c = classify_changes(a, b, th, 2);
    EXPECT_EQ(c.new_points.points, brute_within(a, b, th, false));
    EXPECT_EQ(c.removed_points.points, brute_within(b, a, th, false));
    const auto swapped = classify_changes(b, a, th, 2);
    EXPECT_EQ(swapped.new_points.points, c.removed_points.points);
    EXPECT_EQ(swapped.removed_points.points, c.new_points.points);
  }
}

TEST(Classify, ThresholdIsInclusive) {
  const PointCloud a({Point3(0, 0, 0)});
  const PointCloud b({Point3(3.2, 0, 0)});
  const auto c = classify_changes(a, b, 3.2);
  EXPECT_EQ(c.new_points.size(), 1u);
  EXPECT_EQ(c.removed_points.size(), 1u);
  EXPECT_EQ(classify_changes(a, b, 3.2000001).new_points.size(), 0u);
}

TEST(Classify, MonotoneInThreshold) {
  const auto a = test::random_cloud(700, 0.0, 15.0, 5);
  const auto b = test::random_cloud(700, 3.0, 18.0, 6);
  std::size_t prev_new = SIZE_MAX, prev_rm = SIZE_MAX;
  for (double th = 0.5; th < 6.0; th += 0.5) {
    const auto c = classify_changes(a, b, th);
    EXPECT_LE(c.new_points.size(), prev_new);
    EXPECT_LE(c.removed_points.size(), prev_rm);
    prev_new = c.new_points.size();
    prev_rm = c.removed_points.size();
  }
}

TEST(Classify, IdenticalCloudsHaveNoChangesAndEmptyMeansAllChanged) {
  const auto a = test::random_cloud(500, 0.0, 10.0, 7);
  const auto c = classify_changes(a, a, 0.1);
  EXPECT_TRUE(c.new_points.empty());
  EXPECT_TRUE(c.removed_points.empty());
  const auto e = classify_changes(a, PointCloud(), 3.2);
  EXPECT_EQ(e.new_points.size(), a.size());
  EXPECT_TRUE(e.removed_points.empty());
  const auto f = classify_changes(PointCloud(), a, 3.2);
  EXPECT_EQ(f.removed_points.size(), a.size());
}

TEST(Classify, ChangedPointsOutsideOtherCloudNeighbourhood) {
  // Adding points far away from a cloud only adds to P_new.
  const auto base = test::random_cloud(400, 0.0, 10.0, 8);
  auto extended = base;
  const auto extra = test::random_cloud(50, 30.0, 35.0, 9);
  extended.points.insert(extended.points.end(), extra.points.begin(), extra.points.end());
  const auto c = classify_changes(extended, base, 3.2);
  EXPECT_EQ(c.new_points.points, extra.points);
  EXPECT_TRUE(c.removed_points.empty());
}

TEST(GlobalCloud, UnionOfBackprojectedFrames) {
  const auto K = test::small_camera(32, 24);
  const auto w = test::scene_window(51, 0.0, K);
  std::vector<Pose> poses;
  for (const auto& f : w) poses.push_back(Pose(Point3(0.3, -0.1, 0.2), Eigen::Quaterniond::Identity()) * f.pose);
  const auto g = build_global_cloud(w, poses, 30.0, 0.8);
  PointCloud all;
  for (std::size_t k = 0; k < w.size(); ++k) {
    for (int v = 0; v < K.height; ++v) {
      for (int u = 0; u < K.width; ++u) {
        const double d = w[k].depth.at(u, v);
        if (!(d > 0.0) || d >= 30.0) continue;
        all.points.push_back(poses[k] * Point3((u - K.cx) / K.fx * d, (v - K.cy) / K.fy * d, d));
      }
    }
  }
  const auto want = voxel_downsample(all, 0.8);
  ASSERT_EQ(g.size(), want.size());
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_LT((g[i] - want[i]).norm(), 1e-9);
  EXPECT_THROW(build_global_cloud(w, std::span<const Pose>(poses).first(1), 30.0, 0.8),
               std::invalid_argument);
}

TEST(Alignment, RemovesHalfMetreOffset) {
  const auto prior = voxel_downsample(test::building_cloud(20000, 11), 0.4);
  const Pose offset(Point3(0.5, 0.0, 0.0), Eigen::Quaterniond::Identity());
  const auto global = transform_cloud(voxel_downsample(test::building_cloud(20000, 12), 0.4), offset);
  const auto al = align_global_to_prior(global, prior, {});
  ASSERT_TRUE(al.accepted);
  EXPECT_LT((al.registration.transform.t - Point3(-0.5, 0, 0)).norm(), 0.05);
  const auto before = classify_changes(global, prior, 0.3);
  const auto after = classify_changes(al.aligned, prior, 0.3);
  EXPECT_LT(after.new_points.size(), before.new_points.size());
  EXPECT_THROW(align_global_to_prior(PointCloud(), prior, {}), std::invalid_argument);
}

TEST(Detect, UnchangedSceneHasFewChanges) {
  const auto K = test::small_camera(64, 48);
  const auto w = test::scene_window(61, 0.0, K);
  std::vector<Pose> poses;
  for (const auto& f : w) poses.push_back(f.pose);
  const auto prior = synth::sample_surface(synth::default_scene(), 4.0, 3);
  ChangeConfig cfg;
  cfg.align_to_prior = false;
  const auto r = detect(w, poses, prior, {Point3(0, 0, -2), Point3(100, 100, 40)}, cfg);
  ASSERT_GT(r.global_cloud.size(), 100u);
  EXPECT_TRUE(r.new_points.empty());
  EXPECT_LT(r.removed_points.size(), r.observed_prior.size() / 5 + 1);
  for (const auto& p : r.observed_prior.points) {
    EXPECT_TRUE(r.observed_area.contains(p) ||
                test::brute_nearest(r.global_cloud, p) <= cfg.change_threshold);
  }
  ChangeConfig bad = cfg;
  bad.change_threshold = 0.1;
  EXPECT_THROW(detect(w, poses, prior, {}, bad), std::invalid_argument);
}

TEST(Detect, FailuresCarryTheirStage) {
  const auto K = test::small_camera(16, 12);
  const auto w = test::scene_window(62, 0.0, K);
  std::vector<Pose> poses;
  for (const auto& f : w) poses.push_back(f.pose);
  ChangeConfig cfg;
  cfg.align_to_prior = false;
  const std::vector<DepthImage> raw(2, w[0].depth);
  try {
    detect(w, poses, test::random_cloud(10, 0, 1, 1), {Point3(0, 0, -2), Point3(100, 100, 40)}, cfg, raw);
    FAIL();
  } catch (const PipelineError& e) {
    EXPECT_EQ(e.stage(), "build_observed_area");
  }
}

}  // namespace
}  // namespace cloudiff
