#include "cloudiff/kernels.hpp"
#include "cloudiff/occupancy.hpp"
#include "cloudiff/synthworld.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <numbers>

namespace cloudiff {
namespace {

TEST(Kernels, NearestDistancesMatchSerial) {
  const auto target = test::random_cloud(4000, 0, 10, 1);
  const auto queries = test::random_cloud(3000, -1, 11, 2);
  const KdTree tree(target);
  const auto ref = kernels::serial::nearest_distances(queries, tree);
  for (int threads : {1, 2, 4}) {
    EXPECT_EQ(kernels::nearest_distances(queries, tree, threads), ref);
  }
}

TEST(Kernels, EmptyIndexGivesInfinity) {
  const KdTree tree{PointCloud{}};
  const auto d = kernels::nearest_distances(test::random_cloud(5, 0, 1, 1), tree);
  for (double v : d) EXPECT_TRUE(std::isinf(v));
  EXPECT_TRUE(kernels::select_within(test::random_cloud(5, 0, 1, 1), tree, 1.0).empty());
  EXPECT_EQ(kernels::select_beyond(test::random_cloud(5, 0, 1, 1), tree, 1.0).size(), 5u);
}

TEST(Kernels, SelectionsMatchSerialAndPartition) {
  const auto a = test::random_cloud(2000, 0, 10, 3);
  const auto b = test::random_cloud(500, 0, 10, 4);
  const KdTree tree(b);
  const double th = 0.9;
  const auto within = kernels::select_within(a, tree, th, 3);
  const auto beyond = kernels::select_beyond(a, tree, th, 3);
  EXPECT_EQ(within.points, kernels::serial::select_within(a, tree, th).points);
  EXPECT_EQ(beyond.points, kernels::serial::select_beyond(a, tree, th).points);
  EXPECT_EQ(within.size() + beyond.size(), a.size());  // no point sits exactly at th
}

TEST(Kernels, RenderMatchesSerial) {
  const auto scene = synth::default_scene();
  const auto K = CameraIntrinsics::from_fov(64, 36, std::numbers::pi / 2);
  const Pose pose(Point3(50, 45, 4), synth::camera_orientation(0.3, 0.05));
  const auto a = synth::render_depth(scene, pose, K, 3);
  const auto b = synth::serial::render_depth(scene, pose, K);
  EXPECT_EQ(a.depth, b.depth);
}

}  // namespace
}  // namespace cloudiff
