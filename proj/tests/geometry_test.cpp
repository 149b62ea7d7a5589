#include "cloudiff/geometry.hpp"
#include "cloudiff/kdtree.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <set>
#include <unordered_set>

namespace cloudiff {
namespace {

TEST(Transform, IdentityLeavesCloudUnchanged) {
  const auto c = test::random_cloud(50, -5, 5, 1);
  const auto out = transform_cloud(c, Pose::identity());
  ASSERT_EQ(out.size(), c.size());
  for (std::size_t i = 0; i < c.size(); ++i) EXPECT_EQ(out[i], c[i]);
}

TEST(Transform, PureTranslation) {
  const PointCloud c({Point3(1, 0, 0)});
  const auto out = transform_cloud(c, Pose(Point3(0.2, 0, 0), Eigen::Quaterniond::Identity()));
  EXPECT_NEAR((out[0] - Point3(1.2, 0, 0)).norm(), 0.0, 1e-15);
}

TEST(Transform, RoundTripAndRigidity) {
  std::mt19937_64 rng(7);
  const auto c = test::random_cloud(100, -10, 10, 2);
  for (int trial = 0; trial < 20; ++trial) {
    const Pose T = test::random_pose(rng);
    const auto there = transform_cloud(c, T);
    const auto back = transform_cloud(there, T.inverse());
    for (std::size_t i = 0; i < c.size(); ++i) {
      EXPECT_LT((back[i] - c[i]).norm(), 1e-9);
      const std::size_t j = (i * 37 + 11) % c.size();
      EXPECT_NEAR((there[i] - there[j]).norm(), (c[i] - c[j]).norm(), 1e-9);
    }
  }
}

TEST(Pose, CompositionIsAssociativeAndInverseCancels) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const Pose a = test::random_pose(rng), b = test::random_pose(rng), c = test::random_pose(rng);
    const Pose l = (a * b) * c;
    const Pose r = a * (b * c);
    EXPECT_LT((l.t - r.t).norm(), 1e-9);
    EXPECT_LT(test::angle_between(l.q, r.q), 1e-9);
    EXPECT_NEAR(l.q.norm(), 1.0, 1e-12);
    const Pose e = a * a.inverse();
    EXPECT_LT(e.t.norm(), 1e-9);
    EXPECT_LT(test::angle_between(e.q, Eigen::Quaterniond::Identity()), 1e-9);
  }
}

TEST(So3, ExpLogRoundTrip) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const Point3 phi = Point3(u(rng), u(rng), u(rng)) * 1.7;  // |phi| < 3
    EXPECT_LT((so3::log(so3::exp(phi)) - phi).norm(), 1e-9);
    // Rodrigues' formula as an independent reference.
    const double th = phi.norm();
    const Matrix3 K = so3::hat(phi / th);
    const Matrix3 R = Matrix3::Identity() + std::sin(th) * K + (1 - std::cos(th)) * K * K;
    EXPECT_LT((so3::exp(phi).toRotationMatrix() - R).norm(), 1e-9);
  }
  EXPECT_LT(so3::log(so3::exp(Point3(1e-12, 0, 0))).norm(), 1e-11);
}

TEST(So3, HatIsCrossProduct) {
  const Point3 a(1, -2, 3), b(0.5, 4, -1);
  EXPECT_LT((so3::hat(a) * b - a.cross(b)).norm(), 1e-15);
}

TEST(KdTree, MemberPointHasZeroDistance) {
  const auto c = test::random_cloud(200, 0, 1, 9);
  const KdTree tree(c);
  for (const auto& p : c.points) EXPECT_EQ(nearest_distance(p, tree), 0.0);
}

TEST(KdTree, SinglePoint) {
  const KdTree tree(PointCloud({Point3(0, 0, 0)}));
  EXPECT_DOUBLE_EQ(nearest_distance(Point3(2, 0, 0), tree), 2.0);
}

TEST(KdTree, EmptyIndexRejectsQueries) {
  const KdTree tree{PointCloud{}};
  EXPECT_THROW((void)nearest_distance(Point3::Zero(), tree), std::logic_error);
}

TEST(KdTree, MatchesBruteForceExactly) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto c = test::random_cloud(1000 + 1000 * seed, -20, 20, seed);
    const KdTree tree(c);
    const auto queries = test::random_cloud(300, -25, 25, seed + 100);
    for (const auto& q : queries.points) {
      EXPECT_EQ(nearest_distance(q, tree), test::brute_nearest(c, q));
    }
  }
}

TEST(KdTree, DuplicatePointsAndKnnOrder) {
  PointCloud c = test::random_cloud(300, 0, 2, 4);
  c.points.insert(c.points.end(), c.points.begin(), c.points.begin() + 100);
  const KdTree tree(c);
  const Point3 q(1, 1, 1);
  const auto nn = tree.knn(q, 15);
  ASSERT_EQ(nn.size(), 15u);
  std::vector<double> all;
  for (const auto& p : c.points) all.push_back((p - q).squaredNorm());
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < nn.size(); ++i) {
    EXPECT_EQ(nn[i].squared_distance, all[i]);
    EXPECT_EQ((tree.point(nn[i].index) - q).squaredNorm(), nn[i].squared_distance);
  }
}

TEST(KdTree, RadiusSearchMatchesScan) {
  const auto c = test::random_cloud(2000, 0, 10, 6);
  const KdTree tree(c);
  const auto queries = test::random_cloud(50, 0, 10, 60);
  for (const auto& q : queries.points) {
    auto got = tree.radius_search(q, 1.3);
    std::sort(got.begin(), got.end());
    std::vector<std::size_t> want;
    for (std::size_t i = 0; i < c.size(); ++i) {
      if ((c[i] - q).norm() <= 1.3) want.push_back(i);
    }
    EXPECT_EQ(got, want);
  }
}

TEST(VoxelKey, BoundaryBelongsToHigherVoxel) {
  EXPECT_EQ(voxel_key(Point3(1.0, 0, 0), 0.5).x, 2);
  EXPECT_EQ(voxel_key(Point3(-0.5, 0, 0), 0.5).x, -1);
  EXPECT_EQ(voxel_key(Point3(-0.01, 0, 0), 0.5).x, -1);
}

TEST(VoxelDownsample, SingletonAndCentroid) {
  const PointCloud one({Point3(0.3, 0.4, 0.5)});
  const auto a = voxel_downsample(one, 0.4);
  ASSERT_EQ(a.size(), 1u);
  EXPECT_LT((a[0] - one[0]).norm(), 1e-15);
  const auto b = voxel_downsample(PointCloud({Point3(0.1, 0, 0), Point3(0.3, 0, 0)}), 1.0);
  ASSERT_EQ(b.size(), 1u);
  EXPECT_LT((b[0] - Point3(0.2, 0, 0)).norm(), 1e-15);
}

TEST(VoxelDownsample, RejectsNonPositiveResolution) {
  EXPECT_THROW(voxel_downsample(PointCloud({Point3::Zero()}), 0.0), std::invalid_argument);
  EXPECT_THROW(voxel_downsample(PointCloud({Point3::Zero()}), -1.0), std::invalid_argument);
}

TEST(VoxelDownsample, CountMatchesHashSetOracle) {
  const auto c = test::random_cloud(10000, 0, 10, 11);
  const auto d = voxel_downsample(c, 0.4);
  std::unordered_set<VoxelKey, VoxelKeyHash> keys;
  for (const auto& p : c.points) {
    keys.insert({static_cast<std::int64_t>(std::floor(p.x() / 0.4)),
                 static_cast<std::int64_t>(std::floor(p.y() / 0.4)),
                 static_cast<std::int64_t>(std::floor(p.z() / 0.4))});
  }
  EXPECT_EQ(d.size(), keys.size());
}

TEST(VoxelDownsample, OrderedByKeyAndIdempotentOnVoxelSet) {
  const auto c = test::random_cloud(5000, -3, 3, 12);
  const auto d = voxel_downsample(c, 0.5);
  for (std::size_t i = 1; i < d.size(); ++i) {
    EXPECT_LT(voxel_key(d[i - 1], 0.5), voxel_key(d[i], 0.5));
  }
  const auto dd = voxel_downsample(d, 0.5);
  std::set<VoxelKey> a, b;
  for (const auto& p : d.points) a.insert(voxel_key(p, 0.5));
  for (const auto& p : dd.points) b.insert(voxel_key(p, 0.5));
  EXPECT_EQ(a, b);
}

TEST(VoxelDownsample, InvariantToInputOrder) {
  auto c = test::random_cloud(3000, 0, 4, 13);
  const auto a = voxel_downsample(c, 0.7);
  std::mt19937_64 rng(1);
  std::shuffle(c.points.begin(), c.points.end(), rng);
  const auto b = voxel_downsample(c, 0.7);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_LT((a[i] - b[i]).norm(), 1e-12);
}

TEST(PointCloud, RequireFiniteRejectsNaN) {
  PointCloud c({Point3(0, 0, 0), Point3(std::nan(""), 0, 0)});
  EXPECT_THROW(require_finite(c), std::invalid_argument);
}

}  // namespace
}  // namespace cloudiff
