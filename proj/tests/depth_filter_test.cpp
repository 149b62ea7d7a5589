#include "cloudiff/depth_filter.hpp"
#include "cloudiff/synthworld.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

namespace cloudiff {
namespace {

TEST(Intrinsics, Validation) {
  CameraIntrinsics k = test::small_camera();
  EXPECT_NO_THROW(k.validate());
  k.fx = 0.0;
  EXPECT_THROW(k.validate(), std::invalid_argument);
  k = test::small_camera();
  k.cx = k.width;
  EXPECT_THROW(k.validate(), std::invalid_argument);
}

TEST(Reproject, IdentityPoseMapsPixelsToThemselves) {
  const auto frames = test::scene_window(1, 0.0, test::small_camera());
  const auto out = reproject_depth(frames[2], frames[2]);
  for (std::size_t i = 0; i < out.depth.size(); ++i) {
    EXPECT_NEAR(out.depth[i], frames[2].depth.depth[i], 1e-9);
  }
}

TEST(Reproject, AxialTranslation) {
  const auto K = test::small_camera();
  const auto src = test::wall_frame(0, 5.0, Point3::Zero(), K);
  auto dst = test::wall_frame(1, 5.0, Point3(0, 0, 1.0), K);
  const auto out = reproject_depth(src, dst);
  std::size_t filled = 0;
  for (double d : out.depth) {
    if (d > 0.0) {
      EXPECT_NEAR(d, 4.0, 1e-12);
      ++filled;
    }
  }
  EXPECT_GT(filled, out.depth.size() / 2);
}

TEST(Reproject, MatchesRayCastOracle) {
  const auto K = test::small_camera();
  const auto scene = synth::default_scene();
  for (std::uint64_t seed : {2u, 3u, 4u}) {
    const auto frames = test::scene_window(seed, 0.0, K);
    const Keyframe& src = frames[0];
    const Keyframe& dst = frames[3];
    const auto got = reproject_depth(src, dst);
    // Oracle: intersect every source pixel ray with the scene, move the hit
    // into the target camera and splat with the nearest-wins rule.
    DepthImage want(K.width, K.height);
    const Pose target_inv = dst.pose.inverse();
    for (int v = 0; v < K.height; ++v) {
      for (int u = 0; u < K.width; ++u) {
        const Point3 dir = src.pose.rotation() * Point3((u - K.cx) / K.fx, (v - K.cy) / K.fy, 1.0);
        const auto t = synth::intersect(scene, src.pose.t, dir);
        if (!t) continue;
        const Point3 p = target_inv * (src.pose.t + *t * dir);
        if (p.z() <= 0.0) continue;
        const long tu = std::lround(K.fx * p.x() / p.z() + K.cx);
        const long tv = std::lround(K.fy * p.y() / p.z() + K.cy);
        if (tu < 0 || tv < 0 || tu >= K.width || tv >= K.height) continue;
        double& slot = want.at(int(tu), int(tv));
        if (!(slot > 0.0) || p.z() < slot) slot = p.z();
      }
    }
    for (std::size_t i = 0; i < want.depth.size(); ++i) {
      EXPECT_NEAR(got.depth[i], want.depth[i], 1e-6);
    }
  }
}

TEST(Reproject, RejectsMismatchedIntrinsics) {
  const auto a = test::wall_frame(0, 5.0, Point3::Zero(), test::small_camera(64, 48));
  const auto b = test::wall_frame(1, 5.0, Point3::Zero(), test::small_camera(32, 24));
  EXPECT_THROW(reproject_depth(a, b), std::invalid_argument);
}

TEST(TemporalFilter, ConsensusOfIdenticalWalls) {
  const auto K = test::small_camera();
  std::vector<Keyframe> w;
  for (int j = 0; j < 5; ++j) w.push_back(test::wall_frame(j, 5.0, Point3::Zero(), K));
  const auto out = temporal_filter(w, 2, {});
  for (double d : out.depth) EXPECT_EQ(d, 5.0);
}

TEST(TemporalFilter, SingleAgreeingNeighbourIsNotEnough) {
  const auto K = test::small_camera();
  std::vector<Keyframe> w = {
      test::wall_frame(0, 9.0, Point3::Zero(), K), test::wall_frame(1, 5.05, Point3::Zero(), K),
      test::wall_frame(2, 5.0, Point3::Zero(), K), test::wall_frame(3, 7.0, Point3::Zero(), K),
      test::wall_frame(4, 3.0, Point3::Zero(), K)};
  const auto out = temporal_filter(w, 2, {});
  EXPECT_EQ(out.valid_count(), 0u);
  FilterConfig one;
  one.min_successes = 1;
  EXPECT_EQ(temporal_filter(w, 2, one).valid_count(), 0u);  // needs strictly more than 1
  w[3] = test::wall_frame(3, 4.9, Point3::Zero(), K);
  const auto two = temporal_filter(w, 2, one);
  EXPECT_EQ(two.valid_count(), two.depth.size());
  EXPECT_NEAR(two.depth[0], (5.0 + 5.05 + 4.9) / 3.0, 1e-12);
}

TEST(TemporalFilter, MissingCentreRejected) {
  const auto K = test::small_camera();
  std::vector<Keyframe> w = {test::wall_frame(0, 5.0, Point3::Zero(), K)};
  EXPECT_THROW(temporal_filter(w, 7, {}), std::invalid_argument);
  FilterConfig bad;
  bad.depth_threshold = 0.0;
  EXPECT_THROW(temporal_filter(w, 0, bad), std::invalid_argument);
}

TEST(TemporalFilter, ReducesGaussianNoiseOnWall) {
  const auto K = test::small_camera();
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(0.0, 0.05);
  std::vector<Keyframe> w;
  for (int j = 0; j < 5; ++j) {
    auto kf = test::wall_frame(j, 5.0, Point3::Zero(), K);
    for (double& d : kf.depth.depth) d += g(rng);
    w.push_back(std::move(kf));
  }
  const auto out = temporal_filter(w, 2, {});
  double raw = 0.0, filt = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < out.depth.size(); ++i) {
    if (!(out.depth[i] > 0.0)) continue;
    raw += std::pow(w[2].depth.depth[i] - 5.0, 2);
    filt += std::pow(out.depth[i] - 5.0, 2);
    ++n;
  }
  ASSERT_GT(n, out.depth.size() / 2);
  EXPECT_LT(std::sqrt(filt / n), std::sqrt(raw / n));
}

TEST(TemporalFilter, SubsetAndMonotonicity) {
  const auto K = test::small_camera();
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto w = test::scene_window(100 + seed, 0.02, K);
    const auto base = temporal_filter(w, 10, {});
    EXPECT_GT(base.valid_count(), 0u);
    for (std::size_t i = 0; i < base.depth.size(); ++i) {
      if (base.depth[i] > 0.0) EXPECT_GT(w[2].depth.depth[i], 0.0);
    }
    FilterConfig stricter;
    stricter.min_successes = 3;
    const auto s = temporal_filter(w, 10, stricter);
    FilterConfig looser;
    looser.depth_threshold = 0.5;
    const auto l = temporal_filter(w, 10, looser);
    for (std::size_t i = 0; i < base.depth.size(); ++i) {
      if (s.depth[i] > 0.0) EXPECT_GT(base.depth[i], 0.0);
      if (base.depth[i] > 0.0) EXPECT_GT(l.depth[i], 0.0);
    }
  }
}

TEST(TemporalFilter, PerfectDataFixpoint) {
  const auto K = test::small_camera();
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (int trial = 0; trial < 10; ++trial) {
    const double depth = 4.0 + 10.0 * (u(rng) + 0.5);
    std::vector<Keyframe> w;
    for (int j = 0; j < 5; ++j) w.push_back(test::wall_frame(j, depth, Point3(u(rng), u(rng), 0), K));
    const auto out = temporal_filter(w, 2, {});
    EXPECT_GT(out.valid_count(), 0u);
    for (std::size_t i = 0; i < out.depth.size(); ++i) {
      if (out.depth[i] > 0.0) EXPECT_NEAR(out.depth[i], w[2].depth.depth[i], 1e-12);
    }
  }
}

TEST(TemporalFilter, SequenceMatchesPerFrameAndIsThreadIndependent) {
  const auto K = test::small_camera();
  const auto w = test::scene_window(21, 0.01, K);
  const auto seq1 = temporal_filter_sequence(w, {}, 1);
  const auto seq3 = temporal_filter_sequence(w, {}, 3);
  ASSERT_EQ(seq1.size(), w.size());
  for (std::size_t k = 0; k < w.size(); ++k) EXPECT_EQ(seq1[k].depth, seq3[k].depth);
  EXPECT_EQ(seq1[2].depth, temporal_filter(w, w[2].id, {}).depth);
}

TEST(DepthToCloud, EmptyAndCentrePixel) {
  CameraIntrinsics K;
  K.width = 3;
  K.height = 3;
  K.fx = K.fy = 2.0;
  K.cx = K.cy = 1.0;
  Keyframe kf;
  kf.intrinsics = K;
  kf.depth = DepthImage(3, 3);
  EXPECT_TRUE(depth_to_cloud(kf, 30.0).empty());
  kf.depth.at(1, 1) = 2.0;
  const auto c = depth_to_cloud(kf, 30.0);
  ASSERT_EQ(c.size(), 1u);
  EXPECT_LT((c[0] - Point3(0, 0, 2)).norm(), 1e-15);
  EXPECT_TRUE(depth_to_cloud(kf, 2.0).empty());  // strictly below th_d
}

TEST(DepthToCloud, RenderedFrameLandsOnSurface) {
  const auto K = test::small_camera(96, 64);
  const auto scene = synth::default_scene();
  const auto frames = test::scene_window(31, 0.0, K);
  const auto cloud = depth_to_cloud(frames[2], 1e9);
  ASSERT_GT(cloud.size(), 100u);
  for (const auto& p : cloud.points) {
    double d = std::abs(p.z() - scene.bounds.min.z());
    for (const auto& b : scene.boxes) {
      const Point3 lo = b.min - p, hi = p - b.max;
      const double outside = lo.cwiseMax(hi).cwiseMax(0.0).norm();
      const double inside = -std::min(lo.cwiseMax(hi).maxCoeff(), 0.0);
      d = std::min(d, outside > 0.0 ? outside : inside);
    }
    EXPECT_LT(d, 1e-6);
  }
}

}  // namespace
}  // namespace cloudiff
