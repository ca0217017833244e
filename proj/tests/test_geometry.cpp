#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "geoctx/error.hpp"
#include "geoctx/geometry.hpp"
#include "geoctx/spatial_hash.hpp"
#include "support.hpp"

using namespace geoctx;
using namespace geoctx::geom;
using geoctx::testing::random_pose;
using geoctx::testing::random_rotation;
using geoctx::testing::random_sim3;
using geoctx::testing::random_vec;

TEST(Pose, ComposeWithInverseIsIdentity) {
  Rng rng(1);
  for (int i = 0; i < 50; ++i) {
    const Pose p = random_pose(rng);
    const Pose e = compose(p, p.inverse());
    EXPECT_LT((e.rotation - Mat3::Identity()).norm(), 1e-12);
    EXPECT_LT(e.translation.norm(), 1e-12);
  }
}

TEST(Pose, RelativePoseExpressesJInI) {
  Rng rng(2);
  const Pose a = random_pose(rng), b = random_pose(rng);
  const Pose r = relative_pose(a, b);
  const Vec3 x = random_vec(rng);
  // Mapping through r then a equals mapping through b.
  EXPECT_LT((a.apply(r.apply(x)) - b.apply(x)).norm(), 1e-12);
}

TEST(Pose, RelativePoseIsInvariantToGlobalRigidMotion) {
  Rng rng(3);
  for (int i = 0; i < 20; ++i) {
    const Pose g = random_pose(rng), a = random_pose(rng), b = random_pose(rng);
    const Pose r0 = relative_pose(a, b), r1 = relative_pose(g * a, g * b);
    EXPECT_LT((r0.rotation - r1.rotation).norm(), 1e-12);
    EXPECT_LT((r0.translation - r1.translation).norm(), 1e-12);
  }
}

TEST(Rotation, GeodesicErrorOfKnownAngle) {
  for (double deg : {0.0, 1.0, 45.0, 90.0, 179.0}) {
    const double rad = deg * std::numbers::pi / 180.0;
    const Mat3 r = rotation_from_axis_angle(Vec3(1, 2, 3), rad);
    EXPECT_NEAR(geodesic_rotation_error(Mat3::Identity(), r), rad, 1e-7) << deg;
  }
}

TEST(Rotation, QuaternionRoundTripHasNonNegativeW) {
  Rng rng(4);
  for (int i = 0; i < 100; ++i) {
    const Mat3 r = random_rotation(rng);
    const auto q = quaternion_from_rotation(r);
    EXPECT_GE(q[0], 0.0);
    EXPECT_NEAR(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3], 1.0, 1e-12);
    EXPECT_LT((rotation_from_quaternion(q[0], q[1], q[2], q[3]) - r).norm(), 1e-12);
  }
}

TEST(Sim3, ComposeAndInverse) {
  Rng rng(5);
  const Sim3 a = random_sim3(rng), b = random_sim3(rng);
  const Vec3 x = random_vec(rng);
  EXPECT_LT((compose(a, b).apply(x) - a.apply(b.apply(x))).norm(), 1e-12);
  EXPECT_LT((a.inverse().apply(a.apply(x)) - x).norm(), 1e-12);
}

TEST(Umeyama, RecoversRandomSimilarityOnNoiseFreeClouds) {
  Rng rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    const Sim3 truth = random_sim3(rng);
    std::vector<Vec3> src, dst;
    for (int i = 0; i < 50; ++i) {
      src.push_back(random_vec(rng, -2.0, 2.0));
      dst.push_back(truth.apply(src.back()));
    }
    const Sim3 est = umeyama(src, dst, true);
    EXPECT_NEAR(est.scale, truth.scale, 1e-9);
    EXPECT_LT((est.rotation - truth.rotation).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LT((est.translation - truth.translation).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(Umeyama, WithoutScaleReturnsUnitScale) {
  Rng rng(7);
  Pose p = random_pose(rng);
  std::vector<Vec3> src, dst;
  for (int i = 0; i < 20; ++i) {
    src.push_back(random_vec(rng));
    dst.push_back(p.apply(src.back()));
  }
  const Sim3 est = umeyama(src, dst, false);
  EXPECT_EQ(est.scale, 1.0);
  EXPECT_LT((est.rotation - p.rotation).norm(), 1e-9);
}

TEST(Umeyama, Errors) {
  std::vector<Vec3> two{Vec3(0, 0, 0), Vec3(1, 0, 0)};
  EXPECT_THROW(umeyama(two, two, true), DegenerateError);
  std::vector<Vec3> line{Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(2, 0, 0), Vec3(3, 0, 0)};
  EXPECT_THROW(umeyama(line, line, true), DegenerateError);
  std::vector<Vec3> three{Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0)};
  EXPECT_THROW(umeyama(three, line, true), ShapeError);
}

TEST(Icp, RecoversSmallOffset) {
  Rng rng(8);
  PointCloud dst, src;
  for (int i = 0; i < 400; ++i) dst.points.push_back(random_vec(rng, 0.0, 1.0));
  const Vec3 offset(0.02, -0.01, 0.005);
  for (const auto& p : dst.points) src.points.push_back(p - offset);
  const IcpResult r = icp_refine(src, dst, Sim3::identity());
  EXPECT_LT((r.transform.translation - offset).norm(), 1e-6);
  EXPECT_LT((r.transform.rotation - Mat3::Identity()).norm(), 1e-6);
  ASSERT_FALSE(r.rms_history.empty());
  for (std::size_t i = 1; i < r.rms_history.size(); ++i) EXPECT_LE(r.rms_history[i], r.rms_history[i - 1] + 1e-15);
}

TEST(Icp, NoCorrespondencesIsAnError) {
  PointCloud a, b;
  a.points = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0)};
  b.points = {Vec3(10, 0, 0), Vec3(11, 0, 0), Vec3(10, 1, 0)};
  EXPECT_THROW(icp_refine(a, b, Sim3::identity()), NoOverlapError);
}

TEST(Camera, ProjectUnprojectRoundTrip) {
  Intrinsics k{50.0, 55.0, 15.5, 11.0, 32, 24};
  Rng rng(9);
  const Pose pose = random_pose(rng);
  DepthRaster d(32, 24);
  for (float& v : d.values) v = static_cast<float>(rng.uniform(0.5, 4.0));
  d.at(3, 3) = 0.0f;  // invalid pixel is skipped
  const PointCloud pts = unproject(d, k, pose);
  EXPECT_EQ(pts.size(), 32u * 24u - 1u);
  std::size_t idx = 0;
  for (std::uint32_t v = 0; v < 24; ++v)
    for (std::uint32_t u = 0; u < 32; ++u) {
      if (u == 3 && v == 3) continue;
      const Vec3 cam = pose.inverse().apply(pts.points[idx++]);
      double pu, pv;
      ASSERT_TRUE(project(cam, k, pu, pv));
      EXPECT_NEAR(pu, u, 1e-9);
      EXPECT_NEAR(pv, v, 1e-9);
      EXPECT_NEAR(cam.z(), d.at(u, v), 1e-9);
    }
}

TEST(Camera, IntrinsicsValidation) {
  EXPECT_THROW((Intrinsics{0.0, 1.0, 0.0, 0.0, 4, 4}.validate()), ConfigError);
  EXPECT_THROW((Intrinsics{1.0, 1.0, 5.0, 0.0, 4, 4}.validate()), ConfigError);
  EXPECT_NO_THROW((Intrinsics{1.0, 1.0, 2.0, 2.0, 4, 4}.validate()));
}

TEST(Camera, DownscaledGridCentersMatchPixelBlocks) {
  const Intrinsics k{100.0, 100.0, 31.5, 23.5, 64, 48};
  const Intrinsics g = k.downscaled(8);
  EXPECT_EQ(g.width, 8u);
  EXPECT_EQ(g.height, 6u);
  // Cell (i, j) covers pixels [8i, 8i+7]; its center 8i + 3.5 must map to the
  // same ray as grid coordinate i.
  for (std::uint32_t i = 0; i < g.width; ++i) {
    const double pixel = 8.0 * i + 3.5;
    EXPECT_NEAR((pixel - k.cx) / k.fx, (i - g.cx) / g.fx, 1e-12);
  }
}

TEST(Flow, ZeroForSamePoseAndPositiveForMotion) {
  const Intrinsics k{40.0, 40.0, 16.0, 12.0, 32, 24};
  DepthRaster d(32, 24, 2.0f);
  const Pose p = Pose::identity();
  EXPECT_NEAR(mean_flow_magnitude(d, p, p, k).magnitude, 0.0, 1e-12);
  Pose q = p;
  q.translation = Vec3(0.1, 0.0, 0.0);
  const FlowResult f = mean_flow_magnitude(d, p, q, k);
  // Fronto-parallel plane at depth 2: every pixel shifts by fx·tx/z = 2 px.
  EXPECT_NEAR(f.magnitude, 2.0, 1e-9);
}

TEST(SpatialHash, NearestMatchesBruteForce) {
  Rng rng(10);
  std::vector<Vec3> pts;
  for (int i = 0; i < 2000; ++i) pts.push_back(random_vec(rng, -3.0, 3.0));
  const SpatialHash hash(pts, 0.25);
  for (int q = 0; q < 300; ++q) {
    const Vec3 x = random_vec(rng, -4.0, 4.0);
    double best = std::numeric_limits<double>::infinity();
    std::size_t bi = 0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const double d = (pts[i] - x).norm();
      if (d < best) best = d, bi = i;
    }
    const auto hit = hash.nearest(x);
    EXPECT_EQ(hit.index, bi);
    EXPECT_NEAR(hit.distance, best, 1e-12);
    const auto within = hash.nearest_within(x, 0.3);
    EXPECT_EQ(within.has_value(), best <= 0.3);
  }
}
