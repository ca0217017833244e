#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "geoctx/engine.hpp"
#include "geoctx/error.hpp"
#include "geoctx/metrics.hpp"
#include "geoctx/rng.hpp"
#include "model.hpp"
#include "support.hpp"

using namespace geoctx;
using namespace geoctx::engine;

namespace {

// 116x8 rasters with patch 4 give a 29x2 grid, M = 58.
std::vector<ImageRaster> random_frames(std::size_t count, std::uint64_t seed, std::uint32_t w = 116,
                                       std::uint32_t h = 8) {
  Rng rng(seed);
  std::vector<ImageRaster> out;
  for (std::size_t i = 0; i < count; ++i) {
    ImageRaster r(w, h);
    for (float& v : r.values) v = static_cast<float>(rng.uniform());
    out.push_back(std::move(r));
  }
  return out;
}

EngineConfig toy_config(std::uint64_t seed, std::size_t anchors = 3, std::size_t window = 8) {
  EngineConfig c;
  c.pairs = 2;
  c.width = 64;
  c.heads = 4;
  c.patch = 4;
  c.anchors = anchors;
  c.window = window;
  c.seed = seed;
  return c;
}

double max_output_diff(const FrameOutput& a, const FrameOutput& b) {
  double d = (a.pose.translation - b.pose.translation).cwiseAbs().maxCoeff();
  for (int i = 0; i < 4; ++i) d = std::max(d, std::abs(a.quaternion[i] - b.quaternion[i]));
  for (std::size_t i = 0; i < a.depth.size(); ++i) {
    d = std::max(d, static_cast<double>(std::abs(a.depth.values[i] - b.depth.values[i])));
    d = std::max(d, static_cast<double>(std::abs(a.uncertainty.values[i] - b.uncertainty.values[i])));
  }
  return d;
}

}  // namespace

TEST(EngineConfig, Validation) {
  EngineConfig c = toy_config(0);
  EXPECT_NO_THROW(c.validate());
  c.width = 60;  // not divisible by 2 x 4
  EXPECT_THROW(c.validate(), ConfigError);
  c = toy_config(0);
  c.anchors = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = toy_config(0);
  c.window = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = toy_config(0);
  c.pairs = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Engine, StreamingMatchesBatchForward) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    Engine e(toy_config(seed, 3, 4));
    const auto frames = random_frames(12, 100 + seed);
    const RunResult r = run_direct(e, frames);
    ASSERT_EQ(e.image_tokens(), 58u);
    const auto batch = batch_forward(e, frames);
    ASSERT_EQ(batch.size(), r.frames.size());
    for (std::size_t t = 0; t < batch.size(); ++t) EXPECT_LE(max_output_diff(r.frames[t], batch[t]), 1e-5) << t;
  }
}

TEST(Engine, StreamingMatchesBatchWithKeyframeSkips) {
  EngineConfig cfg = toy_config(9, 2, 3);
  cfg.keyframe = kv::KeyframePolicy::parse("every:3");
  Engine e(cfg);
  const auto frames = random_frames(20, 77);
  const RunResult r = run_direct(e, frames);
  std::unique_ptr<bool[]> kept(new bool[frames.size()]);
  for (std::size_t t = 0; t < frames.size(); ++t) kept[t] = r.frames[t].stats.keyframe;
  const auto batch = batch_forward(e, frames, std::span<const bool>(kept.get(), frames.size()));
  for (std::size_t t = 0; t < batch.size(); ++t) EXPECT_LE(max_output_diff(r.frames[t], batch[t]), 1e-5) << t;
  // A skipped frame leaves the cache untouched.
  for (std::size_t t = 3; t < frames.size(); ++t)
    if (!r.frames[t].stats.keyframe) EXPECT_EQ(r.frames[t].stats.cache_bytes, r.frames[t - 1].stats.cache_bytes);
}

TEST(Engine, SameSeedIsBitIdenticalAndSeedsDiffer) {
  const auto frames = random_frames(10, 5);
  Engine a(toy_config(4)), b(toy_config(4)), c(toy_config(5));
  const RunResult ra = run_direct(a, frames), rb = run_direct(b, frames), rc = run_direct(c, frames);
  bool differs = false;
  for (std::size_t t = 0; t < frames.size(); ++t) {
    EXPECT_EQ(ra.frames[t].depth, rb.frames[t].depth);
    EXPECT_EQ(ra.frames[t].pose.translation, rb.frames[t].pose.translation);
    differs |= ra.frames[t].depth != rc.frames[t].depth;
  }
  EXPECT_TRUE(differs);
}

TEST(Engine, OutputInvariants) {
  Engine e(toy_config(6));
  const RunResult r = run_direct(e, random_frames(15, 6));
  for (const FrameOutput& o : r.frames) {
    const auto& q = o.quaternion;
    EXPECT_NEAR(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3], 1.0, 1e-12);
    EXPECT_GE(q[0], 0.0);
    for (float v : o.depth.values) EXPECT_GE(v, 0.0f);
    for (float v : o.uncertainty.values) EXPECT_GT(v, 0.0f);
  }
  EXPECT_GT(e.anchor_scale(), 0.0);
}

TEST(Engine, AnchorCloudHasUnitMeanNorm) {
  for (std::size_t n : {1u, 3u}) {
    Engine e(toy_config(8, n));
    const auto frames = random_frames(n, 8);
    const auto outs = e.anchor_init(frames);
    const geom::Intrinsics g = e.intrinsics().downscaled(4);
    double sum = 0.0;
    std::size_t count = 0;
    for (const FrameOutput& o : outs)
      for (std::uint32_t v = 0; v < g.height; ++v)
        for (std::uint32_t u = 0; u < g.width; ++u) {
          const double d = o.depth.at(u, v);
          const geom::Vec3 cam(d * (u - g.cx) / g.fx, d * (v - g.cy) / g.fy, d);
          sum += o.pose.apply(cam).norm();
          ++count;
        }
    EXPECT_NEAR(sum / count, 1.0, 1e-5);
  }
}

TEST(Engine, ZeroImagesGiveFiniteDeterministicOutputs) {
  std::vector<ImageRaster> frames(8, ImageRaster(116, 8, 0.0f));
  Engine a(toy_config(3)), b(toy_config(3));
  const RunResult ra = run_direct(a, frames), rb = run_direct(b, frames);
  for (std::size_t t = 0; t < frames.size(); ++t) {
    for (float v : ra.frames[t].depth.values) EXPECT_TRUE(std::isfinite(v));
    EXPECT_TRUE(ra.frames[t].pose.translation.allFinite());
    EXPECT_EQ(ra.frames[t].depth, rb.frames[t].depth);
  }
}

TEST(Engine, LiveTokensFollowGcaCount) {
  Engine e(toy_config(2, 3, 5));
  const RunResult r = run_direct(e, random_frames(40, 2));
  for (std::size_t t = 0; t < r.frames.size(); ++t) {
    const std::uint64_t admitted = std::max<std::uint64_t>(t + 1, 3);
    EXPECT_EQ(r.frames[t].stats.live_tokens, mask::context_token_count({mask::MaskMode::gca, 3, 5}, admitted, 58)) << t;
  }
}

TEST(Engine, SequencingAndShapeErrors) {
  Engine e(toy_config(1));
  EXPECT_THROW(e.step(ImageRaster(116, 8)), SequencingError);
  const auto frames = random_frames(3, 1);
  e.anchor_init(frames);
  EXPECT_THROW(e.step(ImageRaster(120, 8)), ShapeError);
  EXPECT_THROW(e.anchor_init(frames), SequencingError);
  Engine f(toy_config(1));
  std::vector<ImageRaster> mixed{ImageRaster(116, 8), ImageRaster(112, 8)};
  EXPECT_THROW(f.anchor_init(mixed), ShapeError);
}

TEST(Engine, ShortStreamIsAnchorInitOnly) {
  Engine e(toy_config(3, 3));
  const auto frames = random_frames(2, 3);
  const RunResult r = run_direct(e, frames);
  EXPECT_EQ(r.frames.size(), 2u);
  EXPECT_FALSE(e.initialized());
}

TEST(Rotary, LogitsDependOnFrameOffsetOnly) {
  const EngineConfig cfg = toy_config(11);
  const Model model(cfg);
  Rng rng(11);
  const std::size_t m = 4, per = m + 6, c = cfg.width;
  const mask::QueryMask row{5, {{0, mask::Span::full}, {2, mask::Span::context}, {5, mask::Span::full}}};
  const std::size_t keys = row.token_count(m);
  std::vector<float> x(per * c), k(keys * c), v(keys * c);
  for (float& f : x) f = static_cast<float>(rng.normal());
  for (float& f : k) f = static_cast<float>(rng.normal());
  for (float& f : v) f = static_cast<float>(rng.normal());
  mask::QueryMask shifted = row;
  shifted.query += 1000;
  for (auto& b : shifted.keys) b.frame += 1000;
  std::vector<float> x0 = x, x1 = x;
  const auto& kt = simd::scalar_kernels();
  model.gca_layer(1, x0.data(), per, row, m, k.data(), v.data(), keys, kt);
  model.gca_layer(1, x1.data(), per, shifted, m, k.data(), v.data(), keys, kt);
  EXPECT_EQ(x0, x1);
  EXPECT_NE(x0, x);
}

TEST(Vo, WindowStartsCoverSequence) {
  const VoOptions o{40, 8};
  EXPECT_EQ(vo_window_starts(30, o), (std::vector<std::size_t>{0}));
  EXPECT_EQ(vo_window_starts(40, o), (std::vector<std::size_t>{0}));
  EXPECT_EQ(vo_window_starts(328, o), (std::vector<std::size_t>{0, 32, 64, 96, 128, 160, 192, 224, 256, 288}));
  EXPECT_THROW(vo_window_starts(100, VoOptions{40, 2}), ConfigError);
  EXPECT_THROW(vo_window_starts(100, VoOptions{8, 8}), ConfigError);
}

TEST(Vo, StitchRecoversInjectedSimilarity) {
  Rng rng(31);
  const Trajectory gt = geoctx::testing::wavy_trajectory(8, 31);
  for (int trial = 0; trial < 20; ++trial) {
    const geom::Sim3 g = geoctx::testing::random_sim3(rng);
    std::vector<geom::Pose> next;
    for (const auto& p : gt.poses) next.push_back(g.inverse().apply(p));
    const geom::Sim3 est = stitch(gt.poses, next);
    EXPECT_NEAR(est.scale, g.scale, 1e-9);
    EXPECT_LT((est.rotation - g.rotation).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LT((est.translation - g.translation).cwiseAbs().maxCoeff(), 1e-9);
  }
  const geom::Sim3 id = stitch(gt.poses, gt.poses);
  EXPECT_NEAR(id.scale, 1.0, 1e-12);
  std::vector<geom::Pose> line(4);
  for (int i = 0; i < 4; ++i) line[i].translation = geom::Vec3(i, 0, 0);
  EXPECT_THROW(stitch(line, line), DegenerateError);
}

TEST(Vo, StitchedWindowsOfPerturbedTruthHaveZeroAte) {
  const VoOptions o{40, 8};
  const std::size_t frames = 328;  // 10 windows
  const Trajectory gt = geoctx::testing::wavy_trajectory(frames, 41);
  const auto starts = vo_window_starts(frames, o);
  ASSERT_EQ(starts.size(), 10u);
  Rng rng(41);
  std::vector<Trajectory> windows;
  for (std::size_t s : starts) {
    const geom::Sim3 g = geoctx::testing::random_sim3(rng);
    Trajectory w;
    for (std::size_t i = s; i < std::min(frames, s + o.window_len); ++i) w.push_back(gt.ids[i], g.apply(gt.poses[i]));
    windows.push_back(std::move(w));
  }
  const Trajectory stitched = stitch_windows(windows);
  ASSERT_EQ(stitched.ids, gt.ids);
  EXPECT_LE(metrics::ate(stitched, gt).rmse, 1e-6);
}

TEST(Vo, SingleWindowEqualsDirect) {
  const auto frames = random_frames(20, 12);
  Engine a(toy_config(12)), b(toy_config(12));
  const RunResult direct = run_direct(a, frames);
  const RunResult vo = run_vo(b, frames, VoOptions{40, 8});
  ASSERT_EQ(vo.frames.size(), direct.frames.size());
  for (std::size_t t = 0; t < frames.size(); ++t) EXPECT_EQ(vo.frames[t].depth, direct.frames[t].depth);
}

TEST(Vo, MultiWindowRunCoversEveryFrame) {
  const auto frames = random_frames(50, 13);
  Engine e(toy_config(13, 3, 4));
  const RunResult r = run_vo(e, frames, VoOptions{20, 8});
  ASSERT_EQ(r.trajectory.size(), 50u);
  for (std::size_t t = 0; t < 50; ++t) EXPECT_EQ(r.trajectory.ids[t], static_cast<std::int64_t>(t));
}
