#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "geoctx/attention_mask.hpp"
#include "geoctx/error.hpp"
#include "geoctx/kv_cache.hpp"
#include "geoctx/rng.hpp"

using namespace geoctx;
using namespace geoctx::kv;
using mask::KeyBlock;
using mask::QueryMask;
using mask::Span;

namespace {

// Every scalar encodes (frame, layer, token, channel, key/value) so gathered
// data can be checked without keeping copies.
float tag(FrameId f, std::size_t l, std::size_t t, std::size_t c, bool value) {
  return static_cast<float>(f * 100000 + l * 10000 + t * 100 + c) + (value ? 0.5f : 0.0f);
}

FrameKV make_kv(const CacheConfig& cfg, FrameId f) {
  FrameKV kv(cfg.layers, cfg.image_tokens + mask::kContextTokens, cfg.width);
  for (std::size_t l = 0; l < kv.layers; ++l)
    for (std::size_t t = 0; t < kv.tokens; ++t)
      for (std::size_t c = 0; c < kv.width; ++c) {
        kv.key(l, t)[c] = tag(f, l, t, c, false);
        kv.value(l, t)[c] = tag(f, l, t, c, true);
      }
  return kv;
}

// Checks every gathered scalar against the tag of its source token.
void expect_gathered(const Gathered& g, const QueryMask& row, std::size_t image_tokens) {
  std::size_t pos = 0;
  for (const KeyBlock& b : row.keys) {
    const std::size_t count = b.span == Span::full ? image_tokens + 6 : 6;
    for (std::size_t t = 0; t < count; ++t, ++pos) {
      ASSERT_EQ(g.frame_of[pos], b.frame);
      for (std::size_t l = 0; l < g.layers; ++l)
        for (std::size_t c = 0; c < g.width; ++c) {
          ASSERT_EQ(g.key(l, pos)[c], tag(b.frame, l, t, c, false));
          ASSERT_EQ(g.value(l, pos)[c], tag(b.frame, l, t, c, true));
        }
    }
  }
  EXPECT_EQ(pos, g.tokens());
}

}  // namespace

TEST(PagedCache, FirstFrameUsesContextAndImagePages) {
  const CacheConfig cfg{2, 8, 58, 64, 4};
  PagedCache c(cfg);
  c.append_frame(0, make_kv(cfg, 0));
  const MemoryReport r = c.memory();
  EXPECT_EQ(r.live_tokens, 64u);
  EXPECT_EQ(r.pages_created, 2u);
  EXPECT_EQ(r.pages_in_use, 2u);
}

TEST(PagedCache, ZeroImageTokensKeepsContextOnly) {
  const CacheConfig cfg{1, 4, 0, 64, 4};
  PagedCache c(cfg);
  c.append_frame(0, make_kv(cfg, 0));
  EXPECT_EQ(c.memory().pages_created, 1u);
  EXPECT_EQ(c.live_tokens(), 6u);
}

TEST(PagedCache, MemoryBytesWorkedExample) {
  const CacheConfig cfg{4, 32, 58, 64, 4};
  PagedCache c(cfg);
  EXPECT_EQ(c.memory().live_bytes, 0u);
  c.append_frame(0, make_kv(cfg, 0));
  EXPECT_EQ(c.memory().live_bytes, 65536u);
  c.evict_to_context(0);
  EXPECT_EQ(c.memory().live_bytes, 6144u);
  EXPECT_EQ(c.bytes_for(1), 4u * 2u * 32u * 4u);
}

TEST(PagedCache, AppendErrors) {
  const CacheConfig cfg{2, 4, 10, 16, 4};
  PagedCache c(cfg);
  c.append_frame(3, make_kv(cfg, 3));
  EXPECT_THROW(c.append_frame(3, make_kv(cfg, 3)), SequencingError);
  EXPECT_THROW(c.append_frame(2, make_kv(cfg, 2)), SequencingError);
  CacheConfig other = cfg;
  other.image_tokens = 9;
  EXPECT_THROW(c.append_frame(4, make_kv(other, 4)), ShapeError);
  EXPECT_THROW(PagedCache(CacheConfig{0, 4, 10, 16, 4}), ConfigError);
}

TEST(PagedCache, EvictionErrors) {
  const CacheConfig cfg{1, 4, 10, 16, 4};
  PagedCache c(cfg);
  c.append_frame(0, make_kv(cfg, 0), true);
  c.append_frame(1, make_kv(cfg, 1));
  EXPECT_THROW(c.evict_to_context(0), SequencingError);
  EXPECT_THROW(c.evict_to_context(7), SequencingError);
  c.evict_to_context(1);
  EXPECT_THROW(c.evict_to_context(1), SequencingError);
}

TEST(PagedCache, GatherIsBitExactAndOrdered) {
  const CacheConfig cfg{2, 5, 11, 8, 4};  // small pages force multi-page spans
  PagedCache c(cfg);
  for (FrameId f = 0; f < 6; ++f) c.append_frame(f, make_kv(cfg, f), f < 2);
  c.evict_to_context(2);
  c.evict_to_context(3);
  const QueryMask row{5, {{0, Span::full}, {1, Span::full}, {2, Span::context}, {3, Span::context},
                          {4, Span::full}, {5, Span::full}}};
  const Gathered g = c.gather(row);
  EXPECT_EQ(g.tokens(), 4u * (11 + 6) + 12);
  expect_gathered(g, row, cfg.image_tokens);
}

TEST(PagedCache, FullRequestForEvictedFrameIsCoherenceError) {
  const CacheConfig cfg{1, 4, 10, 16, 4};
  PagedCache c(cfg);
  c.append_frame(0, make_kv(cfg, 0));
  c.append_frame(1, make_kv(cfg, 1));
  c.evict_to_context(0);
  EXPECT_THROW(c.gather(QueryMask{1, {{0, Span::full}, {1, Span::full}}}), CacheCoherenceError);
  EXPECT_THROW(c.gather(QueryMask{1, {{9, Span::context}}}), CacheCoherenceError);
  EXPECT_EQ(c.gather(QueryMask{0, {{1, Span::full}}}).tokens(), 16u);
}

TEST(PagedCache, GatherSnapshotSurvivesLaterAppends) {
  const CacheConfig cfg{1, 3, 5, 8, 4};
  PagedCache c(cfg);
  c.append_frame(0, make_kv(cfg, 0));
  c.append_frame(1, make_kv(cfg, 1));
  const QueryMask row{1, {{0, Span::full}, {1, Span::full}}};
  const Gathered before = c.gather(row);
  c.evict_to_context(0);
  for (FrameId f = 2; f < 20; ++f) c.append_frame(f, make_kv(cfg, f));
  expect_gathered(before, row, cfg.image_tokens);
  const Gathered ctx = c.gather(QueryMask{1, {{0, Span::context}, {1, Span::full}}});
  expect_gathered(ctx, QueryMask{1, {{0, Span::context}, {1, Span::full}}}, cfg.image_tokens);
}

// Drives the cache with the GCA partition policy and checks occupancy against
// the closed-form context count at every step.
TEST(PagedCache, StreamOccupancyMatchesGcaCountAndPagesStayBounded) {
  for (std::size_t n : {1u, 3u}) {
    for (std::size_t k : {1u, 4u, 16u}) {
      const CacheConfig cfg{1, 2, 58, 64, 4};
      PagedCache c(cfg);
      mask::StreamPartition p(n, k);
      const mask::MaskSpec spec{mask::MaskMode::gca, n, k};
      const FrameId frames = 1000;
      std::uint64_t prev = 0;
      for (FrameId t = 0; t < frames; ++t) {
        if (const auto out = p.would_demote(t)) c.evict_to_context(*out);
        p.admit(t);
        c.append_frame(t, FrameKV(cfg.layers, 64, cfg.width), p.is_anchor(t));
        const std::uint64_t live = c.live_tokens();
        ASSERT_EQ(live, mask::context_token_count(spec, t + 1, 58)) << n << " " << k << " t=" << t;
        if (t >= static_cast<FrameId>(n + k)) ASSERT_EQ(live - prev, 6u);
        prev = live;
        ASSERT_EQ(c.memory().live_bytes, c.bytes_for(live));
        // (n+k)(M+6) + 6T tokens worth of pages, plus one page of slack per span type.
        const std::uint64_t bound_tokens = (n + k) * 64 + 6 * static_cast<std::uint64_t>(t + 1);
        ASSERT_LE(c.memory().pages_created, (bound_tokens + 63) / 64 + 2);
      }
    }
  }
}

TEST(PagedCache, FreedPagesAreReused) {
  const CacheConfig cfg{1, 2, 58, 64, 4};
  PagedCache c(cfg);
  c.append_frame(0, make_kv(cfg, 0));
  c.append_frame(1, make_kv(cfg, 1));
  const auto created = c.memory().pages_created;
  c.evict_to_context(1);
  EXPECT_EQ(c.memory().pages_free, 1u);
  c.append_frame(2, make_kv(cfg, 2));
  EXPECT_EQ(c.memory().pages_created, created);
  EXPECT_EQ(c.memory().pages_free, 0u);
  expect_gathered(c.gather(QueryMask{2, {{0, Span::full}, {1, Span::context}, {2, Span::full}}}),
                  QueryMask{2, {{0, Span::full}, {1, Span::context}, {2, Span::full}}}, 58);
}

TEST(KeyframeGate, EveryOneAlwaysKeeps) {
  KeyframeGate g(KeyframePolicy::parse("every:1"));
  for (FrameId f = 0; f < 20; ++f) EXPECT_EQ(g.decide(f, std::nullopt), Decision::keep);
}

TEST(KeyframeGate, EveryThreeKeepsOneInThree) {
  KeyframeGate g(KeyframePolicy::parse("every:3"));
  std::vector<FrameId> kept;
  for (FrameId f = 0; f < 10; ++f)
    if (g.decide(f, std::nullopt) == Decision::keep) kept.push_back(f);
  EXPECT_EQ(kept, (std::vector<FrameId>{0, 3, 6, 9}));
}

TEST(KeyframeGate, FlowThreshold) {
  KeyframeGate g(KeyframePolicy::parse("flow:5"));
  EXPECT_EQ(g.decide(0, 0.0), Decision::keep);  // first frame
  EXPECT_EQ(g.decide(1, 0.0), Decision::skip);
  EXPECT_EQ(g.decide(2, 5.0), Decision::skip);
  EXPECT_EQ(g.decide(3, 5.5), Decision::keep);
  EXPECT_EQ(g.decide(4, std::numeric_limits<double>::infinity()), Decision::keep);
  EXPECT_EQ(g.last_keyframe(), 4);
  EXPECT_THROW(g.decide(5, std::nullopt), ConfigError);
}

TEST(KeyframeGate, FramesBeforeGateStartAlwaysKept) {
  KeyframePolicy p = KeyframePolicy::parse("every:4");
  p.gate_from_frame = 3;
  KeyframeGate g(p);
  for (FrameId f = 0; f < 3; ++f) EXPECT_EQ(g.decide(f, std::nullopt), Decision::keep);
  EXPECT_EQ(g.decide(3, std::nullopt), Decision::skip);
  EXPECT_EQ(g.decide(6, std::nullopt), Decision::keep);
}

TEST(KeyframePolicy, ParseErrors) {
  for (const char* bad : {"every:0", "flow:0", "flow:-1", "every", "sometimes:3", "every:2x", "flow:abc"})
    EXPECT_THROW(KeyframePolicy::parse(bad), ConfigError) << bad;
  EXPECT_EQ(KeyframePolicy::parse("every:7").describe(), "every:7");
  EXPECT_EQ(KeyframePolicy::parse("flow:2.5").describe(), "flow:2.5");
}
