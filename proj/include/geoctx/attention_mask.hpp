#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace geoctx::mask {

using FrameId = std::int64_t;

/// Per-frame block: camera, 4 registers, anchor slot, then M image tokens.
inline constexpr std::size_t kRegisterTokens = 4;
inline constexpr std::size_t kContextTokens = 1 + kRegisterTokens + 1;

struct FrameTokenLayout {
  std::size_t image_tokens = 0;

  static constexpr std::size_t camera_index = 0;
  static constexpr std::size_t first_register_index = 1;
  static constexpr std::size_t anchor_index = 5;
  static constexpr std::size_t first_image_index = kContextTokens;

  std::size_t total() const noexcept { return image_tokens + kContextTokens; }
};

enum class Span : std::uint8_t { full, context };

struct KeyBlock {
  FrameId frame = 0;
  Span span = Span::full;
  friend bool operator==(const KeyBlock&, const KeyBlock&) = default;
};

/// Key blocks visible to one query frame, in ascending frame order.
struct QueryMask {
  FrameId query = 0;
  std::vector<KeyBlock> keys;

  std::uint64_t token_count(std::size_t image_tokens) const;
  friend bool operator==(const QueryMask&, const QueryMask&) = default;
};

struct BlockMask {
  std::vector<QueryMask> rows;
};

enum class MaskMode { full, causal, sliding, gca };

std::optional<MaskMode> parse_mask_mode(std::string_view text);
std::string_view to_string(MaskMode mode);

struct MaskSpec {
  MaskMode mode = MaskMode::gca;
  std::size_t anchors = 3;  // n (gca only)
  std::size_t window = 64;  // k for gca and sliding
};

/// Anchor / window / trajectory split of the frames admitted so far. The
/// window holds the k most recent non-anchor frames, the latest admitted frame
/// included; everything older that is not an anchor is trajectory memory.
class StreamPartition {
 public:
  StreamPartition(std::size_t anchors, std::size_t window);

  /// Admits `frame`. Ids must be strictly increasing; the first n admitted
  /// frames become anchors. Throws SequencingError on regression.
  void admit(FrameId frame);

  /// The window member that admitting `frame` would demote to trajectory.
  std::optional<FrameId> would_demote(FrameId frame) const;

  std::size_t anchor_capacity() const noexcept { return n_; }
  std::size_t window_capacity() const noexcept { return k_; }
  const std::vector<FrameId>& anchors() const noexcept { return anchors_; }
  const std::deque<FrameId>& window() const noexcept { return window_; }
  const std::vector<FrameId>& trajectory() const noexcept { return trajectory_; }
  std::optional<FrameId> latest() const noexcept { return latest_; }
  std::size_t admitted() const noexcept { return anchors_.size() + window_.size() + trajectory_.size(); }
  bool anchors_complete() const noexcept { return anchors_.size() == n_; }

  bool is_anchor(FrameId f) const;
  bool in_window(FrameId f) const;
  bool in_trajectory(FrameId f) const;

 private:
  std::size_t n_;
  std::size_t k_;
  std::vector<FrameId> anchors_;
  std::deque<FrameId> window_;
  std::vector<FrameId> trajectory_;
  std::optional<FrameId> latest_;
};

/// Value-style update; returns the partition after admitting `frame`.
StreamPartition partition_update(StreamPartition p, FrameId frame);

/// Mask row for `query` given the partition after `query` was admitted.
///   full    - every admitted frame, FULL
///   causal  - admitted frames <= query, FULL
///   sliding - the `window` most recent admitted frames <= query, FULL
///   gca     - anchor queries see all anchors FULL (joint initialization);
///             later queries see anchors and window FULL, trajectory CONTEXT.
QueryMask build_mask(const MaskSpec& spec, FrameId query, const StreamPartition& p);

/// Rows for queries 0..T-1. For gca, frames with kept[t] == false are queried
/// but never admitted (keyframe gating); an empty `kept` keeps every frame.
BlockMask build_sequence_mask(const MaskSpec& spec, FrameId frames, std::span<const bool> kept = {});

/// Tokens visible to the latest query of a T-frame sequence. Exact closed forms.
std::uint64_t context_token_count(const MaskSpec& spec, std::uint64_t frames, std::uint64_t image_tokens);

/// Admits frames 0..T-1 into a partition and counts the tokens visible to the
/// last query. Linear in T; cross-checks context_token_count.
std::uint64_t enumerate_context_tokens(const MaskSpec& spec, FrameId frames, std::uint64_t image_tokens);

/// Steady-state tokens added to the context per new frame.
std::uint64_t per_frame_growth(MaskMode mode, std::uint64_t image_tokens);

struct GrowthRatio {
  std::uint64_t causal = 0;
  std::uint64_t gca = 0;
  std::uint64_t numerator = 1;  // reduced causal / gca
  std::uint64_t denominator = 1;
  double value = 1.0;
};

GrowthRatio growth_ratio(std::uint64_t image_tokens);

/// ASCII block pattern (rows = queries, columns = key frames):
/// 'F' full, 'c' context only, '.' not attended.
std::string render(const BlockMask& mask, FrameId frames);

}  // namespace geoctx::mask
