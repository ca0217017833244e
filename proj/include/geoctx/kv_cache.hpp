#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "geoctx/attention_mask.hpp"

namespace geoctx::kv {

using mask::FrameId;

/// Keys and values for one frame's M + 6 tokens across all cached layers.
/// Layout of both arrays: [layer][token][width], token order per FrameTokenLayout.
struct FrameKV {
  std::size_t layers = 0;
  std::size_t tokens = 0;
  std::size_t width = 0;
  std::vector<float> keys;
  std::vector<float> values;

  FrameKV() = default;
  FrameKV(std::size_t layers_, std::size_t tokens_, std::size_t width_)
      : layers(layers_), tokens(tokens_), width(width_),
        keys(layers_ * tokens_ * width_), values(layers_ * tokens_ * width_) {}

  float* key(std::size_t layer, std::size_t token) { return keys.data() + (layer * tokens + token) * width; }
  float* value(std::size_t layer, std::size_t token) { return values.data() + (layer * tokens + token) * width; }
  const float* key(std::size_t layer, std::size_t token) const { return keys.data() + (layer * tokens + token) * width; }
  const float* value(std::size_t layer, std::size_t token) const { return values.data() + (layer * tokens + token) * width; }
};

/// Owning copy of gathered tokens. Same layout as FrameKV; `frame_of[i]` is the
/// source frame of token i.
struct Gathered {
  std::size_t layers = 0;
  std::size_t width = 0;
  std::vector<FrameId> frame_of;
  std::vector<float> keys;
  std::vector<float> values;

  std::size_t tokens() const noexcept { return frame_of.size(); }
  const float* key(std::size_t layer, std::size_t token) const { return keys.data() + (layer * tokens() + token) * width; }
  const float* value(std::size_t layer, std::size_t token) const { return values.data() + (layer * tokens() + token) * width; }
};

struct CacheConfig {
  std::size_t layers = 2;
  std::size_t width = 64;
  std::size_t image_tokens = 58;
  std::size_t page_capacity = 64;
  std::size_t dtype_bytes = 4;  // accounting only; storage is float32

  void validate() const;
};

struct MemoryReport {
  std::uint64_t live_tokens = 0;
  std::uint64_t live_bytes = 0;
  std::uint64_t pages_in_use = 0;
  std::uint64_t pages_free = 0;
  std::uint64_t pages_created = 0;
  std::uint64_t allocated_bytes = 0;  // every page ever created, free list included
  std::uint64_t overhead_bytes = 0;   // allocated_bytes - live_bytes
};

/// Paged key/value store. Context tokens go to shared append-only context
/// pages; image tokens get dedicated pages per frame so eviction frees pages
/// without copying.
class PagedCache {
 public:
  explicit PagedCache(const CacheConfig& config);

  /// Throws SequencingError on a non-increasing id, ShapeError on a layout
  /// mismatch.
  void append_frame(FrameId frame, const FrameKV& kv, bool anchor = false);

  /// Drops the frame's image tokens and recycles their pages. Throws
  /// SequencingError for unknown, anchor, or already context-only frames.
  void evict_to_context(FrameId frame);

  /// Tokens for every key block of `row`, ascending frame order. Throws
  /// CacheCoherenceError when a block is not held at the requested span.
  Gathered gather(const mask::QueryMask& row) const;

  bool contains(FrameId frame) const { return frames_.count(frame) != 0; }
  bool has_image(FrameId frame) const;
  std::size_t frame_count() const noexcept { return frames_.size(); }
  std::optional<FrameId> latest() const noexcept { return latest_; }

  std::uint64_t live_tokens() const noexcept { return live_tokens_; }
  MemoryReport memory() const;
  const CacheConfig& config() const noexcept { return cfg_; }

  /// Bytes for `tokens` live tokens under this configuration.
  std::uint64_t bytes_for(std::uint64_t tokens) const;

 private:
  struct Page {
    std::vector<float> keys;    // [layer][slot][width]
    std::vector<float> values;
    std::size_t used = 0;
  };
  struct Piece {
    std::uint32_t page;
    std::uint32_t offset;
    std::uint32_t count;
  };
  struct Entry {
    std::vector<Piece> context;
    std::vector<Piece> image;
    bool anchor = false;
  };

  std::uint32_t new_page();
  void write(const Piece& piece, const FrameKV& kv, std::size_t first_token);
  void read(const Piece& piece, Gathered& out, std::size_t dst_token) const;

  CacheConfig cfg_;
  std::vector<Page> pages_;
  std::vector<std::uint32_t> free_;
  std::optional<std::uint32_t> context_page_;
  std::map<FrameId, Entry> frames_;
  std::optional<FrameId> latest_;
  std::uint64_t live_tokens_ = 0;
};

enum class Decision { keep, skip };

struct KeyframePolicy {
  enum class Mode { every_m, flow_threshold };
  Mode mode = Mode::every_m;
  std::uint32_t m = 1;
  double threshold_px = 5.0;
  /// Frames below this id bypass gating and are always kept.
  FrameId gate_from_frame = 0;

  void validate() const;
  /// "every:<m>" or "flow:<px>". Throws ConfigError otherwise.
  static KeyframePolicy parse(const std::string& text);
  std::string describe() const;
};

/// Stateful gate. The first frame it sees is always kept.
class KeyframeGate {
 public:
  explicit KeyframeGate(const KeyframePolicy& policy);

  /// `flow` is the mean geometric flow to the last keyframe in pixels and is
  /// required in flow mode. Records the frame as the last keyframe on keep.
  Decision decide(FrameId frame, std::optional<double> flow);

  std::optional<FrameId> last_keyframe() const noexcept { return last_; }
  const KeyframePolicy& policy() const noexcept { return policy_; }

 private:
  KeyframePolicy policy_;
  std::optional<FrameId> last_;
};

}  // namespace geoctx::kv
