#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "geoctx/attention_mask.hpp"
#include "geoctx/geometry.hpp"
#include "geoctx/kv_cache.hpp"
#include "geoctx/raster.hpp"
#include "geoctx/trajectory.hpp"

namespace geoctx::engine {

using mask::FrameId;

enum class RopeScope { all, trajectory_only };

struct EngineConfig {
  std::size_t pairs = 2;  // (frame attention, GCA) layer pairs
  std::size_t width = 64;
  std::size_t heads = 4;
  std::uint32_t patch = 14;
  std::size_t anchors = 3;
  std::size_t window = 64;
  kv::KeyframePolicy keyframe;
  double rope_base = 10000.0;
  RopeScope rope_scope = RopeScope::all;
  std::uint64_t seed = 0;
  std::size_t page_capacity = 64;

  /// Throws ConfigError.
  void validate() const;
  std::size_t head_dim() const { return width / heads; }
};

struct FrameStats {
  std::uint64_t tokens_gathered = 0;  // tokens attended by the GCA layers, own block included
  std::uint64_t live_tokens = 0;      // cache occupancy after the step
  std::uint64_t cache_bytes = 0;
  bool keyframe = true;
  double flow_px = 0.0;  // 0 when the gate did not need it
  double latency_s = 0.0;
};

struct FrameOutput {
  FrameId frame = 0;
  geom::Pose pose;                   // camera-to-world, anchor-normalized
  std::array<double, 4> quaternion;  // (w, x, y, z), unit, w >= 0
  DepthRaster depth;                 // one value per patch
  Raster uncertainty;
  FrameStats stats;
};

class Model;

/// Seeded toy transformer plus the streaming state of one sequence.
class Engine {
 public:
  explicit Engine(const EngineConfig& config);
  ~Engine();
  Engine(Engine&&) noexcept;
  Engine& operator=(Engine&&) noexcept;

  const EngineConfig& config() const noexcept { return cfg_; }
  const Model& model() const noexcept { return *model_; }

  /// Drops all stream state; weights are kept.
  void reset();

  /// Joint full-attention pass over the first frames (1..n of them). Sets the
  /// anchor scale and caches the anchors. `k` is the image-space camera; a
  /// default pinhole is derived from the raster when absent.
  std::vector<FrameOutput> anchor_init(std::span<const ImageRaster> frames,
                                       std::optional<geom::Intrinsics> k = std::nullopt);

  /// One streaming frame. Throws SequencingError before a complete anchor init,
  /// ShapeError on a raster mismatch.
  FrameOutput step(const ImageRaster& frame);

  bool initialized() const noexcept { return initialized_; }
  double anchor_scale() const noexcept { return scale_; }
  std::size_t image_tokens() const noexcept { return grid_w_ * grid_h_; }
  const kv::PagedCache& cache() const;
  const mask::StreamPartition& partition() const;
  const geom::Intrinsics& intrinsics() const noexcept { return k_; }
  FrameId next_frame() const noexcept { return next_; }

 private:
  EngineConfig cfg_;
  std::unique_ptr<Model> model_;
  std::unique_ptr<kv::PagedCache> cache_;
  std::unique_ptr<mask::StreamPartition> partition_;
  std::unique_ptr<kv::KeyframeGate> gate_;
  geom::Intrinsics k_;
  std::uint32_t raster_w_ = 0, raster_h_ = 0, grid_w_ = 0, grid_h_ = 0;
  double scale_ = 0.0;
  bool initialized_ = false;
  FrameId next_ = 0;
  DepthRaster key_depth_;
  geom::Pose key_pose_;
};

/// Default pinhole for a raster: focal = max(width, height), centered.
geom::Intrinsics default_intrinsics(std::uint32_t width, std::uint32_t height);

/// One-shot masked forward over a whole sequence with the reference kernels.
/// `kept` are the keyframe flags of a streaming run (empty = all kept).
/// Returned stats are zero.
std::vector<FrameOutput> batch_forward(const Engine& engine, std::span<const ImageRaster> frames,
                                       std::span<const bool> kept = {},
                                       std::optional<geom::Intrinsics> k = std::nullopt);

struct RunResult {
  std::vector<FrameOutput> frames;
  Trajectory trajectory;
};

/// Single pass without resets: anchor init, then one step per frame.
RunResult run_direct(Engine& engine, std::span<const ImageRaster> frames,
                     std::optional<geom::Intrinsics> k = std::nullopt);

struct VoOptions {
  std::size_t window_len = 40;
  std::size_t overlap = 8;
  void validate() const;
};

/// Overlapping windows, each processed from a fresh state and chained by Sim(3)
/// alignment on the shared frames. Result is in the first window's frame.
RunResult run_vo(Engine& engine, std::span<const ImageRaster> frames, const VoOptions& options,
                 std::optional<geom::Intrinsics> k = std::nullopt);

/// Umeyama (with scale) on camera centers; maps next-window coordinates into
/// previous-window coordinates.
geom::Sim3 stitch(std::span<const geom::Pose> prev_overlap, std::span<const geom::Pose> next_overlap);

/// Chains per-window trajectories (global frame ids) using the ids each window
/// shares with its predecessor. Shared frames keep the earlier window's pose.
Trajectory stitch_windows(std::span<const Trajectory> windows);

/// Window start offsets used by run_vo for a sequence of `frames`.
std::vector<std::size_t> vo_window_starts(std::size_t frames, const VoOptions& options);

}  // namespace geoctx::engine
