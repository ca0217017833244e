#include "geoctx/engine.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>

#include "geoctx/error.hpp"
#include "model.hpp"

namespace geoctx::engine {

void EngineConfig::validate() const {
  if (pairs == 0) throw ConfigError("engine: need at least one layer pair");
  if (width == 0 || heads == 0) throw ConfigError("engine: width and heads must be positive");
  if (width % (2 * heads) != 0)
    throw ConfigError("engine: width " + std::to_string(width) + " is not divisible by 2 x heads (" +
                      std::to_string(2 * heads) + ")");
  if (patch == 0) throw ConfigError("engine: patch size must be positive");
  if (anchors == 0) throw ConfigError("engine: anchor count n must be at least 1");
  if (window == 0) throw ConfigError("engine: window k must be at least 1");
  if (!(rope_base > 1.0)) throw ConfigError("engine: temporal encoding base must exceed 1");
  if (page_capacity == 0) throw ConfigError("engine: page capacity must be positive");
  keyframe.validate();
}

geom::Intrinsics default_intrinsics(std::uint32_t width, std::uint32_t height) {
  geom::Intrinsics k;
  k.fx = k.fy = static_cast<double>(std::max(width, height));
  k.cx = width / 2.0;
  k.cy = height / 2.0;
  k.width = width;
  k.height = height;
  return k;
}

Engine::Engine(const EngineConfig& config) : cfg_(config), model_(std::make_unique<Model>(config)) {}
Engine::~Engine() = default;
Engine::Engine(Engine&&) noexcept = default;
Engine& Engine::operator=(Engine&&) noexcept = default;

void Engine::reset() {
  cache_.reset();
  partition_.reset();
  gate_.reset();
  raster_w_ = raster_h_ = grid_w_ = grid_h_ = 0;
  scale_ = 0.0;
  initialized_ = false;
  next_ = 0;
  key_depth_ = DepthRaster();
  key_pose_ = geom::Pose();
}

const kv::PagedCache& Engine::cache() const {
  if (!cache_) throw SequencingError("engine: no stream in progress");
  return *cache_;
}

const mask::StreamPartition& Engine::partition() const {
  if (!partition_) throw SequencingError("engine: no stream in progress");
  return *partition_;
}

namespace {

mask::MaskSpec gca_spec(const EngineConfig& cfg) { return {mask::MaskMode::gca, cfg.anchors, cfg.window}; }

geom::Intrinsics resolve_intrinsics(const std::optional<geom::Intrinsics>& k, const ImageRaster& first) {
  geom::Intrinsics out = k ? *k : default_intrinsics(first.width, first.height);
  if (out.width != first.width || out.height != first.height)
    throw ShapeError("intrinsics are " + std::to_string(out.width) + "x" + std::to_string(out.height) +
                     " but frames are " + std::to_string(first.width) + "x" + std::to_string(first.height));
  out.validate();
  return out;
}

}  // namespace

std::vector<FrameOutput> Engine::anchor_init(std::span<const ImageRaster> frames, std::optional<geom::Intrinsics> k) {
  if (cache_) throw SequencingError("engine: anchor init on a stream that already started; call reset()");
  if (frames.empty()) throw ConfigError("engine: anchor init needs at least one frame");
  if (frames.size() > cfg_.anchors)
    throw ConfigError("engine: " + std::to_string(frames.size()) + " anchor frames given, n = " +
                      std::to_string(cfg_.anchors));
  for (const ImageRaster& f : frames)
    if (!f.same_shape(frames[0])) throw ShapeError("engine: anchor rasters differ in size");

  k_ = resolve_intrinsics(k, frames[0]);
  raster_w_ = frames[0].width;
  raster_h_ = frames[0].height;
  grid_of(frames[0], cfg_.patch, grid_w_, grid_h_);
  const std::size_t m = image_tokens();

  const auto t0 = std::chrono::steady_clock::now();
  std::vector<std::vector<float>> tokens;
  for (const ImageRaster& f : frames) tokens.push_back(model_->embed(f, grid_w_, grid_h_, true));
  const mask::BlockMask rows = mask::build_sequence_mask(gca_spec(cfg_), static_cast<FrameId>(frames.size()));
  std::vector<kv::FrameKV> kvs;
  const auto& kt = simd::active_kernels();
  const auto final_tokens = joint_forward(*model_, std::move(tokens), rows, m, kt, &kvs);

  std::vector<HeadOutput> raw;
  for (const auto& x : final_tokens) raw.push_back(model_->heads(x.data(), m + mask::kContextTokens, kt));
  scale_ = anchor_scale_of(raw, k_.downscaled(cfg_.patch));

  cache_ = std::make_unique<kv::PagedCache>(kv::CacheConfig{cfg_.pairs, cfg_.width, m, cfg_.page_capacity, 4});
  partition_ = std::make_unique<mask::StreamPartition>(cfg_.anchors, cfg_.window);
  gate_ = std::make_unique<kv::KeyframeGate>(cfg_.keyframe);

  std::vector<FrameOutput> outs;
  for (std::size_t f = 0; f < frames.size(); ++f) {
    partition_->admit(static_cast<FrameId>(f));
    cache_->append_frame(static_cast<FrameId>(f), kvs[f], true);
    outs.push_back(finalize(static_cast<FrameId>(f), raw[f], scale_, grid_w_, grid_h_));
  }
  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const kv::MemoryReport mem = cache_->memory();
  for (std::size_t f = 0; f < outs.size(); ++f) {
    outs[f].stats.tokens_gathered = rows.rows[f].token_count(m);
    outs[f].stats.live_tokens = mem.live_tokens;
    outs[f].stats.cache_bytes = mem.live_bytes;
    outs[f].stats.latency_s = elapsed / static_cast<double>(outs.size());
  }
  key_depth_ = outs.back().depth;
  key_pose_ = outs.back().pose;
  next_ = static_cast<FrameId>(frames.size());
  initialized_ = frames.size() == cfg_.anchors;
  return outs;
}

FrameOutput Engine::step(const ImageRaster& frame) {
  if (!initialized_) throw SequencingError("engine: step before a complete anchor initialization");
  if (frame.width != raster_w_ || frame.height != raster_h_)
    throw ShapeError("engine: frame raster " + std::to_string(frame.width) + "x" + std::to_string(frame.height) +
                     " differs from the stream's " + std::to_string(raster_w_) + "x" + std::to_string(raster_h_));
  const auto t0 = std::chrono::steady_clock::now();
  const FrameId t = next_++;
  const std::size_t m = image_tokens();
  const std::size_t per = m + mask::kContextTokens;
  const std::size_t c = cfg_.width;
  const auto& kt = simd::active_kernels();

  std::vector<float> x = model_->embed(frame, grid_w_, grid_h_, false);
  mask::StreamPartition tentative = mask::partition_update(*partition_, t);
  const mask::QueryMask row = mask::build_mask(gca_spec(cfg_), t, tentative);
  mask::QueryMask prior = row;
  prior.keys.pop_back();  // own block; not cached yet
  const kv::Gathered ctx = cache_->gather(prior);

  kv::FrameKV self(cfg_.pairs, per, c);
  std::vector<float> kb, vb;
  for (std::size_t l = 0; l < model_->layers(); ++l) {
    if (!Model::is_gca(l)) {
      model_->frame_layer(l, x.data(), per, kt);
      continue;
    }
    const std::size_t g = Model::gca_index(l);
    model_->project_kv(l, x.data(), per, self.key(g, 0), self.value(g, 0), kt);
    const std::size_t prior_n = ctx.tokens();
    kb.resize((prior_n + per) * c);
    vb.resize(kb.size());
    if (prior_n) {
      std::memcpy(kb.data(), ctx.key(g, 0), prior_n * c * sizeof(float));
      std::memcpy(vb.data(), ctx.value(g, 0), prior_n * c * sizeof(float));
    }
    std::memcpy(kb.data() + prior_n * c, self.key(g, 0), per * c * sizeof(float));
    std::memcpy(vb.data() + prior_n * c, self.value(g, 0), per * c * sizeof(float));
    model_->gca_layer(l, x.data(), per, row, m, kb.data(), vb.data(), prior_n + per, kt);
  }

  FrameOutput out = finalize(t, model_->heads(x.data(), per, kt), scale_, grid_w_, grid_h_);

  std::optional<double> flow;
  if (cfg_.keyframe.mode == kv::KeyframePolicy::Mode::flow_threshold && gate_->last_keyframe()) {
    const geom::FlowResult fr =
        geom::mean_flow_magnitude(key_depth_, key_pose_, out.pose, k_.downscaled(cfg_.patch));
    flow = fr.magnitude * static_cast<double>(cfg_.patch);
    out.stats.flow_px = *flow;
  }
  const bool keep = gate_->decide(t, flow) == kv::Decision::keep;
  if (keep) {
    const std::optional<FrameId> demoted = partition_->would_demote(t);
    *partition_ = std::move(tentative);
    if (demoted) cache_->evict_to_context(*demoted);
    cache_->append_frame(t, self);
    key_depth_ = out.depth;
    key_pose_ = out.pose;
  }

  const kv::MemoryReport mem = cache_->memory();
  out.stats.tokens_gathered = row.token_count(m);
  out.stats.live_tokens = mem.live_tokens;
  out.stats.cache_bytes = mem.live_bytes;
  out.stats.keyframe = keep;
  out.stats.latency_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

namespace {

Trajectory trajectory_of(const std::vector<FrameOutput>& outs) {
  Trajectory traj;
  for (const FrameOutput& o : outs) traj.push_back(o.frame, o.pose);
  return traj;
}

}  // namespace

RunResult run_direct(Engine& engine, std::span<const ImageRaster> frames, std::optional<geom::Intrinsics> k) {
  if (frames.empty()) throw ConfigError("run: empty frame sequence");
  engine.reset();
  const std::size_t n = std::min(engine.config().anchors, frames.size());
  RunResult r;
  r.frames = engine.anchor_init(frames.first(n), k);
  for (std::size_t t = n; t < frames.size(); ++t) r.frames.push_back(engine.step(frames[t]));
  r.trajectory = trajectory_of(r.frames);
  return r;
}

void VoOptions::validate() const {
  if (overlap < 3) throw ConfigError("vo: overlap must be at least 3 frames, got " + std::to_string(overlap));
  if (window_len <= overlap)
    throw ConfigError("vo: window length " + std::to_string(window_len) + " must exceed overlap " +
                      std::to_string(overlap));
}

std::vector<std::size_t> vo_window_starts(std::size_t frames, const VoOptions& options) {
  options.validate();
  std::vector<std::size_t> starts{0};
  const std::size_t stride = options.window_len - options.overlap;
  while (starts.back() + options.window_len < frames) starts.push_back(starts.back() + stride);
  return starts;
}

geom::Sim3 stitch(std::span<const geom::Pose> prev_overlap, std::span<const geom::Pose> next_overlap) {
  std::vector<geom::Vec3> src, dst;
  for (const auto& p : next_overlap) src.push_back(p.center());
  for (const auto& p : prev_overlap) dst.push_back(p.center());
  return geom::umeyama(src, dst, true);
}

Trajectory stitch_windows(std::span<const Trajectory> windows) {
  if (windows.empty()) return {};
  Trajectory out = windows[0];
  for (std::size_t w = 1; w < windows.size(); ++w) {
    const Trajectory& next = windows[w];
    std::vector<geom::Pose> prev_shared, next_shared;
    for (std::size_t i = 0; i < next.size(); ++i) {
      const auto it = std::lower_bound(out.ids.begin(), out.ids.end(), next.ids[i]);
      if (it != out.ids.end() && *it == next.ids[i]) {
        prev_shared.push_back(out.poses[static_cast<std::size_t>(it - out.ids.begin())]);
        next_shared.push_back(next.poses[i]);
      }
    }
    if (prev_shared.size() < 3)
      throw DegenerateError("stitch: window " + std::to_string(w) + " shares " + std::to_string(prev_shared.size()) +
                            " frames with its predecessor; need 3");
    const geom::Sim3 g = stitch(prev_shared, next_shared);
    for (std::size_t i = 0; i < next.size(); ++i)
      if (next.ids[i] > out.ids.back()) out.push_back(next.ids[i], g.apply(next.poses[i]));
  }
  return out;
}

RunResult run_vo(Engine& engine, std::span<const ImageRaster> frames, const VoOptions& options,
                 std::optional<geom::Intrinsics> k) {
  options.validate();
  if (frames.empty()) throw ConfigError("run: empty frame sequence");
  const std::vector<std::size_t> starts = vo_window_starts(frames.size(), options);
  if (starts.size() == 1) return run_direct(engine, frames, k);

  std::vector<Trajectory> windows;
  RunResult r;
  for (const std::size_t start : starts) {
    const std::size_t len = std::min(options.window_len, frames.size() - start);
    RunResult w = run_direct(engine, frames.subspan(start, len), k);
    Trajectory traj;
    for (FrameOutput& o : w.frames) {
      o.frame += static_cast<FrameId>(start);
      traj.push_back(o.frame, o.pose);
      if (r.frames.empty() || o.frame > r.frames.back().frame) r.frames.push_back(std::move(o));
    }
    windows.push_back(std::move(traj));
  }
  r.trajectory = stitch_windows(windows);
  for (std::size_t i = 0; i < r.frames.size(); ++i) {
    r.frames[i].pose = r.trajectory.poses[i];
    r.frames[i].quaternion = geom::quaternion_from_rotation(r.frames[i].pose.rotation);
  }
  return r;
}

}  // namespace geoctx::engine
