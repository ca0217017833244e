#include <vector>

#include "geoctx/engine.hpp"
#include "geoctx/error.hpp"
#include "model.hpp"

namespace geoctx::engine {

std::vector<FrameOutput> batch_forward(const Engine& engine, std::span<const ImageRaster> frames,
                                       std::span<const bool> kept, std::optional<geom::Intrinsics> k) {
  if (frames.empty()) return {};
  for (const ImageRaster& f : frames)
    if (!f.same_shape(frames[0])) throw ShapeError("batch forward: rasters differ in size");
  const EngineConfig& cfg = engine.config();
  const Model& model = engine.model();
  const simd::KernelTable& kt = simd::scalar_kernels();

  std::uint32_t gw = 0, gh = 0;
  grid_of(frames[0], cfg.patch, gw, gh);
  const std::size_t m = static_cast<std::size_t>(gw) * gh;
  const std::size_t n = std::min(cfg.anchors, frames.size());

  std::vector<std::vector<float>> tokens;
  for (std::size_t f = 0; f < frames.size(); ++f) tokens.push_back(model.embed(frames[f], gw, gh, f < n));
  const mask::BlockMask rows = mask::build_sequence_mask({mask::MaskMode::gca, cfg.anchors, cfg.window},
                                                         static_cast<FrameId>(frames.size()), kept);
  const auto final_tokens = joint_forward(model, std::move(tokens), rows, m, kt, nullptr);

  std::vector<HeadOutput> raw;
  for (const auto& x : final_tokens) raw.push_back(model.heads(x.data(), m + mask::kContextTokens, kt));
  geom::Intrinsics kk = k ? *k : default_intrinsics(frames[0].width, frames[0].height);
  const double scale =
      anchor_scale_of(std::vector<HeadOutput>(raw.begin(), raw.begin() + static_cast<std::ptrdiff_t>(n)),
                      kk.downscaled(cfg.patch));

  std::vector<FrameOutput> outs;
  for (std::size_t f = 0; f < frames.size(); ++f)
    outs.push_back(finalize(static_cast<FrameId>(f), raw[f], scale, gw, gh));
  return outs;
}

}  // namespace geoctx::engine
