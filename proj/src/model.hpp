#pragma once

// Weights and per-layer math shared by the streaming engine and the batch
// oracle. Both paths call the same functions so they differ only in kernel
// table and in where keys/values come from.

#include <array>
#include <cstdint>
#include <vector>

#include "geoctx/attention_mask.hpp"
#include "geoctx/engine.hpp"
#include "geoctx/simd/kernels.hpp"

namespace geoctx::engine {

struct LayerWeights {
  std::vector<float> ln1_g, ln1_b;
  std::vector<float> wq, wk, wv, wo;  // [C x C], row = output channel
  std::vector<float> ln2_g, ln2_b;
  std::vector<float> w1, b1;  // [2C x C]
  std::vector<float> w2, b2;  // [C x 2C]
};

/// Raw head outputs before anchor-scale normalization.
struct HeadOutput {
  std::array<double, 4> quaternion{1.0, 0.0, 0.0, 0.0};
  geom::Vec3 translation = geom::Vec3::Zero();
  std::vector<float> depth;        // per image token
  std::vector<float> uncertainty;  // per image token
};

class Model {
 public:
  explicit Model(const EngineConfig& cfg);

  std::size_t width() const { return c_; }
  std::size_t layers() const { return layers_.size(); }
  static bool is_gca(std::size_t layer) { return layer % 2 == 1; }
  static std::size_t gca_index(std::size_t layer) { return layer / 2; }

  /// Token matrix [(M+6) x C] for one frame. Anchor frames carry the anchor
  /// token in the anchor slot; streaming frames carry a separate constant.
  std::vector<float> embed(const ImageRaster& image, std::uint32_t grid_w, std::uint32_t grid_h,
                           bool anchor) const;

  /// x += FrameAttention(LN(x)); x += MLP(LN(x)).
  void frame_layer(std::size_t layer, float* x, std::size_t tokens, const simd::KernelTable& kt) const;

  /// LN(x) projected to keys and values (no rotary phase), [tokens x C] each.
  void project_kv(std::size_t layer, const float* x, std::size_t tokens, float* k, float* v,
                  const simd::KernelTable& kt) const;

  /// GCA residual update of the query frame. `keys`/`values` hold every
  /// attended token in mask order (own block last); rotary phases are applied
  /// to a copy of the keys per `row`.
  void gca_layer(std::size_t layer, float* x, std::size_t tokens, const mask::QueryMask& row,
                 std::size_t image_tokens, const float* keys, const float* values, std::size_t key_tokens,
                 const simd::KernelTable& kt) const;

  HeadOutput heads(const float* x, std::size_t tokens, const simd::KernelTable& kt) const;

 private:
  void layer_norm(const std::vector<float>& g, const std::vector<float>& b, const float* x, float* out,
                  std::size_t tokens) const;
  void mlp(const LayerWeights& w, float* x, std::size_t tokens, const simd::KernelTable& kt) const;
  void attention(const float* q, std::size_t nq, const float* k, const float* v, std::size_t nk, float* out,
                 const simd::KernelTable& kt) const;
  void rotate_block(float* k, std::size_t tokens, std::int64_t delta) const;

  std::size_t c_, heads_, hd_;
  std::uint32_t patch_;
  RopeScope scope_;
  std::vector<double> rope_freq_;  // per rotary pair within a head
  std::vector<float> patch_w_, patch_b_;
  std::vector<float> camera_, registers_, anchor_, stream_slot_;
  std::vector<LayerWeights> layers_;
  std::vector<float> lnf_g_, lnf_b_;
  std::vector<float> cam_w_, cam_b_;      // [7 x C]
  std::vector<float> depth_w_, depth_b_;  // [2 x C]
};

/// Patch grid of the raster for the configured patch size.
void grid_of(const ImageRaster& image, std::uint32_t patch, std::uint32_t& grid_w, std::uint32_t& grid_h);

/// Anchor scale from raw anchor outputs: mean norm of patch-center points
/// unprojected with the patch-grid intrinsics.
double anchor_scale_of(const std::vector<HeadOutput>& anchors, const geom::Intrinsics& grid_k);

/// Builds the normalized FrameOutput from raw heads.
FrameOutput finalize(FrameId frame, const HeadOutput& h, double scale, std::uint32_t grid_w, std::uint32_t grid_h);

/// Joint forward over frames whose rows reference each other by index, all
/// layers computed for all frames before moving on. Used for anchor init and
/// the batch oracle. Returns final tokens per frame and, when `kv_out` is
/// non-null, the raw GCA keys/values per frame.
std::vector<std::vector<float>> joint_forward(const Model& model, std::vector<std::vector<float>> tokens,
                                              const mask::BlockMask& rows, std::size_t image_tokens,
                                              const simd::KernelTable& kt, std::vector<kv::FrameKV>* kv_out);

}  // namespace geoctx::engine
