#include "model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "geoctx/error.hpp"
#include "geoctx/rng.hpp"

namespace geoctx::engine {
namespace {

constexpr float kNormEps = 1e-5f;

void fill_uniform(Rng& rng, std::vector<float>& v, std::size_t n, double bound) {
  v.resize(n);
  for (float& x : v) x = static_cast<float>(rng.uniform(-bound, bound));
}

float gelu(float x) {
  const float c = 0.7978845608028654f;  // sqrt(2/pi)
  return 0.5f * x * (1.0f + std::tanh(c * (x + 0.044715f * x * x * x)));
}

float softplus(float x) { return x > 20.0f ? x : std::log1p(std::exp(x)); }

thread_local std::vector<float> t_scores;

}  // namespace

Model::Model(const EngineConfig& cfg)
    : c_(cfg.width), heads_(cfg.heads), hd_(cfg.head_dim()), patch_(cfg.patch), scope_(cfg.rope_scope) {
  cfg.validate();
  Rng rng(cfg.seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(c_));
  const std::size_t pp = static_cast<std::size_t>(patch_) * patch_;

  fill_uniform(rng, patch_w_, c_ * pp, bound);
  fill_uniform(rng, patch_b_, c_, bound);
  fill_uniform(rng, camera_, c_, bound);
  fill_uniform(rng, registers_, mask::kRegisterTokens * c_, bound);
  fill_uniform(rng, anchor_, c_, bound);
  fill_uniform(rng, stream_slot_, c_, bound);

  layers_.resize(2 * cfg.pairs);
  for (LayerWeights& w : layers_) {
    w.ln1_g.assign(c_, 1.0f);
    w.ln1_b.assign(c_, 0.0f);
    w.ln2_g.assign(c_, 1.0f);
    w.ln2_b.assign(c_, 0.0f);
    fill_uniform(rng, w.wq, c_ * c_, bound);
    fill_uniform(rng, w.wk, c_ * c_, bound);
    fill_uniform(rng, w.wv, c_ * c_, bound);
    fill_uniform(rng, w.wo, c_ * c_, bound);
    fill_uniform(rng, w.w1, 2 * c_ * c_, bound);
    fill_uniform(rng, w.b1, 2 * c_, bound);
    fill_uniform(rng, w.w2, 2 * c_ * c_, bound);
    fill_uniform(rng, w.b2, c_, bound);
  }
  lnf_g_.assign(c_, 1.0f);
  lnf_b_.assign(c_, 0.0f);
  fill_uniform(rng, cam_w_, 7 * c_, bound);
  fill_uniform(rng, cam_b_, 7, bound);
  fill_uniform(rng, depth_w_, 2 * c_, bound);
  fill_uniform(rng, depth_b_, 2, bound);

  rope_freq_.resize(hd_ / 2);
  for (std::size_t p = 0; p < rope_freq_.size(); ++p)
    rope_freq_[p] = std::pow(cfg.rope_base, -2.0 * static_cast<double>(p) / static_cast<double>(hd_));
}

void grid_of(const ImageRaster& image, std::uint32_t patch, std::uint32_t& grid_w, std::uint32_t& grid_h) {
  grid_w = image.width / patch;
  grid_h = image.height / patch;
  if (grid_w == 0 || grid_h == 0)
    throw ShapeError("raster " + std::to_string(image.width) + "x" + std::to_string(image.height) +
                     " is smaller than one " + std::to_string(patch) + "px patch");
  if (image.values.size() != static_cast<std::size_t>(image.width) * image.height)
    throw ShapeError("raster value count does not match its dimensions");
}

std::vector<float> Model::embed(const ImageRaster& image, std::uint32_t grid_w, std::uint32_t grid_h,
                                bool anchor) const {
  const std::size_t m = static_cast<std::size_t>(grid_w) * grid_h;
  std::vector<float> x((m + mask::kContextTokens) * c_);
  std::copy(camera_.begin(), camera_.end(), x.begin());
  std::copy(registers_.begin(), registers_.end(), x.begin() + c_);
  const std::vector<float>& slot = anchor ? anchor_ : stream_slot_;
  std::copy(slot.begin(), slot.end(), x.begin() + mask::FrameTokenLayout::anchor_index * c_);

  const std::size_t pp = static_cast<std::size_t>(patch_) * patch_;
  const std::size_t half = c_ / 2;
  std::vector<float> pixels(pp);
  // Image path always uses the reference kernels; it is a negligible share of
  // the work and keeping it identical simplifies streaming/batch comparison.
  const simd::KernelTable& kt = simd::scalar_kernels();
  for (std::uint32_t gy = 0; gy < grid_h; ++gy) {
    for (std::uint32_t gx = 0; gx < grid_w; ++gx) {
      for (std::uint32_t py = 0; py < patch_; ++py)
        for (std::uint32_t px = 0; px < patch_; ++px)
          pixels[py * patch_ + px] = image.at(gx * patch_ + px, gy * patch_ + py);
      float* row = x.data() + (mask::kContextTokens + gy * grid_w + gx) * c_;
      kt.gemv(patch_w_.data(), patch_b_.data(), pixels.data(), row, c_, pp);
      for (std::size_t c = 0; c < half; ++c) {
        const double omega = 1.0 / std::pow(100.0, 2.0 * static_cast<double>(c / 2) / static_cast<double>(half));
        const double ar = gy * omega, ac = gx * omega;
        row[c] += static_cast<float>(c % 2 == 0 ? std::sin(ar) : std::cos(ar));
        row[half + c] += static_cast<float>(c % 2 == 0 ? std::sin(ac) : std::cos(ac));
      }
    }
  }
  return x;
}

void Model::layer_norm(const std::vector<float>& g, const std::vector<float>& b, const float* x, float* out,
                       std::size_t tokens) const {
  for (std::size_t t = 0; t < tokens; ++t) {
    const float* xi = x + t * c_;
    float* yi = out + t * c_;
    double mean = 0.0;
    for (std::size_t c = 0; c < c_; ++c) mean += xi[c];
    mean /= static_cast<double>(c_);
    double var = 0.0;
    for (std::size_t c = 0; c < c_; ++c) var += (xi[c] - mean) * (xi[c] - mean);
    var /= static_cast<double>(c_);
    const double inv = 1.0 / std::sqrt(var + kNormEps);
    for (std::size_t c = 0; c < c_; ++c) yi[c] = static_cast<float>((xi[c] - mean) * inv) * g[c] + b[c];
  }
}

void Model::attention(const float* q, std::size_t nq, const float* k, const float* v, std::size_t nk, float* out,
                      const simd::KernelTable& kt) const {
  t_scores.resize(nq * nk);
  float* s = t_scores.data();
  const float scale = 1.0f / std::sqrt(static_cast<float>(hd_));
  for (std::size_t h = 0; h < heads_; ++h) {
    const std::size_t off = h * hd_;
    kt.attend(q + off, c_, k + off, c_, v + off, c_, out + off, c_, nq, nk, hd_, scale, s);
  }
}

void Model::mlp(const LayerWeights& w, float* x, std::size_t tokens, const simd::KernelTable& kt) const {
  std::vector<float> h(tokens * c_), u(tokens * 2 * c_), y(tokens * c_);
  layer_norm(w.ln2_g, w.ln2_b, x, h.data(), tokens);
  kt.gemm_nt(h.data(), c_, w.w1.data(), c_, u.data(), 2 * c_, tokens, 2 * c_, c_, 1.0f);
  for (std::size_t t = 0; t < tokens; ++t)
    for (std::size_t j = 0; j < 2 * c_; ++j) u[t * 2 * c_ + j] = gelu(u[t * 2 * c_ + j] + w.b1[j]);
  kt.gemm_nt(u.data(), 2 * c_, w.w2.data(), 2 * c_, y.data(), c_, tokens, c_, 2 * c_, 1.0f);
  for (std::size_t t = 0; t < tokens; ++t)
    for (std::size_t j = 0; j < c_; ++j) x[t * c_ + j] += y[t * c_ + j] + w.b2[j];
}

void Model::frame_layer(std::size_t layer, float* x, std::size_t tokens, const simd::KernelTable& kt) const {
  const LayerWeights& w = layers_[layer];
  const std::size_t n = tokens * c_;
  std::vector<float> h(n), q(n), k(n), v(n), o(n), y(n);
  layer_norm(w.ln1_g, w.ln1_b, x, h.data(), tokens);
  kt.gemm_nt(h.data(), c_, w.wq.data(), c_, q.data(), c_, tokens, c_, c_, 1.0f);
  kt.gemm_nt(h.data(), c_, w.wk.data(), c_, k.data(), c_, tokens, c_, c_, 1.0f);
  kt.gemm_nt(h.data(), c_, w.wv.data(), c_, v.data(), c_, tokens, c_, c_, 1.0f);
  attention(q.data(), tokens, k.data(), v.data(), tokens, o.data(), kt);
  kt.gemm_nt(o.data(), c_, w.wo.data(), c_, y.data(), c_, tokens, c_, c_, 1.0f);
  for (std::size_t i = 0; i < n; ++i) x[i] += y[i];
  mlp(w, x, tokens, kt);
}

void Model::project_kv(std::size_t layer, const float* x, std::size_t tokens, float* k, float* v,
                       const simd::KernelTable& kt) const {
  const LayerWeights& w = layers_[layer];
  std::vector<float> h(tokens * c_);
  layer_norm(w.ln1_g, w.ln1_b, x, h.data(), tokens);
  kt.gemm_nt(h.data(), c_, w.wk.data(), c_, k, c_, tokens, c_, c_, 1.0f);
  kt.gemm_nt(h.data(), c_, w.wv.data(), c_, v, c_, tokens, c_, c_, 1.0f);
}

void Model::rotate_block(float* k, std::size_t tokens, std::int64_t delta) const {
  if (delta == 0) return;
  const std::size_t pairs = hd_ / 2;
  std::vector<float> cs(pairs), sn(pairs);
  for (std::size_t p = 0; p < pairs; ++p) {
    const double angle = rope_freq_[p] * static_cast<double>(delta);
    cs[p] = static_cast<float>(std::cos(angle));
    sn[p] = static_cast<float>(std::sin(angle));
  }
  for (std::size_t t = 0; t < tokens; ++t) {
    float* row = k + t * c_;
    for (std::size_t h = 0; h < heads_; ++h) {
      for (std::size_t p = 0; p < pairs; ++p) {
        float& a = row[h * hd_ + 2 * p];
        float& b = row[h * hd_ + 2 * p + 1];
        const float ra = a * cs[p] - b * sn[p];
        const float rb = a * sn[p] + b * cs[p];
        a = ra;
        b = rb;
      }
    }
  }
}

void Model::gca_layer(std::size_t layer, float* x, std::size_t tokens, const mask::QueryMask& row,
                      std::size_t image_tokens, const float* keys, const float* values, std::size_t key_tokens,
                      const simd::KernelTable& kt) const {
  const LayerWeights& w = layers_[layer];
  const std::size_t n = tokens * c_;
  std::vector<float> h(n), q(n), o(n), y(n);
  std::vector<float> k(keys, keys + key_tokens * c_);

  std::size_t offset = 0;
  for (const mask::KeyBlock& b : row.keys) {
    const std::size_t count = b.span == mask::Span::full ? image_tokens + mask::kContextTokens : mask::kContextTokens;
    if (offset + count > key_tokens) break;
    if (scope_ == RopeScope::all || b.span == mask::Span::context)
      rotate_block(k.data() + offset * c_, count, b.frame - row.query);
    offset += count;
  }
  if (offset != key_tokens)
    throw ShapeError("gca layer: mask covers " + std::to_string(row.token_count(image_tokens)) + " tokens but " +
                     std::to_string(key_tokens) + " were supplied");

  layer_norm(w.ln1_g, w.ln1_b, x, h.data(), tokens);
  kt.gemm_nt(h.data(), c_, w.wq.data(), c_, q.data(), c_, tokens, c_, c_, 1.0f);
  attention(q.data(), tokens, k.data(), values, key_tokens, o.data(), kt);
  kt.gemm_nt(o.data(), c_, w.wo.data(), c_, y.data(), c_, tokens, c_, c_, 1.0f);
  for (std::size_t i = 0; i < n; ++i) x[i] += y[i];
  mlp(w, x, tokens, kt);
}

HeadOutput Model::heads(const float* x, std::size_t tokens, const simd::KernelTable& kt) const {
  HeadOutput out;
  std::vector<float> y(tokens * c_);
  layer_norm(lnf_g_, lnf_b_, x, y.data(), tokens);

  float cam[7];
  kt.gemv(cam_w_.data(), cam_b_.data(), y.data(), cam, 7, c_);
  double q[4] = {1.0 + cam[0], cam[1], cam[2], cam[3]};
  const double norm = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
  if (norm > 1e-12) {
    const double sign = q[0] < 0.0 ? -1.0 : 1.0;
    for (int i = 0; i < 4; ++i) out.quaternion[i] = sign * q[i] / norm;
  }
  out.translation = geom::Vec3(cam[4], cam[5], cam[6]);

  const std::size_t m = tokens - mask::kContextTokens;
  out.depth.resize(m);
  out.uncertainty.resize(m);
  for (std::size_t i = 0; i < m; ++i) {
    float d[2];
    kt.gemv(depth_w_.data(), depth_b_.data(), y.data() + (mask::kContextTokens + i) * c_, d, 2, c_);
    out.depth[i] = softplus(d[0]) + 0.1f;
    out.uncertainty[i] = std::exp(d[1]);
  }
  return out;
}

double anchor_scale_of(const std::vector<HeadOutput>& anchors, const geom::Intrinsics& grid_k) {
  double sum = 0.0;
  std::size_t count = 0;
  for (const HeadOutput& h : anchors) {
    geom::Pose pose;
    pose.rotation = geom::rotation_from_quaternion(h.quaternion[0], h.quaternion[1], h.quaternion[2], h.quaternion[3]);
    pose.translation = h.translation;
    for (std::uint32_t gy = 0; gy < grid_k.height; ++gy)
      for (std::uint32_t gx = 0; gx < grid_k.width; ++gx) {
        const double d = h.depth[static_cast<std::size_t>(gy) * grid_k.width + gx];
        const geom::Vec3 p(d * (gx - grid_k.cx) / grid_k.fx, d * (gy - grid_k.cy) / grid_k.fy, d);
        sum += pose.apply(p).norm();
        ++count;
      }
  }
  const double s = count ? sum / static_cast<double>(count) : 0.0;
  if (!(s > 0.0) || !std::isfinite(s)) throw DegenerateError("anchor scale is not positive");
  return s;
}

FrameOutput finalize(FrameId frame, const HeadOutput& h, double scale, std::uint32_t grid_w, std::uint32_t grid_h) {
  FrameOutput out;
  out.frame = frame;
  out.quaternion = h.quaternion;
  out.pose.rotation = geom::rotation_from_quaternion(h.quaternion[0], h.quaternion[1], h.quaternion[2], h.quaternion[3]);
  out.pose.translation = h.translation / scale;
  out.depth = DepthRaster(grid_w, grid_h);
  out.uncertainty = Raster(grid_w, grid_h);
  for (std::size_t i = 0; i < h.depth.size(); ++i) {
    out.depth.values[i] = static_cast<float>(static_cast<double>(h.depth[i]) / scale);
    out.uncertainty.values[i] = h.uncertainty[i];
  }
  return out;
}

std::vector<std::vector<float>> joint_forward(const Model& model, std::vector<std::vector<float>> tokens,
                                              const mask::BlockMask& rows, std::size_t image_tokens,
                                              const simd::KernelTable& kt, std::vector<kv::FrameKV>* kv_out) {
  const std::size_t frames = tokens.size();
  const std::size_t per = image_tokens + mask::kContextTokens;
  const std::size_t c = model.width();
  if (rows.rows.size() != frames) throw ShapeError("joint forward: one mask row per frame required");
  if (kv_out) kv_out->assign(frames, kv::FrameKV(model.layers() / 2, per, c));

  std::vector<std::vector<float>> k(frames), v(frames);
  std::vector<float> kb, vb;
  for (std::size_t l = 0; l < model.layers(); ++l) {
    if (!Model::is_gca(l)) {
      for (auto& x : tokens) model.frame_layer(l, x.data(), per, kt);
      continue;
    }
    const std::size_t g = Model::gca_index(l);
    for (std::size_t f = 0; f < frames; ++f) {
      k[f].resize(per * c);
      v[f].resize(per * c);
      model.project_kv(l, tokens[f].data(), per, k[f].data(), v[f].data(), kt);
      if (kv_out) {
        std::memcpy((*kv_out)[f].key(g, 0), k[f].data(), per * c * sizeof(float));
        std::memcpy((*kv_out)[f].value(g, 0), v[f].data(), per * c * sizeof(float));
      }
    }
    for (std::size_t f = 0; f < frames; ++f) {
      const mask::QueryMask& row = rows.rows[f];
      const std::size_t total = row.token_count(image_tokens);
      kb.resize(total * c);
      vb.resize(total * c);
      std::size_t off = 0;
      for (const mask::KeyBlock& b : row.keys) {
        const std::size_t count = b.span == mask::Span::full ? per : mask::kContextTokens;
        const auto src = static_cast<std::size_t>(b.frame);
        std::memcpy(kb.data() + off * c, k[src].data(), count * c * sizeof(float));
        std::memcpy(vb.data() + off * c, v[src].data(), count * c * sizeof(float));
        off += count;
      }
      model.gca_layer(l, tokens[f].data(), per, row, image_tokens, kb.data(), vb.data(), total, kt);
    }
  }
  return tokens;
}

}  // namespace geoctx::engine
