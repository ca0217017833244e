#include "geoctx/attention_mask.hpp"

#include <algorithm>
#include <numeric>

#include "geoctx/error.hpp"

namespace geoctx::mask {

std::uint64_t QueryMask::token_count(std::size_t image_tokens) const {
  std::uint64_t total = 0;
  for (const KeyBlock& b : keys) total += b.span == Span::full ? image_tokens + kContextTokens : kContextTokens;
  return total;
}

std::optional<MaskMode> parse_mask_mode(std::string_view text) {
  if (text == "full") return MaskMode::full;
  if (text == "causal") return MaskMode::causal;
  if (text == "sliding") return MaskMode::sliding;
  if (text == "gca") return MaskMode::gca;
  return std::nullopt;
}

std::string_view to_string(MaskMode mode) {
  switch (mode) {
    case MaskMode::full: return "full";
    case MaskMode::causal: return "causal";
    case MaskMode::sliding: return "sliding";
    case MaskMode::gca: return "gca";
  }
  return "?";
}

StreamPartition::StreamPartition(std::size_t anchors, std::size_t window) : n_(anchors), k_(window) {
  if (window == 0) throw ConfigError("window capacity k must be at least 1");
}

void StreamPartition::admit(FrameId frame) {
  if (frame < 0) throw SequencingError("frame id must be non-negative, got " + std::to_string(frame));
  if (latest_ && frame <= *latest_)
    throw SequencingError("frame id " + std::to_string(frame) + " does not follow " + std::to_string(*latest_));
  latest_ = frame;
  if (anchors_.size() < n_) {
    anchors_.push_back(frame);
    return;
  }
  if (window_.size() == k_) {
    trajectory_.push_back(window_.front());
    window_.pop_front();
  }
  window_.push_back(frame);
}

std::optional<FrameId> StreamPartition::would_demote(FrameId frame) const {
  if (latest_ && frame <= *latest_) return std::nullopt;
  if (anchors_.size() < n_ || window_.size() < k_) return std::nullopt;
  return window_.front();
}

bool StreamPartition::is_anchor(FrameId f) const {
  return std::find(anchors_.begin(), anchors_.end(), f) != anchors_.end();
}

bool StreamPartition::in_window(FrameId f) const {
  return std::find(window_.begin(), window_.end(), f) != window_.end();
}

bool StreamPartition::in_trajectory(FrameId f) const {
  return std::binary_search(trajectory_.begin(), trajectory_.end(), f);
}

StreamPartition partition_update(StreamPartition p, FrameId frame) {
  p.admit(frame);
  return p;
}

namespace {

std::vector<FrameId> admitted_sorted(const StreamPartition& p) {
  std::vector<FrameId> all(p.anchors().begin(), p.anchors().end());
  all.insert(all.end(), p.trajectory().begin(), p.trajectory().end());
  all.insert(all.end(), p.window().begin(), p.window().end());
  std::sort(all.begin(), all.end());
  return all;
}

void push_full(QueryMask& m, FrameId f) { m.keys.push_back({f, Span::full}); }

}  // namespace

QueryMask build_mask(const MaskSpec& spec, FrameId query, const StreamPartition& p) {
  QueryMask m;
  m.query = query;
  switch (spec.mode) {
    case MaskMode::full:
      for (FrameId f : admitted_sorted(p)) push_full(m, f);
      return m;
    case MaskMode::causal:
      for (FrameId f : admitted_sorted(p))
        if (f <= query) push_full(m, f);
      return m;
    case MaskMode::sliding: {
      std::vector<FrameId> all = admitted_sorted(p);
      std::erase_if(all, [&](FrameId f) { return f > query; });
      const std::size_t skip = all.size() > spec.window ? all.size() - spec.window : 0;
      for (std::size_t i = skip; i < all.size(); ++i) push_full(m, all[i]);
      return m;
    }
    case MaskMode::gca:
      break;
  }

  if (p.is_anchor(query)) {
    for (FrameId f : p.anchors()) push_full(m, f);
    return m;
  }
  if (!p.in_window(query))
    throw SequencingError("gca mask: query frame " + std::to_string(query) + " is not the latest admitted frame");
  // Ids are increasing across anchors < trajectory < window, so this is sorted.
  for (FrameId f : p.anchors()) push_full(m, f);
  for (FrameId f : p.trajectory()) m.keys.push_back({f, Span::context});
  for (FrameId f : p.window()) push_full(m, f);
  return m;
}

BlockMask build_sequence_mask(const MaskSpec& spec, FrameId frames, std::span<const bool> kept) {
  if (frames < 0) throw ConfigError("frame count must be non-negative");
  if (!kept.empty() && kept.size() != static_cast<std::size_t>(frames))
    throw ShapeError("keyframe flag count " + std::to_string(kept.size()) + " != frame count " +
                     std::to_string(frames));
  BlockMask out;
  out.rows.reserve(static_cast<std::size_t>(frames));

  if (spec.mode != MaskMode::gca) {
    for (FrameId t = 0; t < frames; ++t) {
      QueryMask m;
      m.query = t;
      FrameId lo = 0, hi = t;
      if (spec.mode == MaskMode::full) hi = frames - 1;
      if (spec.mode == MaskMode::sliding) lo = std::max<FrameId>(0, t - static_cast<FrameId>(spec.window) + 1);
      for (FrameId f = lo; f <= hi; ++f) push_full(m, f);
      out.rows.push_back(std::move(m));
    }
    return out;
  }

  const auto n = static_cast<FrameId>(std::min<std::size_t>(spec.anchors, static_cast<std::size_t>(frames)));
  StreamPartition p(spec.anchors, spec.window);
  for (FrameId t = 0; t < n; ++t) p.admit(t);
  for (FrameId t = 0; t < frames; ++t) {
    if (t < n) {
      out.rows.push_back(build_mask(spec, t, p));
      continue;
    }
    StreamPartition tentative = partition_update(p, t);
    out.rows.push_back(build_mask(spec, t, tentative));
    if (kept.empty() || kept[static_cast<std::size_t>(t)]) p = std::move(tentative);
  }
  return out;
}

std::uint64_t context_token_count(const MaskSpec& spec, std::uint64_t frames, std::uint64_t image_tokens) {
  const std::uint64_t block = image_tokens + kContextTokens;
  switch (spec.mode) {
    case MaskMode::full:
    case MaskMode::causal:
      return frames * block;
    case MaskMode::sliding:
      return std::min<std::uint64_t>(frames, spec.window) * block;
    case MaskMode::gca: {
      const std::uint64_t nk = spec.anchors + spec.window;
      if (frames < nk) return frames * block;
      return nk * image_tokens + kContextTokens * frames;
    }
  }
  return 0;
}

std::uint64_t enumerate_context_tokens(const MaskSpec& spec, FrameId frames, std::uint64_t image_tokens) {
  if (frames <= 0) return 0;
  StreamPartition p(spec.anchors, spec.window);
  for (FrameId f = 0; f < frames; ++f) p.admit(f);
  return build_mask(spec, frames - 1, p).token_count(image_tokens);
}

std::uint64_t per_frame_growth(MaskMode mode, std::uint64_t image_tokens) {
  switch (mode) {
    case MaskMode::full:
    case MaskMode::causal:
      return image_tokens + kContextTokens;
    case MaskMode::sliding:
      return 0;
    case MaskMode::gca:
      return kContextTokens;
  }
  return 0;
}

GrowthRatio growth_ratio(std::uint64_t image_tokens) {
  GrowthRatio r;
  r.causal = per_frame_growth(MaskMode::causal, image_tokens);
  r.gca = per_frame_growth(MaskMode::gca, image_tokens);
  const std::uint64_t g = std::gcd(r.causal, r.gca);
  r.numerator = r.causal / g;
  r.denominator = r.gca / g;
  r.value = static_cast<double>(r.causal) / static_cast<double>(r.gca);
  return r;
}

std::string render(const BlockMask& mask, FrameId frames) {
  std::string out;
  for (const QueryMask& row : mask.rows) {
    std::string line(static_cast<std::size_t>(frames), '.');
    for (const KeyBlock& b : row.keys)
      if (b.frame >= 0 && b.frame < frames) line[static_cast<std::size_t>(b.frame)] = b.span == Span::full ? 'F' : 'c';
    out += std::to_string(row.query);
    out += std::string(row.query < 10 ? 2 : 1, ' ');
    out += line;
    out += '\n';
  }
  return out;
}

}  // namespace geoctx::mask
