#include "geoctx/kv_cache.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include "geoctx/error.hpp"

namespace geoctx::kv {

void CacheConfig::validate() const {
  if (layers == 0) throw ConfigError("cache: layer count must be positive");
  if (width == 0) throw ConfigError("cache: width must be positive");
  if (page_capacity == 0) throw ConfigError("cache: page capacity must be positive");
  if (dtype_bytes == 0) throw ConfigError("cache: dtype width must be positive");
}

PagedCache::PagedCache(const CacheConfig& config) : cfg_(config) { cfg_.validate(); }

std::uint32_t PagedCache::new_page() {
  if (!free_.empty()) {
    const std::uint32_t id = free_.back();
    free_.pop_back();
    pages_[id].used = 0;
    return id;
  }
  Page p;
  const std::size_t n = cfg_.layers * cfg_.page_capacity * cfg_.width;
  p.keys.assign(n, 0.0f);
  p.values.assign(n, 0.0f);
  pages_.push_back(std::move(p));
  return static_cast<std::uint32_t>(pages_.size() - 1);
}

void PagedCache::write(const Piece& piece, const FrameKV& kv, std::size_t first_token) {
  Page& page = pages_[piece.page];
  const std::size_t row = cfg_.width * sizeof(float);
  for (std::size_t l = 0; l < cfg_.layers; ++l) {
    const std::size_t dst = (l * cfg_.page_capacity + piece.offset) * cfg_.width;
    std::memcpy(page.keys.data() + dst, kv.key(l, first_token), row * piece.count);
    std::memcpy(page.values.data() + dst, kv.value(l, first_token), row * piece.count);
  }
}

void PagedCache::read(const Piece& piece, Gathered& out, std::size_t dst_token) const {
  const Page& page = pages_[piece.page];
  const std::size_t total = out.tokens();
  const std::size_t row = cfg_.width * sizeof(float);
  for (std::size_t l = 0; l < cfg_.layers; ++l) {
    const std::size_t src = (l * cfg_.page_capacity + piece.offset) * cfg_.width;
    const std::size_t dst = (l * total + dst_token) * cfg_.width;
    std::memcpy(out.keys.data() + dst, page.keys.data() + src, row * piece.count);
    std::memcpy(out.values.data() + dst, page.values.data() + src, row * piece.count);
  }
}

void PagedCache::append_frame(FrameId frame, const FrameKV& kv, bool anchor) {
  if (frames_.count(frame)) throw SequencingError("cache: frame " + std::to_string(frame) + " already cached");
  if (latest_ && frame < *latest_)
    throw SequencingError("cache: frame " + std::to_string(frame) + " precedes latest " + std::to_string(*latest_));
  const std::size_t expected = cfg_.image_tokens + mask::kContextTokens;
  if (kv.layers != cfg_.layers || kv.width != cfg_.width || kv.tokens != expected ||
      kv.keys.size() != kv.layers * kv.tokens * kv.width || kv.values.size() != kv.keys.size())
    throw ShapeError("cache: frame " + std::to_string(frame) + " has " + std::to_string(kv.tokens) + " tokens x " +
                     std::to_string(kv.layers) + " layers x " + std::to_string(kv.width) + ", expected " +
                     std::to_string(expected) + " x " + std::to_string(cfg_.layers) + " x " +
                     std::to_string(cfg_.width));

  Entry e;
  e.anchor = anchor;
  const auto cap = static_cast<std::uint32_t>(cfg_.page_capacity);

  std::size_t token = 0;
  while (token < mask::kContextTokens) {
    if (!context_page_ || pages_[*context_page_].used == cap) context_page_ = new_page();
    Page& page = pages_[*context_page_];
    const auto take = static_cast<std::uint32_t>(std::min<std::size_t>(cap - page.used, mask::kContextTokens - token));
    const Piece piece{*context_page_, static_cast<std::uint32_t>(page.used), take};
    write(piece, kv, token);
    page.used += take;
    e.context.push_back(piece);
    token += take;
  }

  while (token < expected) {
    const std::uint32_t id = new_page();
    const auto take = static_cast<std::uint32_t>(std::min<std::size_t>(cap, expected - token));
    const Piece piece{id, 0, take};
    write(piece, kv, token);
    pages_[id].used = take;
    e.image.push_back(piece);
    token += take;
  }

  frames_.emplace(frame, std::move(e));
  latest_ = frame;
  live_tokens_ += expected;
}

void PagedCache::evict_to_context(FrameId frame) {
  auto it = frames_.find(frame);
  if (it == frames_.end()) throw SequencingError("cache: evicting unknown frame " + std::to_string(frame));
  Entry& e = it->second;
  if (e.anchor) throw SequencingError("cache: anchor frame " + std::to_string(frame) + " cannot be evicted");
  if (e.image.empty() && cfg_.image_tokens > 0)
    throw SequencingError("cache: frame " + std::to_string(frame) + " is already context-only");
  for (const Piece& p : e.image) free_.push_back(p.page);
  e.image.clear();
  live_tokens_ -= cfg_.image_tokens;
}

bool PagedCache::has_image(FrameId frame) const {
  auto it = frames_.find(frame);
  return it != frames_.end() && (!it->second.image.empty() || cfg_.image_tokens == 0);
}

Gathered PagedCache::gather(const mask::QueryMask& row) const {
  Gathered out;
  out.layers = cfg_.layers;
  out.width = cfg_.width;
  std::size_t total = 0;
  for (const mask::KeyBlock& b : row.keys) {
    auto it = frames_.find(b.frame);
    if (it == frames_.end())
      throw CacheCoherenceError("cache: mask for query " + std::to_string(row.query) + " references uncached frame " +
                                std::to_string(b.frame));
    if (b.span == mask::Span::full && !has_image(b.frame))
      throw CacheCoherenceError("cache: mask for query " + std::to_string(row.query) +
                                " requests image tokens of evicted frame " + std::to_string(b.frame));
    total += b.span == mask::Span::full ? cfg_.image_tokens + mask::kContextTokens : mask::kContextTokens;
  }
  out.frame_of.reserve(total);
  for (const mask::KeyBlock& b : row.keys) {
    const std::size_t n = b.span == mask::Span::full ? cfg_.image_tokens + mask::kContextTokens : mask::kContextTokens;
    out.frame_of.insert(out.frame_of.end(), n, b.frame);
  }
  out.keys.resize(cfg_.layers * total * cfg_.width);
  out.values.resize(out.keys.size());

  std::size_t dst = 0;
  for (const mask::KeyBlock& b : row.keys) {
    const Entry& e = frames_.at(b.frame);
    for (const Piece& p : e.context) {
      read(p, out, dst);
      dst += p.count;
    }
    if (b.span == mask::Span::full) {
      for (const Piece& p : e.image) {
        read(p, out, dst);
        dst += p.count;
      }
    }
  }
  return out;
}

std::uint64_t PagedCache::bytes_for(std::uint64_t tokens) const {
  return tokens * cfg_.layers * 2 * cfg_.width * cfg_.dtype_bytes;
}

MemoryReport PagedCache::memory() const {
  MemoryReport r;
  r.live_tokens = live_tokens_;
  r.live_bytes = bytes_for(live_tokens_);
  r.pages_created = pages_.size();
  r.pages_free = free_.size();
  r.pages_in_use = r.pages_created - r.pages_free;
  r.allocated_bytes = bytes_for(r.pages_created * cfg_.page_capacity);
  r.overhead_bytes = r.allocated_bytes - r.live_bytes;
  return r;
}

void KeyframePolicy::validate() const {
  if (mode == Mode::every_m && m == 0) throw ConfigError("keyframe interval m must be at least 1");
  if (mode == Mode::flow_threshold && !(threshold_px > 0.0))
    throw ConfigError("keyframe flow threshold must be positive");
}

KeyframePolicy KeyframePolicy::parse(const std::string& text) {
  KeyframePolicy p;
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw ConfigError("keyframe policy must be every:<m> or flow:<px>, got '" + text + "'");
  const std::string kind = text.substr(0, colon);
  const std::string arg = text.substr(colon + 1);
  try {
    std::size_t used = 0;
    if (kind == "every") {
      const long v = std::stol(arg, &used);
      if (v < 1) throw ConfigError("keyframe interval m must be at least 1");
      p.mode = Mode::every_m;
      p.m = static_cast<std::uint32_t>(v);
    } else if (kind == "flow") {
      p.mode = Mode::flow_threshold;
      p.threshold_px = std::stod(arg, &used);
    } else {
      throw ConfigError("unknown keyframe policy '" + kind + "'");
    }
    if (used != arg.size()) throw ConfigError("trailing characters in keyframe policy '" + text + "'");
  } catch (const std::logic_error&) {
    throw ConfigError("cannot parse keyframe policy '" + text + "'");
  }
  p.validate();
  return p;
}

std::string KeyframePolicy::describe() const {
  std::ostringstream os;
  if (mode == Mode::every_m)
    os << "every:" << m;
  else
    os << "flow:" << threshold_px;
  return os.str();
}

KeyframeGate::KeyframeGate(const KeyframePolicy& policy) : policy_(policy) { policy_.validate(); }

Decision KeyframeGate::decide(FrameId frame, std::optional<double> flow) {
  bool keep = !last_ || frame < policy_.gate_from_frame;
  if (!keep) {
    if (policy_.mode == KeyframePolicy::Mode::every_m) {
      keep = frame - *last_ >= static_cast<FrameId>(policy_.m);
    } else {
      if (!flow) throw ConfigError("flow-gated keyframe policy needs a flow value");
      keep = std::isinf(*flow) || *flow > policy_.threshold_px;
    }
  }
  if (keep) last_ = frame;
  return keep ? Decision::keep : Decision::skip;
}

}  // namespace geoctx::kv
