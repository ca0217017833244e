#include "geoctx/spatial_hash.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "geoctx/error.hpp"
#include "geoctx/simd/kernels.hpp"

namespace geoctx::geom {

std::size_t SpatialHash::KeyHash::operator()(const Key& k) const noexcept {
  // Teschner et al. style prime mixing.
  const auto ux = static_cast<std::uint64_t>(k.x) * 73856093ULL;
  const auto uy = static_cast<std::uint64_t>(k.y) * 19349663ULL;
  const auto uz = static_cast<std::uint64_t>(k.z) * 83492791ULL;
  return static_cast<std::size_t>(ux ^ uy ^ uz);
}

SpatialHash::SpatialHash(std::span<const Vec3> points, double cell_size) : cell_(cell_size) {
  if (!(cell_size > 0.0) || !std::isfinite(cell_size))
    throw ConfigError("spatial hash cell size must be positive and finite");

  std::vector<Key> keys(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!points[i].allFinite()) throw ShapeError("spatial hash: non-finite point coordinate");
    keys[i] = key_of(points[i]);
  }

  order_.resize(points.size());
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  std::stable_sort(order_.begin(), order_.end(), [&](std::size_t a, std::size_t b) {
    const Key& ka = keys[a];
    const Key& kb = keys[b];
    if (ka.x != kb.x) return ka.x < kb.x;
    if (ka.y != kb.y) return ka.y < kb.y;
    return ka.z < kb.z;
  });

  xs_.resize(order_.size());
  ys_.resize(order_.size());
  zs_.resize(order_.size());
  for (std::size_t slot = 0; slot < order_.size(); ++slot) {
    const Vec3& p = points[order_[slot]];
    xs_[slot] = p.x();
    ys_[slot] = p.y();
    zs_[slot] = p.z();
  }

  if (order_.empty()) return;
  lo_ = hi_ = keys[order_[0]];
  std::size_t begin = 0;
  for (std::size_t slot = 1; slot <= order_.size(); ++slot) {
    if (slot == order_.size() || !(keys[order_[slot]] == keys[order_[begin]])) {
      const Key& k = keys[order_[begin]];
      cells_.emplace(k, Range{static_cast<std::uint32_t>(begin), static_cast<std::uint32_t>(slot)});
      lo_ = {std::min(lo_.x, k.x), std::min(lo_.y, k.y), std::min(lo_.z, k.z)};
      hi_ = {std::max(hi_.x, k.x), std::max(hi_.y, k.y), std::max(hi_.z, k.z)};
      begin = slot;
    }
  }
}

SpatialHash::Key SpatialHash::key_of(const Vec3& p) const {
  return {static_cast<std::int64_t>(std::floor(p.x() / cell_)),
          static_cast<std::int64_t>(std::floor(p.y() / cell_)),
          static_cast<std::int64_t>(std::floor(p.z() / cell_))};
}

void SpatialHash::scan_cell(const Key& key, const Vec3& q, double& best_sq, std::size_t& best_index,
                            std::vector<double>& scratch) const {
  const auto it = cells_.find(key);
  if (it == cells_.end()) return;
  const Range r = it->second;
  const std::size_t n = r.end - r.begin;
  scratch.resize(n);
  simd::active_kernels().sq_dist3(q.x(), q.y(), q.z(), xs_.data() + r.begin, ys_.data() + r.begin,
                                  zs_.data() + r.begin, n, scratch.data());
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t original = order_[r.begin + i];
    if (scratch[i] < best_sq || (scratch[i] == best_sq && original < best_index)) {
      best_sq = scratch[i];
      best_index = original;
    }
  }
}

std::optional<SpatialHash::Hit> SpatialHash::nearest_within(const Vec3& q, double radius) const {
  if (order_.empty() || !(radius >= 0.0)) return std::nullopt;
  const Key c = key_of(q);
  const auto rings = static_cast<std::int64_t>(std::ceil(radius / cell_));
  double best_sq = std::numeric_limits<double>::infinity();
  std::size_t best_index = std::numeric_limits<std::size_t>::max();
  std::vector<double> scratch;
  for (std::int64_t dx = -rings; dx <= rings; ++dx)
    for (std::int64_t dy = -rings; dy <= rings; ++dy)
      for (std::int64_t dz = -rings; dz <= rings; ++dz)
        scan_cell({c.x + dx, c.y + dy, c.z + dz}, q, best_sq, best_index, scratch);
  if (best_sq > radius * radius) return std::nullopt;
  return Hit{best_index, std::sqrt(best_sq)};
}

SpatialHash::Hit SpatialHash::nearest(const Vec3& q) const {
  if (order_.empty()) throw ShapeError("nearest neighbor query on an empty point set");
  const Key c = key_of(q);
  double best_sq = std::numeric_limits<double>::infinity();
  std::size_t best_index = std::numeric_limits<std::size_t>::max();
  std::vector<double> scratch;

  const auto full_scan = [&] {
    for (const auto& [key, range] : cells_) scan_cell(key, q, best_sq, best_index, scratch);
    return Hit{best_index, std::sqrt(best_sq)};
  };

  for (std::int64_t r = 0;; ++r) {
    const double side = static_cast<double>(2 * r + 1);
    if (side * side * side > 4.0 * static_cast<double>(cells_.size())) return full_scan();

    const bool covers = c.x - r <= lo_.x && c.y - r <= lo_.y && c.z - r <= lo_.z &&
                        c.x + r >= hi_.x && c.y + r >= hi_.y && c.z + r >= hi_.z;
    for (std::int64_t x = std::max(c.x - r, lo_.x); x <= std::min(c.x + r, hi_.x); ++x)
      for (std::int64_t y = std::max(c.y - r, lo_.y); y <= std::min(c.y + r, hi_.y); ++y)
        for (std::int64_t z = std::max(c.z - r, lo_.z); z <= std::min(c.z + r, hi_.z); ++z) {
          const std::int64_t cheb = std::max({std::abs(x - c.x), std::abs(y - c.y), std::abs(z - c.z)});
          if (cheb == r) scan_cell({x, y, z}, q, best_sq, best_index, scratch);
        }

    // Cells beyond ring r are at least r·cell away from q.
    if (covers || std::sqrt(best_sq) <= static_cast<double>(r) * cell_)
      return Hit{best_index, std::sqrt(best_sq)};
  }
}

}  // namespace geoctx::geom
