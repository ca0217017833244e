#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "geoctx/geometry.hpp"

namespace geoctx::geom {

/// Uniform grid over a fixed point set for nearest-neighbor queries. Points
/// are bucketed by floor(p / cell) and stored contiguously per cell in SoA
/// form so each cell is scanned with one distance kernel call.
class SpatialHash {
 public:
  struct Hit {
    std::size_t index = 0;  // into the point span given at construction
    double distance = 0.0;
  };

  SpatialHash(std::span<const Vec3> points, double cell_size);

  std::size_t size() const noexcept { return order_.size(); }
  double cell_size() const noexcept { return cell_; }

  /// Nearest point with distance <= radius. Ties go to the lower index.
  std::optional<Hit> nearest_within(const Vec3& q, double radius) const;

  /// Unbounded nearest neighbor (ring search). Requires a non-empty set.
  Hit nearest(const Vec3& q) const;

 private:
  struct Key {
    std::int64_t x, y, z;
    bool operator==(const Key&) const = default;
  };
  struct KeyHash {
    std::size_t operator()(const Key& k) const noexcept;
  };
  struct Range {
    std::uint32_t begin, end;
  };

  Key key_of(const Vec3& p) const;
  void scan_cell(const Key& key, const Vec3& q, double& best_sq, std::size_t& best_index,
                 std::vector<double>& scratch) const;

  double cell_;
  std::vector<std::size_t> order_;  // original index of each sorted slot
  std::vector<double> xs_, ys_, zs_;
  std::unordered_map<Key, Range, KeyHash> cells_;
  Key lo_{0, 0, 0}, hi_{0, 0, 0};
};

}  // namespace geoctx::geom
