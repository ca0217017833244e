#pragma once

#include <cstdint>
#include <vector>

#include "geoctx/geometry.hpp"

namespace geoctx {

/// Camera-to-world poses keyed by strictly increasing frame ids.
struct Trajectory {
  std::vector<std::int64_t> ids;
  std::vector<geom::Pose> poses;

  std::size_t size() const noexcept { return ids.size(); }
  bool empty() const noexcept { return ids.empty(); }
  void push_back(std::int64_t id, const geom::Pose& pose) {
    ids.push_back(id);
    poses.push_back(pose);
  }
  std::vector<geom::Vec3> centers() const {
    std::vector<geom::Vec3> out;
    out.reserve(poses.size());
    for (const auto& p : poses) out.push_back(p.center());
    return out;
  }
};

}  // namespace geoctx
