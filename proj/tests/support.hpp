#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>

#include "geoctx/geometry.hpp"
#include "geoctx/rng.hpp"
#include "geoctx/trajectory.hpp"

namespace geoctx::testing {

inline geom::Vec3 random_vec(Rng& rng, double lo = -1.0, double hi = 1.0) {
  return {rng.uniform(lo, hi), rng.uniform(lo, hi), rng.uniform(lo, hi)};
}

inline geom::Mat3 random_rotation(Rng& rng) {
  // Uniform on SO(3) via a normalized 4D Gaussian quaternion.
  const double w = rng.normal(), x = rng.normal(), y = rng.normal(), z = rng.normal();
  return geom::rotation_from_quaternion(w, x, y, z);
}

inline geom::Pose random_pose(Rng& rng, double extent = 2.0) {
  geom::Pose p;
  p.rotation = random_rotation(rng);
  p.translation = random_vec(rng, -extent, extent);
  return p;
}

inline geom::Sim3 random_sim3(Rng& rng) {
  geom::Sim3 s;
  s.scale = rng.uniform(0.3, 3.0);
  s.rotation = random_rotation(rng);
  s.translation = random_vec(rng, -5.0, 5.0);
  return s;
}

/// Smooth non-degenerate camera path.
inline Trajectory wavy_trajectory(std::size_t frames, std::uint64_t seed) {
  Rng rng(seed);
  const double a = rng.uniform(0.5, 1.5), b = rng.uniform(0.5, 1.5), ph = rng.uniform(0.0, 6.0);
  Trajectory t;
  for (std::size_t i = 0; i < frames; ++i) {
    const double s = 0.05 * static_cast<double>(i);
    geom::Pose p;
    p.translation = geom::Vec3(a * std::cos(s + ph), b * std::sin(1.3 * s), 0.3 * std::sin(0.7 * s + ph));
    p.rotation = geom::rotation_from_axis_angle(geom::Vec3(0.2, 1.0, 0.1 * std::cos(s)), 0.4 * s);
    t.push_back(static_cast<std::int64_t>(i), p);
  }
  return t;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("geoctx_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace geoctx::testing
