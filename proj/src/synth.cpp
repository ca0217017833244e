#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "geoctx/dataio.hpp"
#include "geoctx/error.hpp"
#include "geoctx/rng.hpp"

namespace geoctx::io {

void BoxRoom::validate() const {
  if (!(dims.x() > 0.0 && dims.y() > 0.0 && dims.z() > 0.0) || !dims.allFinite())
    throw ConfigError("room dimensions must be positive");
}

bool BoxRoom::strictly_inside(const geom::Vec3& p) const {
  return (p.array() > min().array()).all() && (p.array() < max().array()).all();
}

SceneSequence synth_room_scene(const BoxRoom& room, const Trajectory& traj, const geom::Intrinsics& k) {
  room.validate();
  k.validate();
  if (traj.ids.size() != traj.poses.size()) throw ShapeError("trajectory id/pose count mismatch");
  const geom::Vec3 lo = room.min(), hi = room.max();
  SceneSequence scene;
  scene.intrinsics = k;
  scene.frames.reserve(traj.size());
  for (std::size_t f = 0; f < traj.size(); ++f) {
    const geom::Pose& pose = traj.poses[f];
    const geom::Vec3 c = pose.translation;
    if (!room.strictly_inside(c))
      throw ConfigError("camera of frame " + std::to_string(traj.ids[f]) + " is not strictly inside the room");
    SceneFrame fr;
    fr.id = traj.ids[f];
    fr.pose = pose;
    fr.depth = DepthRaster(k.width, k.height);
    fr.image = ImageRaster(k.width, k.height);
    for (std::uint32_t v = 0; v < k.height; ++v) {
      for (std::uint32_t u = 0; u < k.width; ++u) {
        // Camera-frame ray with unit z, so the hit parameter is the z-depth.
        const geom::Vec3 ray_cam((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0);
        const geom::Vec3 d = pose.rotation * ray_cam;
        double t = std::numeric_limits<double>::infinity();
        int axis = 0;
        for (int a = 0; a < 3; ++a) {
          if (d[a] == 0.0) continue;
          const double ta = ((d[a] > 0.0 ? hi[a] : lo[a]) - c[a]) / d[a];
          if (ta < t) {
            t = ta;
            axis = a;
          }
        }
        fr.depth.at(u, v) = static_cast<float>(t);
        const geom::Vec3 p = c + t * d;
        const int a1 = (axis + 1) % 3, a2 = (axis + 2) % 3;
        const auto cell = static_cast<long long>(std::floor(p[a1] / 0.5) + std::floor(p[a2] / 0.5));
        const int face = 2 * axis + (d[axis] > 0.0 ? 1 : 0);
        fr.image.at(u, v) = static_cast<float>(0.15 + 0.08 * face + (cell % 2 != 0 ? 0.3 : 0.0));
      }
    }
    scene.frames.push_back(std::move(fr));
  }
  return scene;
}

Trajectory orbit_trajectory(const BoxRoom& room, std::size_t frames, std::uint64_t seed) {
  room.validate();
  Rng rng(seed);
  const double radius = 0.2 * std::min(room.dims.x(), room.dims.y());
  const double phase = 2.0 * std::numbers::pi * rng.uniform();
  const double bob = 0.05 * room.dims.z();
  Trajectory t;
  for (std::size_t i = 0; i < frames; ++i) {
    // One revolution per 600 frames keeps consecutive views heavily overlapping.
    const double a = phase + 2.0 * std::numbers::pi * static_cast<double>(i) / 600.0;
    geom::Pose p;
    p.translation = geom::Vec3(radius * std::cos(a), radius * std::sin(a), bob * std::sin(3.0 * a));
    const double yaw = a + 0.1 * std::sin(5.0 * a);
    const double cy = std::cos(yaw), sy = std::sin(yaw);
    // Horizontal forward (outward), z-up world, camera y down.
    const geom::Vec3 fwd(cy, sy, 0.0), right(sy, -cy, 0.0);
    p.rotation.col(0) = right;
    p.rotation.col(1) = fwd.cross(right);
    p.rotation.col(2) = fwd;
    t.push_back(static_cast<std::int64_t>(i), p);
  }
  return t;
}

Trajectory perturb_trajectory(const Trajectory& traj, double rot_sigma_deg, double trans_sigma, std::uint64_t seed) {
  if (rot_sigma_deg < 0.0 || trans_sigma < 0.0) throw ConfigError("noise sigmas must be non-negative");
  Rng rng(seed);
  Trajectory out = traj;
  const double rot_sigma = rot_sigma_deg * std::numbers::pi / 180.0;
  for (geom::Pose& p : out.poses) {
    const geom::Vec3 w(rng.normal(), rng.normal(), rng.normal());
    const geom::Vec3 dt(rng.normal(), rng.normal(), rng.normal());
    if (rot_sigma > 0.0) {
      const geom::Vec3 aa = rot_sigma * w;
      p.rotation = geom::rotation_from_axis_angle(aa, aa.norm()) * p.rotation;
    }
    if (trans_sigma > 0.0) p.translation += trans_sigma * dt;
  }
  return out;
}

}  // namespace geoctx::io
