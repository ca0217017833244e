#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "geoctx/geometry.hpp"
#include "geoctx/raster.hpp"
#include "geoctx/trajectory.hpp"

namespace geoctx::io {

// ------------------------------------------------------------- depth rasters
//
// "DPF1", u32 width, u32 height, width*height f32 row-major, all little-endian.

std::vector<std::uint8_t> encode_raster(const Raster& raster);
/// Throws FormatError with the byte offset of the first bad field.
Raster decode_raster(const std::vector<std::uint8_t>& bytes, const std::string& source = "<memory>");

void write_raster(const std::filesystem::path& path, const Raster& raster);
Raster read_raster(const std::filesystem::path& path);

// --------------------------------------------------------------- trajectories
//
// One line per frame: `id tx ty tz qw qx qy qz`, camera-to-world, qw >= 0.

/// Formats with 17 significant digits; negative zero prints as 0.
std::string format_pose_line(std::int64_t id, const geom::Pose& pose);

void write_trajectory(std::ostream& out, const Trajectory& traj);
void write_trajectory(const std::filesystem::path& path, const Trajectory& traj);

/// Quaternions with norm in [0.99, 1.01] are renormalized; anything else is a
/// FormatError with the line number. Ids must strictly increase.
Trajectory parse_trajectory(std::istream& in, const std::string& source = "<stream>");
Trajectory read_trajectory(const std::filesystem::path& path);

// ----------------------------------------------------------------- point clouds
//
// One point per line: `x y z`. '#' comments and blank lines are skipped.

void write_cloud(const std::filesystem::path& path, const geom::PointCloud& cloud);
geom::PointCloud parse_cloud(std::istream& in, const std::string& source = "<stream>");
geom::PointCloud read_cloud(const std::filesystem::path& path);

// ---------------------------------------------------------------------- scenes

struct SceneFrame {
  std::int64_t id = 0;
  std::string image_ref;  // relative path or "synthetic:<seed>"
  std::string depth_ref;  // relative path, empty when absent
  geom::Pose pose;
  ImageRaster image;
  DepthRaster depth;
};

struct SceneSequence {
  geom::Intrinsics intrinsics;
  std::vector<SceneFrame> frames;

  Trajectory trajectory() const;
  std::vector<ImageRaster> images() const;
};

/// Writes `manifest.txt` plus per-frame rasters under `dir`. Frames without a
/// reference get `image/<id>.dpf` and `depth/<id>.dpf`.
void write_scene(const std::filesystem::path& dir, const SceneSequence& scene);

/// Reads a scene directory (or a manifest path) and loads every raster.
SceneSequence read_scene(const std::filesystem::path& dir_or_manifest);

/// Seeded uniform [0, 1) feature raster used for "synthetic:<seed>" images.
ImageRaster synthetic_image(std::uint32_t width, std::uint32_t height, std::uint64_t seed);

/// World-space points of every valid depth pixel, at ground-truth poses.
geom::PointCloud scene_cloud(const SceneSequence& scene, std::uint32_t stride = 1);

// ----------------------------------------------------------- synthetic rooms

/// Axis-aligned box room centered on the origin.
struct BoxRoom {
  geom::Vec3 dims = geom::Vec3::Constant(4.0);

  void validate() const;
  geom::Vec3 min() const { return -0.5 * dims; }
  geom::Vec3 max() const { return 0.5 * dims; }
  bool strictly_inside(const geom::Vec3& p) const;
};

/// Closed-form z-depth of the nearest face along each pixel ray, plus a
/// checkerboard shading image. Throws ConfigError if a camera is not strictly
/// inside the room.
SceneSequence synth_room_scene(const BoxRoom& room, const Trajectory& traj, const geom::Intrinsics& k);

/// Slow orbit around the room center looking outward with a small height
/// and heading wobble; the seed picks the starting phase.
Trajectory orbit_trajectory(const BoxRoom& room, std::size_t frames, std::uint64_t seed);

/// Independent per-frame noise: rotation by an axis-angle vector with
/// N(0, rot_sigma_deg) components (degrees), translation N(0, trans_sigma).
Trajectory perturb_trajectory(const Trajectory& traj, double rot_sigma_deg, double trans_sigma, std::uint64_t seed);

}  // namespace geoctx::io
