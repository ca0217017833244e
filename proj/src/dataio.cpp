#include "geoctx/dataio.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string_view>

#include "geoctx/error.hpp"
#include "geoctx/rng.hpp"

namespace geoctx::io {
namespace {

constexpr char kMagic[4] = {'D', 'P', 'F', '1'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

std::string_view strip_comment(std::string_view line) {
  const auto hash = line.find('#');
  return hash == std::string_view::npos ? line : line.substr(0, hash);
}

bool parse_double(std::string_view s, double& out) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  const auto r = std::from_chars(s.data(), s.data() + s.size(), out);
  return r.ec == std::errc() && r.ptr == s.data() + s.size() && std::isfinite(out);
}

bool parse_int(std::string_view s, std::int64_t& out) {
  const auto r = std::from_chars(s.data(), s.data() + s.size(), out);
  return r.ec == std::errc() && r.ptr == s.data() + s.size();
}

std::string fmt(double v) {
  if (v == 0.0) v = 0.0;  // drops the sign of -0
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::ifstream open_in(const std::filesystem::path& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(path, mode);
  if (!in) throw FormatError(path.string(), FormatError::Unit::byte, 0, "cannot open file");
  return in;
}

std::ofstream open_out(const std::filesystem::path& path, std::ios::openmode mode = std::ios::out) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, mode | std::ios::trunc);
  if (!out) throw ConfigError("cannot open " + path.string() + " for writing");
  return out;
}

}  // namespace

// ------------------------------------------------------------- rasters

std::vector<std::uint8_t> encode_raster(const Raster& raster) {
  if (raster.values.size() != static_cast<std::size_t>(raster.width) * raster.height)
    throw ShapeError("raster value count does not match its dimensions");
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  out.reserve(12 + 4 * raster.values.size());
  put_u32(out, raster.width);
  put_u32(out, raster.height);
  for (float v : raster.values) put_u32(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

Raster decode_raster(const std::vector<std::uint8_t>& bytes, const std::string& source) {
  using U = FormatError::Unit;
  if (bytes.size() < 4) throw FormatError(source, U::byte, bytes.size(), "truncated before the magic bytes");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError(source, U::byte, 0, "bad magic, expected DPF1");
  if (bytes.size() < 12) throw FormatError(source, U::byte, bytes.size(), "truncated header");
  Raster r;
  r.width = get_u32(bytes.data() + 4);
  r.height = get_u32(bytes.data() + 8);
  const std::uint64_t count = static_cast<std::uint64_t>(r.width) * r.height;
  const std::uint64_t expected = 12 + 4 * count;
  if (bytes.size() < expected)
    throw FormatError(source, U::byte, bytes.size(),
                      "truncated payload: " + std::to_string(r.width) + "x" + std::to_string(r.height) + " needs " +
                          std::to_string(expected) + " bytes");
  if (bytes.size() > expected) throw FormatError(source, U::byte, expected, "trailing bytes after the payload");
  r.values.resize(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    const float v = std::bit_cast<float>(get_u32(bytes.data() + 12 + 4 * i));
    if (!std::isfinite(v)) throw FormatError(source, U::byte, 12 + 4 * i, "non-finite value");
    r.values[i] = v;
  }
  return r;
}

void write_raster(const std::filesystem::path& path, const Raster& raster) {
  const auto bytes = encode_raster(raster);
  auto out = open_out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ConfigError("write failed: " + path.string());
}

Raster read_raster(const std::filesystem::path& path) {
  auto in = open_in(path, std::ios::binary);
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_raster(bytes, path.string());
}

// -------------------------------------------------------- trajectories

std::string format_pose_line(std::int64_t id, const geom::Pose& pose) {
  const auto q = geom::quaternion_from_rotation(pose.rotation);
  std::string s = std::to_string(id);
  for (double v : {pose.translation.x(), pose.translation.y(), pose.translation.z(), q[0], q[1], q[2], q[3]}) {
    s += ' ';
    s += fmt(v);
  }
  return s;
}

void write_trajectory(std::ostream& out, const Trajectory& traj) {
  for (std::size_t i = 0; i < traj.size(); ++i) out << format_pose_line(traj.ids[i], traj.poses[i]) << '\n';
}

void write_trajectory(const std::filesystem::path& path, const Trajectory& traj) {
  auto out = open_out(path);
  write_trajectory(out, traj);
  if (!out) throw ConfigError("write failed: " + path.string());
}

Trajectory parse_trajectory(std::istream& in, const std::string& source) {
  using U = FormatError::Unit;
  Trajectory t;
  std::string line;
  std::uint64_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto fields = split_ws(strip_comment(line));
    if (fields.empty()) continue;
    if (fields.size() != 8)
      throw FormatError(source, U::line, lineno, "expected 8 fields, got " + std::to_string(fields.size()));
    std::int64_t id = 0;
    if (!parse_int(fields[0], id)) throw FormatError(source, U::line, lineno, "bad frame id");
    double v[7];
    for (int i = 0; i < 7; ++i)
      if (!parse_double(fields[i + 1], v[i]))
        throw FormatError(source, U::line, lineno, "bad number '" + std::string(fields[i + 1]) + "'");
    const double norm = std::sqrt(v[3] * v[3] + v[4] * v[4] + v[5] * v[5] + v[6] * v[6]);
    if (norm < 0.99 || norm > 1.01)
      throw FormatError(source, U::line, lineno, "quaternion norm " + fmt(norm) + " outside [0.99, 1.01]");
    if (!t.empty() && id <= t.ids.back())
      throw FormatError(source, U::line, lineno, "frame id " + std::to_string(id) + " not strictly increasing");
    geom::Pose p;
    p.translation = geom::Vec3(v[0], v[1], v[2]);
    p.rotation = geom::rotation_from_quaternion(v[3], v[4], v[5], v[6]);
    t.push_back(id, p);
  }
  return t;
}

Trajectory read_trajectory(const std::filesystem::path& path) {
  auto in = open_in(path);
  return parse_trajectory(in, path.string());
}

// -------------------------------------------------------- point clouds

void write_cloud(const std::filesystem::path& path, const geom::PointCloud& cloud) {
  auto out = open_out(path);
  for (const auto& p : cloud.points) out << fmt(p.x()) << ' ' << fmt(p.y()) << ' ' << fmt(p.z()) << '\n';
  if (!out) throw ConfigError("write failed: " + path.string());
}

geom::PointCloud parse_cloud(std::istream& in, const std::string& source) {
  using U = FormatError::Unit;
  geom::PointCloud c;
  std::string line;
  std::uint64_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto f = split_ws(strip_comment(line));
    if (f.empty()) continue;
    if (f.size() != 3) throw FormatError(source, U::line, lineno, "expected 3 fields, got " + std::to_string(f.size()));
    double x, y, z;
    if (!parse_double(f[0], x) || !parse_double(f[1], y) || !parse_double(f[2], z))
      throw FormatError(source, U::line, lineno, "bad coordinate");
    c.points.emplace_back(x, y, z);
  }
  return c;
}

geom::PointCloud read_cloud(const std::filesystem::path& path) {
  auto in = open_in(path);
  return parse_cloud(in, path.string());
}

// -------------------------------------------------------------- scenes

Trajectory SceneSequence::trajectory() const {
  Trajectory t;
  for (const auto& f : frames) t.push_back(f.id, f.pose);
  return t;
}

std::vector<ImageRaster> SceneSequence::images() const {
  std::vector<ImageRaster> out;
  out.reserve(frames.size());
  for (const auto& f : frames) out.push_back(f.image);
  return out;
}

ImageRaster synthetic_image(std::uint32_t width, std::uint32_t height, std::uint64_t seed) {
  Rng rng(seed);
  ImageRaster r(width, height);
  for (float& v : r.values) v = static_cast<float>(rng.uniform());
  return r;
}

geom::PointCloud scene_cloud(const SceneSequence& scene, std::uint32_t stride) {
  geom::PointCloud out;
  for (const auto& f : scene.frames) {
    if (f.depth.empty()) continue;
    auto pts = geom::unproject(f.depth, scene.intrinsics, f.pose, stride);
    out.points.insert(out.points.end(), pts.points.begin(), pts.points.end());
  }
  return out;
}

namespace {

constexpr std::string_view kSyntheticTag = "synthetic:";

std::string frame_name(std::int64_t id) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06lld.dpf", static_cast<long long>(id));
  return buf;
}

}  // namespace

// manifest.txt
//   geoctx-scene 1
//   units=meters
//   width=W  height=H  fx=..  fy=..  cx=..  cy=..   (one key=value per line)
//   ---
//   id image depth tx ty tz qw qx qy qz              (one frame per line)
void write_scene(const std::filesystem::path& dir, const SceneSequence& scene) {
  scene.intrinsics.validate();
  std::filesystem::create_directories(dir);
  auto out = open_out(dir / "manifest.txt");
  const auto& k = scene.intrinsics;
  out << "geoctx-scene 1\nunits=meters\n";
  out << "width=" << k.width << "\nheight=" << k.height << "\nfx=" << fmt(k.fx) << "\nfy=" << fmt(k.fy)
      << "\ncx=" << fmt(k.cx) << "\ncy=" << fmt(k.cy) << "\nframes=" << scene.frames.size() << "\n---\n";
  std::int64_t prev = 0;
  for (std::size_t i = 0; i < scene.frames.size(); ++i) {
    const SceneFrame& f = scene.frames[i];
    if (i > 0 && f.id <= prev) throw ShapeError("scene frame ids must strictly increase");
    prev = f.id;
    std::string image = f.image_ref, depth = f.depth_ref;
    if (image.empty()) {
      image = "image/" + frame_name(f.id);
      write_raster(dir / image, f.image);
    } else if (image.rfind(kSyntheticTag, 0) != 0) {
      write_raster(dir / image, f.image);
    }
    if (depth.empty() && !f.depth.empty()) depth = "depth/" + frame_name(f.id);
    if (!depth.empty()) write_raster(dir / depth, f.depth);
    const std::string pose = format_pose_line(f.id, f.pose);
    out << f.id << ' ' << image << ' ' << (depth.empty() ? "-" : depth) << pose.substr(pose.find(' ')) << '\n';
  }
  if (!out) throw ConfigError("write failed: " + (dir / "manifest.txt").string());
}

SceneSequence read_scene(const std::filesystem::path& dir_or_manifest) {
  using U = FormatError::Unit;
  const bool is_dir = std::filesystem::is_directory(dir_or_manifest);
  const auto manifest = is_dir ? dir_or_manifest / "manifest.txt" : dir_or_manifest;
  const auto dir = manifest.parent_path();
  const std::string src = manifest.string();
  auto in = open_in(manifest);

  std::string line;
  std::uint64_t lineno = 0;
  if (!std::getline(in, line) || split_ws(line) != std::vector<std::string_view>{"geoctx-scene", "1"})
    throw FormatError(src, U::line, 1, "expected header 'geoctx-scene 1'");
  ++lineno;

  SceneSequence scene;
  auto& k = scene.intrinsics;
  bool seen_w = false, seen_h = false, seen_fx = false, seen_fy = false, seen_cx = false, seen_cy = false;
  std::int64_t declared = -1;
  bool separator = false;
  while (std::getline(in, line)) {
    ++lineno;
    const auto body = split_ws(strip_comment(line));
    if (body.empty()) continue;
    if (body.size() == 1 && body[0] == "---") {
      separator = true;
      break;
    }
    if (body.size() != 1) throw FormatError(src, U::line, lineno, "expected key=value");
    const std::string_view kv = body[0];
    const auto eq = kv.find('=');
    if (eq == std::string_view::npos) throw FormatError(src, U::line, lineno, "expected key=value");
    const std::string_view key = kv.substr(0, eq), val = kv.substr(eq + 1);
    double d = 0.0;
    std::int64_t n = 0;
    const auto need_num = [&] {
      if (!parse_double(val, d)) throw FormatError(src, U::line, lineno, "bad value for " + std::string(key));
    };
    const auto need_uint = [&] {
      if (!parse_int(val, n) || n <= 0 || n > 0xFFFFFFFFLL)
        throw FormatError(src, U::line, lineno, "bad value for " + std::string(key));
    };
    if (key == "units") {
      if (val != "meters") throw FormatError(src, U::line, lineno, "units must be meters");
    } else if (key == "width") {
      need_uint(), k.width = static_cast<std::uint32_t>(n), seen_w = true;
    } else if (key == "height") {
      need_uint(), k.height = static_cast<std::uint32_t>(n), seen_h = true;
    } else if (key == "fx") {
      need_num(), k.fx = d, seen_fx = true;
    } else if (key == "fy") {
      need_num(), k.fy = d, seen_fy = true;
    } else if (key == "cx") {
      need_num(), k.cx = d, seen_cx = true;
    } else if (key == "cy") {
      need_num(), k.cy = d, seen_cy = true;
    } else if (key == "frames") {
      if (!parse_int(val, declared) || declared < 0) throw FormatError(src, U::line, lineno, "bad frame count");
    } else {
      throw FormatError(src, U::line, lineno, "unknown key '" + std::string(key) + "'");
    }
  }
  if (!separator) throw FormatError(src, U::line, lineno, "missing '---' separator");
  if (!(seen_w && seen_h && seen_fx && seen_fy && seen_cx && seen_cy))
    throw FormatError(src, U::line, lineno, "header must define width, height, fx, fy, cx, cy");
  try {
    k.validate();
  } catch (const ConfigError& e) {
    throw FormatError(src, U::line, lineno, e.what());
  }

  while (std::getline(in, line)) {
    ++lineno;
    const auto f = split_ws(strip_comment(line));
    if (f.empty()) continue;
    if (f.size() != 10)
      throw FormatError(src, U::line, lineno, "frame record needs 10 fields, got " + std::to_string(f.size()));
    SceneFrame fr;
    if (!parse_int(f[0], fr.id)) throw FormatError(src, U::line, lineno, "bad frame id");
    if (!scene.frames.empty() && fr.id <= scene.frames.back().id)
      throw FormatError(src, U::line, lineno, "frame id " + std::to_string(fr.id) + " not strictly increasing");
    fr.image_ref = std::string(f[1]);
    fr.depth_ref = f[2] == "-" ? std::string() : std::string(f[2]);
    std::string pose_line = std::to_string(fr.id);
    for (std::size_t i = 3; i < 10; ++i) pose_line += " " + std::string(f[i]);
    std::istringstream ps(pose_line);
    try {
      fr.pose = parse_trajectory(ps, src).poses.at(0);
    } catch (const FormatError& e) {
      throw FormatError(src, U::line, lineno, "bad pose");
    }

    if (fr.image_ref.rfind(kSyntheticTag, 0) == 0) {
      std::int64_t seed = 0;
      if (!parse_int(std::string_view(fr.image_ref).substr(kSyntheticTag.size()), seed) || seed < 0)
        throw FormatError(src, U::line, lineno, "bad synthetic image tag");
      fr.image = synthetic_image(k.width, k.height, static_cast<std::uint64_t>(seed));
    } else {
      fr.image = read_raster(dir / fr.image_ref);
    }
    if (fr.image.width != k.width || fr.image.height != k.height)
      throw FormatError(src, U::line, lineno, "image size differs from the intrinsics");
    if (!fr.depth_ref.empty()) {
      fr.depth = read_raster(dir / fr.depth_ref);
      if (fr.depth.width != k.width || fr.depth.height != k.height)
        throw FormatError(src, U::line, lineno, "depth size differs from the intrinsics");
      for (float v : fr.depth.values)
        if (v < 0.0f) throw FormatError(src, U::line, lineno, "negative depth in " + fr.depth_ref);
    }
    scene.frames.push_back(std::move(fr));
  }
  if (declared >= 0 && static_cast<std::size_t>(declared) != scene.frames.size())
    throw FormatError(src, U::line, lineno,
                      "header declares " + std::to_string(declared) + " frames, found " +
                          std::to_string(scene.frames.size()));
  return scene;
}

}  // namespace geoctx::io
