#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "geoctx/geometry.hpp"
#include "geoctx/rng.hpp"
#include "geoctx/trajectory.hpp"

namespace geoctx::seq {

// ---------------------------------------------------------------- grid walk

struct GridSpec {
  std::uint32_t rows = 1;  // H
  std::uint32_t cols = 1;  // W
  std::uint32_t loop = 0;  // l

  std::uint64_t loop_frames() const { return static_cast<std::uint64_t>(rows) * cols; }
  std::uint64_t encode(std::uint32_t r, std::uint32_t c) const { return loop * loop_frames() + r * cols + c; }
  struct Cell {
    std::uint32_t loop, row, col;
  };
  Cell decode(std::uint64_t index) const;
};

struct GridWalk {
  std::vector<std::uint64_t> indices;
  /// Steps whose move came from the fallback set (or, on a 1x1 grid, repeated
  /// the cell). fallback[t] refers to the move from indices[t] to indices[t+1].
  std::vector<bool> fallback;
  std::size_t fallback_count() const;
};

/// Throws ConfigError for an empty grid or T == 0.
GridWalk grid_walk(const GridSpec& spec, std::size_t length, std::uint64_t seed);
/// Same walk from a fixed start cell.
GridWalk grid_walk_from(const GridSpec& spec, std::size_t length, std::uint32_t row, std::uint32_t col, Rng& rng);

// -------------------------------------------------------------- street data

inline constexpr int kViewpoints = 5;  // 0..3 horizontal, 4 zenith

struct Street {
  std::size_t first_frame = 0;  // global index of (viewpoint 0, position 0)
  std::size_t positions = 0;    // N
  /// Viewpoint-major camera poses, pose(v, i) = poses[v * N + i].
  std::vector<geom::Pose> poses;

  const geom::Pose& pose(int viewpoint, std::size_t i) const { return poses[viewpoint * positions + i]; }
  geom::Vec3 position(std::size_t i) const { return poses[i].translation; }
  std::uint64_t frame(int viewpoint, std::size_t i) const { return first_frame + viewpoint * positions + i; }
};

/// Splits a viewpoint-first frame stream into streets by repeated-position
/// detection. Every later viewpoint segment must revisit the same positions.
/// Throws ShapeError on a malformed stream.
std::vector<Street> identify_streets(std::span<const geom::Pose> frames, double eps = 0.01);

struct StreetEdge {
  std::size_t a = 0, b = 0;
  Eigen::Vector2d point = Eigen::Vector2d::Zero();  // XY intersection
};

struct StreetNetwork {
  std::vector<Street> streets;
  std::vector<StreetEdge> edges;
  /// adjacency[s] = indices into `edges`, ordered by neighbor street id.
  std::vector<std::vector<std::size_t>> adjacency;

  std::size_t degree(std::size_t s) const { return adjacency[s].size(); }
  std::size_t other(std::size_t edge, std::size_t s) const { return edges[edge].a == s ? edges[edge].b : edges[edge].a; }
};

/// Tests every pair of endpoint-to-endpoint XY segments, each extended by
/// d_ext at both ends. Parallel segments never intersect.
StreetNetwork detect_intersections(std::vector<Street> streets, double d_ext);

struct StreetStep {
  std::size_t street = 0;
  std::size_t index = 0;
  int viewpoint = 0;
  std::uint64_t frame = 0;
};

struct StreetWalkOptions {
  double p_turn = 0.5;
  double d_prox = 5.0;
};

struct StreetWalkState {
  std::size_t street = 0;
  std::size_t index = 0;
  int viewpoint = 0;
  int direction = 1;
};

std::vector<StreetStep> street_walk(const StreetNetwork& net, std::size_t length, const StreetWalkOptions& options,
                                    std::uint64_t seed);
/// Walk from an explicit start state; `rng` drives turn decisions and
/// neighbor choices only.
std::vector<StreetStep> street_walk_from(const StreetNetwork& net, std::size_t length,
                                         const StreetWalkOptions& options, StreetWalkState start, Rng& rng);

/// Viewpoint of `street` at position `index` whose forward axis best matches
/// `forward`; ties go to the lowest id.
int best_viewpoint(const Street& street, std::size_t index, const geom::Vec3& forward);

// ---------------------------------------------------------------- foldback

struct FoldbackState {
  std::int64_t position = 0;
  std::int64_t stride = 1;
  int direction = 1;
};

/// Advances one emitted index. On a boundary crossing the direction flips and
/// a new stride in [a, b] is drawn, distinct from the previous one when that
/// still lands inside [0, N); failing that any fitting stride; failing that the
/// walker stops at the boundary.
void foldback_step(FoldbackState& state, std::int64_t frames, std::int64_t a, std::int64_t b, Rng& rng);

/// Throws ConfigError unless N >= 2 and 1 <= a <= b < N.
std::vector<std::int64_t> foldback_sample(std::int64_t frames, std::size_t count, std::int64_t a, std::int64_t b,
                                          std::uint64_t seed);
std::vector<std::int64_t> foldback_sample_from(std::int64_t frames, std::size_t count, std::int64_t a,
                                               std::int64_t b, FoldbackState start, Rng& rng);

// --------------------------------------------------------------- traversal

struct TraversalParams {
  double fps = 30.0;
  double alpha = 0.18;       // translation low-pass
  int lookahead = 10;        // frames
  double speed_min = 0.3;    // m/s, per-segment uniform draw
  double speed_max = 1.8;
  std::optional<double> speed;  // fixed speed overrides the draw
  double yaw_rate_max = 1.5;    // rad/s
  double yaw_gain = 3.0;        // 1/s, slope of the tanh at zero error
  double pitch_tau = 0.3;       // s, exponential decay time constant
  double jitter_pos = 0.0;      // m, IIR driving noise per frame
  double jitter_rot = 0.0;      // rad
  double jitter_pole = 0.9;
  double jitter_bound = 0.25;   // per-frame jitter step <= bound * speed / fps
  double glance_rate = 0.0;     // events per second
  double glance_duration = 1.0; // s
  double glance_yaw = 0.5;      // rad, max amplitude
  double glance_pitch = 0.2;
  double min_spacing = 2.0;     // m between consecutive waypoints
  double tail = 2.0;            // s simulated after the carrot reaches the end
  std::uint64_t seed = 0;

  void validate() const;
};

/// World is z-up; camera axes are x right, y down, z forward.
Trajectory traversal_trajectory(std::span<const geom::Vec3> waypoints, const TraversalParams& params);

/// Camera-to-world rotation for yaw (about world z, 0 = +x), pitch (up
/// positive) and roll about the optical axis.
geom::Mat3 camera_rotation(double yaw, double pitch, double roll = 0.0);

}  // namespace geoctx::seq
