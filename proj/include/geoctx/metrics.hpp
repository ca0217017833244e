#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "geoctx/geometry.hpp"
#include "geoctx/trajectory.hpp"

namespace geoctx::metrics {

/// Frames present in both trajectories, in id order.
struct Matched {
  std::vector<std::int64_t> ids;
  std::vector<geom::Pose> pred;
  std::vector<geom::Pose> gt;
};

/// Throws ShapeError when either input has non-increasing ids.
Matched match_frames(const Trajectory& pred, const Trajectory& gt);

struct AteResult {
  double rmse = 0.0;
  geom::Sim3 alignment;  // maps prediction into ground truth
  std::size_t frames = 0;
};

/// Sim(3) Umeyama on camera centers, then RMSE of center residuals. Throws
/// DegenerateError with fewer than 3 common frames or collinear centers.
AteResult ate(const Trajectory& pred, const Trajectory& gt);

struct RpeResult {
  double trans_rmse = 0.0;    // meters
  double rot_rmse_deg = 0.0;  // degrees
  std::size_t pairs = 0;
};

/// E = inverse(rel_gt(i, i+δ)) ∘ rel_pred(i, i+δ) over consecutive common
/// frames. Throws ConfigError for δ < 1, DegenerateError without any pair.
RpeResult rpe(const Trajectory& pred, const Trajectory& gt, std::size_t delta = 1);

/// Per unordered pair of common frames: max(relative rotation error,
/// relative translation direction error) in degrees. Pairs whose relative
/// translation is shorter than 1e-6 in either trajectory use rotation alone.
std::vector<double> pair_errors_deg(const Trajectory& pred, const Trajectory& gt);

/// (1/τ)∫₀^τ acc(θ)dθ × 100 with acc(θ) = fraction of errors strictly below θ,
/// integrated as a right-endpoint sum on a grid of at most 0.1°.
double auc_from_errors(std::span<const double> errors_deg, double tau_deg);

/// Throws DegenerateError with fewer than 2 common frames.
double pairwise_auc(const Trajectory& pred, const Trajectory& gt, double tau_deg);

/// One centroid per occupied voxel, ordered by ascending (ix, iy, iz).
geom::PointCloud voxel_downsample(const geom::PointCloud& cloud, double voxel);

enum class SeedMode { identity, centroid, provided };

struct ReconConfig {
  double f1_threshold = 0.05;
  double voxel = 4.0 / 512.0;  // <= 0 disables downsampling
  double icp_max_corr = 0.1;
  int icp_max_iters = 50;
  SeedMode seed = SeedMode::identity;
  geom::Sim3 provided;  // used with SeedMode::provided

  void validate() const;
};

struct ReconScores {
  double accuracy = 0.0;      // mean pred -> gt distance, meters
  double completeness = 0.0;  // mean gt -> pred distance, meters
  double precision = 0.0;     // percent of pred within d
  double recall = 0.0;        // percent of gt within d
  double f1 = 0.0;            // percent
};

struct ReconResult {
  ReconScores pre_icp;
  ReconScores post_icp;
  geom::Sim3 seed;
  geom::Sim3 transform;
  int icp_iterations = 0;
  std::size_t pred_points = 0;  // after downsampling
  std::size_t gt_points = 0;
};

/// Scores of already aligned clouds.
ReconScores recon_distances(const geom::PointCloud& pred, const geom::PointCloud& gt, double threshold);

/// Downsample both, seed the alignment, refine with ICP, score before and
/// after refinement. Throws ShapeError on an empty cloud.
ReconResult recon_scores(const geom::PointCloud& pred, const geom::PointCloud& gt, const ReconConfig& cfg);

/// Centroid and mean-norm scale seed mapping `pred` onto `gt`.
geom::Sim3 centroid_seed(const geom::PointCloud& pred, const geom::PointCloud& gt);

}  // namespace geoctx::metrics
