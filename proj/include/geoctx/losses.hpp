#pragma once

#include <array>
#include <span>
#include <vector>

#include "geoctx/geometry.hpp"
#include "geoctx/raster.hpp"

namespace geoctx::loss {

struct LossWeights {
  double depth = 1.0;
  double abs_pose = 1.0;
  double rel_pose = 1.0;
  double trans = 1.0;    // λ_trans inside the relative pose term
  double alpha = 0.0;    // uncertainty regularizer
  double epsilon = 0.1;  // Huber threshold

  /// Throws ConfigError on negative weights or ε <= 0.
  void validate() const;
};

/// Mean point norm. Throws ShapeError when empty, DegenerateError when every
/// point sits at the origin.
double anchor_scale(const geom::PointCloud& points);

struct NormalizedTruth {
  std::vector<DepthRaster> depths;
  std::vector<geom::Pose> poses;  // translations divided, rotations untouched
};

NormalizedTruth normalize_ground_truth(std::span<const DepthRaster> depths, std::span<const geom::Pose> poses,
                                       double s);

enum class Reduction { mean, sum };

struct DepthLossTerms {
  double data = 0.0;      // ‖Σ ⊙ (D̂ − D)‖
  double gradient = 0.0;  // ‖Σ ⊙ (∇D̂ − ∇D)‖
  double log_sigma = 0.0; // mean (or sum) of log Σ; enters the total as −α·log_sigma
  double total = 0.0;
  std::size_t valid = 0;
  std::size_t gradient_terms = 0;
};

/// Pixels with gt == 0 are excluded from all three terms. ∇ is a forward
/// difference along x and y; a difference counts only when both pixels are
/// valid. Throws ShapeError on shape mismatch, ConfigError on sigma <= 0.
DepthLossTerms depth_loss_terms(const DepthRaster& pred, const DepthRaster& gt, const Raster& sigma, double alpha,
                                Reduction reduction = Reduction::mean);

inline double depth_loss(const DepthRaster& pred, const DepthRaster& gt, const Raster& sigma, double alpha,
                         Reduction reduction = Reduction::mean) {
  return depth_loss_terms(pred, gt, sigma, alpha, reduction).total;
}

/// 0.5 r² for |r| <= ε, otherwise ε (|r| − ε/2).
double huber(double r, double eps);

/// Pose as a 7-vector: quaternion (w, x, y, z) then translation.
using PoseVector = std::array<double, 7>;

PoseVector pose_vector(const geom::Pose& p);

/// Σ over frames of the per-element Huber of the 7-vector residual. The
/// predicted quaternion is negated first when it points away from the truth.
double abs_pose_loss(std::span<const PoseVector> pred, std::span<const PoseVector> gt, double eps);
double abs_pose_loss(std::span<const geom::Pose> pred, std::span<const geom::Pose> gt, double eps);

/// 1/(k(k−1)) Σ_{i≠j} [geodesic(R̂_ij, R_ij) + λ_trans ‖t̂_ij − t_ij‖₁]. Throws
/// ConfigError for k < 2 and ShapeError on length mismatch.
double rel_pose_loss(std::span<const geom::Pose> pred, std::span<const geom::Pose> gt, double lambda_trans);

struct LossParts {
  double depth = 0.0;
  double abs_pose = 0.0;
  double rel_pose = 0.0;
};

double composite_loss(const LossParts& parts, const LossWeights& weights);

}  // namespace geoctx::loss
