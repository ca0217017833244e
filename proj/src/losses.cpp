#include "geoctx/losses.hpp"

#include <cmath>
#include <string>

#include "geoctx/error.hpp"

namespace geoctx::loss {

void LossWeights::validate() const {
  if (depth < 0.0 || abs_pose < 0.0 || rel_pose < 0.0 || trans < 0.0 || alpha < 0.0)
    throw ConfigError("loss weights must be non-negative");
  if (!(epsilon > 0.0)) throw ConfigError("Huber threshold epsilon must be positive");
}

double anchor_scale(const geom::PointCloud& points) {
  if (points.empty()) throw ShapeError("anchor scale of an empty point set");
  double sum = 0.0;
  for (const geom::Vec3& p : points.points) sum += p.norm();
  const double s = sum / static_cast<double>(points.size());
  if (!(s > 0.0)) throw DegenerateError("anchor scale is zero: every point is at the origin");
  return s;
}

NormalizedTruth normalize_ground_truth(std::span<const DepthRaster> depths, std::span<const geom::Pose> poses,
                                       double s) {
  if (!(s > 0.0) || !std::isfinite(s)) throw ConfigError("normalization scale must be positive and finite");
  NormalizedTruth out;
  for (const DepthRaster& d : depths) {
    DepthRaster n = d;
    for (float& v : n.values) v = static_cast<float>(static_cast<double>(v) / s);
    out.depths.push_back(std::move(n));
  }
  for (const geom::Pose& p : poses) {
    geom::Pose n = p;
    n.translation /= s;
    out.poses.push_back(n);
  }
  return out;
}

DepthLossTerms depth_loss_terms(const DepthRaster& pred, const DepthRaster& gt, const Raster& sigma, double alpha,
                                Reduction reduction) {
  if (!pred.same_shape(gt) || !pred.same_shape(sigma))
    throw ShapeError("depth loss: prediction, truth and uncertainty rasters must share a shape");
  const std::uint32_t w = gt.width, h = gt.height;
  const auto valid = [&](std::uint32_t u, std::uint32_t v) { return gt.at(u, v) > 0.0f; };

  DepthLossTerms t;
  double grad = 0.0;
  for (std::uint32_t v = 0; v < h; ++v) {
    for (std::uint32_t u = 0; u < w; ++u) {
      if (!valid(u, v)) continue;
      const double s = sigma.at(u, v);
      if (!(s > 0.0)) throw ConfigError("depth loss: uncertainty must be positive at valid pixels");
      ++t.valid;
      t.data += std::abs(s * (static_cast<double>(pred.at(u, v)) - gt.at(u, v)));
      t.log_sigma += std::log(s);
      if (u + 1 < w && valid(u + 1, v)) {
        const double dp = static_cast<double>(pred.at(u + 1, v)) - pred.at(u, v);
        const double dg = static_cast<double>(gt.at(u + 1, v)) - gt.at(u, v);
        grad += std::abs(s * (dp - dg));
        ++t.gradient_terms;
      }
      if (v + 1 < h && valid(u, v + 1)) {
        const double dp = static_cast<double>(pred.at(u, v + 1)) - pred.at(u, v);
        const double dg = static_cast<double>(gt.at(u, v + 1)) - gt.at(u, v);
        grad += std::abs(s * (dp - dg));
        ++t.gradient_terms;
      }
    }
  }
  t.gradient = grad;
  if (reduction == Reduction::mean) {
    if (t.valid) {
      t.data /= static_cast<double>(t.valid);
      t.log_sigma /= static_cast<double>(t.valid);
    }
    if (t.gradient_terms) t.gradient /= static_cast<double>(t.gradient_terms);
  }
  t.total = t.data + t.gradient - alpha * t.log_sigma;
  return t;
}

double huber(double r, double eps) {
  const double a = std::abs(r);
  return a <= eps ? 0.5 * r * r : eps * (a - 0.5 * eps);
}

PoseVector pose_vector(const geom::Pose& p) {
  const auto q = geom::quaternion_from_rotation(p.rotation);
  return {q[0], q[1], q[2], q[3], p.translation.x(), p.translation.y(), p.translation.z()};
}

double abs_pose_loss(std::span<const PoseVector> pred, std::span<const PoseVector> gt, double eps) {
  if (pred.size() != gt.size())
    throw ShapeError("abs pose loss: " + std::to_string(pred.size()) + " predictions vs " +
                     std::to_string(gt.size()) + " ground-truth poses");
  if (!(eps > 0.0)) throw ConfigError("Huber threshold epsilon must be positive");
  double total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const PoseVector& p = pred[i];
    const PoseVector& g = gt[i];
    const double dot = p[0] * g[0] + p[1] * g[1] + p[2] * g[2] + p[3] * g[3];
    const double sign = dot < 0.0 ? -1.0 : 1.0;
    for (int e = 0; e < 7; ++e) total += huber((e < 4 ? sign * p[e] : p[e]) - g[e], eps);
  }
  return total;
}

double abs_pose_loss(std::span<const geom::Pose> pred, std::span<const geom::Pose> gt, double eps) {
  std::vector<PoseVector> a, b;
  for (const auto& p : pred) a.push_back(pose_vector(p));
  for (const auto& p : gt) b.push_back(pose_vector(p));
  return abs_pose_loss(std::span<const PoseVector>(a), std::span<const PoseVector>(b), eps);
}

double rel_pose_loss(std::span<const geom::Pose> pred, std::span<const geom::Pose> gt, double lambda_trans) {
  if (pred.size() != gt.size())
    throw ShapeError("rel pose loss: " + std::to_string(pred.size()) + " predictions vs " +
                     std::to_string(gt.size()) + " ground-truth poses");
  const std::size_t k = pred.size();
  if (k < 2) throw ConfigError("rel pose loss needs at least 2 frames");
  double total = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      if (i == j) continue;
      const geom::Pose rp = geom::relative_pose(pred[i], pred[j]);
      const geom::Pose rg = geom::relative_pose(gt[i], gt[j]);
      total += geom::geodesic_rotation_error(rp.rotation, rg.rotation) +
               lambda_trans * (rp.translation - rg.translation).lpNorm<1>();
    }
  }
  return total / static_cast<double>(k * (k - 1));
}

double composite_loss(const LossParts& parts, const LossWeights& weights) {
  weights.validate();
  return weights.depth * parts.depth + weights.abs_pose * parts.abs_pose + weights.rel_pose * parts.rel_pose;
}

}  // namespace geoctx::loss
