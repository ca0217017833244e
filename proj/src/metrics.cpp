#include "geoctx/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <unordered_map>

#include "geoctx/error.hpp"
#include "geoctx/spatial_hash.hpp"

namespace geoctx::metrics {
namespace {

constexpr double kRadToDeg = 180.0 / std::numbers::pi;

void check_increasing(const Trajectory& t, const char* which) {
  if (t.ids.size() != t.poses.size()) throw ShapeError(std::string(which) + " trajectory: id/pose count mismatch");
  for (std::size_t i = 1; i < t.ids.size(); ++i)
    if (t.ids[i] <= t.ids[i - 1])
      throw ShapeError(std::string(which) + " trajectory: frame ids not strictly increasing at " +
                       std::to_string(t.ids[i]));
}

double angle_between_deg(const geom::Vec3& a, const geom::Vec3& b) {
  const double c = a.dot(b) / (a.norm() * b.norm());
  return std::acos(std::clamp(c, -1.0, 1.0)) * kRadToDeg;
}

}  // namespace

Matched match_frames(const Trajectory& pred, const Trajectory& gt) {
  check_increasing(pred, "predicted");
  check_increasing(gt, "ground-truth");
  Matched m;
  std::size_t i = 0, j = 0;
  while (i < pred.size() && j < gt.size()) {
    if (pred.ids[i] < gt.ids[j]) {
      ++i;
    } else if (gt.ids[j] < pred.ids[i]) {
      ++j;
    } else {
      m.ids.push_back(pred.ids[i]);
      m.pred.push_back(pred.poses[i++]);
      m.gt.push_back(gt.poses[j++]);
    }
  }
  return m;
}

AteResult ate(const Trajectory& pred, const Trajectory& gt) {
  const Matched m = match_frames(pred, gt);
  if (m.ids.size() < 3)
    throw DegenerateError("ate: " + std::to_string(m.ids.size()) + " common frames; need at least 3");
  std::vector<geom::Vec3> src, dst;
  for (std::size_t i = 0; i < m.ids.size(); ++i) {
    src.push_back(m.pred[i].center());
    dst.push_back(m.gt[i].center());
  }
  AteResult r;
  r.alignment = geom::umeyama(src, dst, true);
  r.frames = m.ids.size();
  double sq = 0.0;
  for (std::size_t i = 0; i < src.size(); ++i) sq += (r.alignment.apply(src[i]) - dst[i]).squaredNorm();
  r.rmse = std::sqrt(sq / static_cast<double>(src.size()));
  return r;
}

RpeResult rpe(const Trajectory& pred, const Trajectory& gt, std::size_t delta) {
  if (delta < 1) throw ConfigError("rpe: delta must be at least 1");
  const Matched m = match_frames(pred, gt);
  if (m.ids.size() <= delta)
    throw DegenerateError("rpe: " + std::to_string(m.ids.size()) + " common frames; need more than delta = " +
                          std::to_string(delta));
  RpeResult r;
  double st = 0.0, sr = 0.0;
  for (std::size_t i = 0; i + delta < m.ids.size(); ++i) {
    const geom::Pose rel_gt = geom::relative_pose(m.gt[i], m.gt[i + delta]);
    const geom::Pose rel_pred = geom::relative_pose(m.pred[i], m.pred[i + delta]);
    const geom::Pose e = geom::compose(rel_gt.inverse(), rel_pred);
    st += e.translation.squaredNorm();
    const double angle = geom::geodesic_rotation_error(geom::Mat3::Identity(), e.rotation) * kRadToDeg;
    sr += angle * angle;
    ++r.pairs;
  }
  r.trans_rmse = std::sqrt(st / static_cast<double>(r.pairs));
  r.rot_rmse_deg = std::sqrt(sr / static_cast<double>(r.pairs));
  return r;
}

std::vector<double> pair_errors_deg(const Trajectory& pred, const Trajectory& gt) {
  const Matched m = match_frames(pred, gt);
  std::vector<double> errors;
  const std::size_t n = m.ids.size();
  errors.reserve(n * (n > 0 ? n - 1 : 0) / 2);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const geom::Pose rp = geom::relative_pose(m.pred[i], m.pred[j]);
      const geom::Pose rg = geom::relative_pose(m.gt[i], m.gt[j]);
      double e = geom::geodesic_rotation_error(rp.rotation, rg.rotation) * kRadToDeg;
      if (rp.translation.norm() >= 1e-6 && rg.translation.norm() >= 1e-6)
        e = std::max(e, angle_between_deg(rp.translation, rg.translation));
      errors.push_back(e);
    }
  }
  return errors;
}

double auc_from_errors(std::span<const double> errors_deg, double tau_deg) {
  if (!(tau_deg > 0.0)) throw ConfigError("auc: threshold must be positive");
  if (errors_deg.empty()) throw DegenerateError("auc: no frame pairs");
  std::vector<double> sorted(errors_deg.begin(), errors_deg.end());
  std::sort(sorted.begin(), sorted.end());
  const auto steps = static_cast<std::size_t>(std::ceil(tau_deg / 0.1 - 1e-9));
  const double h = tau_deg / static_cast<double>(steps);
  double acc_sum = 0.0;
  for (std::size_t i = 1; i <= steps; ++i) {
    const double theta = h * static_cast<double>(i);
    const auto below = std::lower_bound(sorted.begin(), sorted.end(), theta) - sorted.begin();
    acc_sum += static_cast<double>(below) / static_cast<double>(sorted.size());
  }
  return 100.0 * acc_sum / static_cast<double>(steps);
}

double pairwise_auc(const Trajectory& pred, const Trajectory& gt, double tau_deg) {
  const std::vector<double> e = pair_errors_deg(pred, gt);
  if (e.empty()) throw DegenerateError("auc: fewer than 2 common frames");
  return auc_from_errors(e, tau_deg);
}

geom::PointCloud voxel_downsample(const geom::PointCloud& cloud, double voxel) {
  if (!(voxel > 0.0) || !std::isfinite(voxel)) throw ConfigError("voxel size must be positive");
  struct Key {
    std::int64_t x, y, z;
    bool operator==(const Key&) const = default;
  };
  struct KeyHash {
    std::size_t operator()(const Key& k) const noexcept {
      return static_cast<std::size_t>(static_cast<std::uint64_t>(k.x) * 73856093ULL ^
                                      static_cast<std::uint64_t>(k.y) * 19349663ULL ^
                                      static_cast<std::uint64_t>(k.z) * 83492791ULL);
    }
  };
  struct Acc {
    geom::Vec3 sum = geom::Vec3::Zero();
    std::size_t count = 0;
  };
  std::unordered_map<Key, Acc, KeyHash> cells;
  for (const geom::Vec3& p : cloud.points) {
    if (!p.allFinite()) throw ShapeError("voxel downsample: non-finite point");
    const Key k{static_cast<std::int64_t>(std::floor(p.x() / voxel)),
                static_cast<std::int64_t>(std::floor(p.y() / voxel)),
                static_cast<std::int64_t>(std::floor(p.z() / voxel))};
    Acc& a = cells[k];
    a.sum += p;
    ++a.count;
  }
  std::vector<std::pair<Key, Acc>> items(cells.begin(), cells.end());
  std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
    if (a.first.x != b.first.x) return a.first.x < b.first.x;
    if (a.first.y != b.first.y) return a.first.y < b.first.y;
    return a.first.z < b.first.z;
  });
  geom::PointCloud out;
  out.points.reserve(items.size());
  for (const auto& [k, a] : items) out.points.push_back(a.sum / static_cast<double>(a.count));
  return out;
}

void ReconConfig::validate() const {
  if (!(f1_threshold > 0.0)) throw ConfigError("recon: F1 threshold must be positive");
  if (!(icp_max_corr > 0.0)) throw ConfigError("recon: ICP correspondence distance must be positive");
  if (icp_max_iters < 0) throw ConfigError("recon: ICP iteration budget must be non-negative");
}

ReconScores recon_distances(const geom::PointCloud& pred, const geom::PointCloud& gt, double threshold) {
  if (pred.empty() || gt.empty()) throw ShapeError("recon: both clouds must be non-empty");
  const geom::SpatialHash gt_index(gt.points, threshold);
  const geom::SpatialHash pred_index(pred.points, threshold);
  ReconScores s;
  std::size_t hits_p = 0, hits_r = 0;
  for (const geom::Vec3& p : pred.points) {
    const double d = gt_index.nearest(p).distance;
    s.accuracy += d;
    if (d < threshold) ++hits_p;
  }
  for (const geom::Vec3& g : gt.points) {
    const double d = pred_index.nearest(g).distance;
    s.completeness += d;
    if (d < threshold) ++hits_r;
  }
  s.accuracy /= static_cast<double>(pred.size());
  s.completeness /= static_cast<double>(gt.size());
  const double p = static_cast<double>(hits_p) / static_cast<double>(pred.size());
  const double r = static_cast<double>(hits_r) / static_cast<double>(gt.size());
  s.precision = 100.0 * p;
  s.recall = 100.0 * r;
  s.f1 = p + r > 0.0 ? 100.0 * 2.0 * p * r / (p + r) : 0.0;
  return s;
}

geom::Sim3 centroid_seed(const geom::PointCloud& pred, const geom::PointCloud& gt) {
  if (pred.empty() || gt.empty()) throw ShapeError("recon: both clouds must be non-empty");
  const auto centroid = [](const geom::PointCloud& c) {
    geom::Vec3 m = geom::Vec3::Zero();
    for (const auto& p : c.points) m += p;
    return geom::Vec3(m / static_cast<double>(c.size()));
  };
  const auto spread = [](const geom::PointCloud& c, const geom::Vec3& m) {
    double s = 0.0;
    for (const auto& p : c.points) s += (p - m).norm();
    return s / static_cast<double>(c.size());
  };
  const geom::Vec3 mp = centroid(pred), mg = centroid(gt);
  const double sp = spread(pred, mp), sg = spread(gt, mg);
  geom::Sim3 t;
  t.scale = sp > 0.0 && sg > 0.0 ? sg / sp : 1.0;
  t.translation = mg - t.scale * mp;
  return t;
}

ReconResult recon_scores(const geom::PointCloud& pred, const geom::PointCloud& gt, const ReconConfig& cfg) {
  cfg.validate();
  if (pred.empty()) throw ShapeError("recon: predicted cloud is empty");
  if (gt.empty()) throw ShapeError("recon: ground-truth cloud is empty");
  const geom::PointCloud pd = cfg.voxel > 0.0 ? voxel_downsample(pred, cfg.voxel) : pred;
  const geom::PointCloud gd = cfg.voxel > 0.0 ? voxel_downsample(gt, cfg.voxel) : gt;

  ReconResult r;
  r.pred_points = pd.size();
  r.gt_points = gd.size();
  switch (cfg.seed) {
    case SeedMode::identity: r.seed = geom::Sim3::identity(); break;
    case SeedMode::centroid: r.seed = centroid_seed(pd, gd); break;
    case SeedMode::provided: r.seed = cfg.provided; break;
  }

  const auto transformed = [&](const geom::Sim3& t) {
    geom::PointCloud out;
    out.points.reserve(pd.size());
    for (const auto& p : pd.points) out.points.push_back(t.apply(p));
    return out;
  };
  r.pre_icp = recon_distances(transformed(r.seed), gd, cfg.f1_threshold);

  geom::IcpOptions opt;
  opt.max_corr_dist = cfg.icp_max_corr;
  opt.max_iters = cfg.icp_max_iters;
  const geom::IcpResult icp = geom::icp_refine(pd, gd, r.seed, opt);
  r.transform = icp.transform;
  r.icp_iterations = icp.iterations;
  r.post_icp = recon_distances(transformed(r.transform), gd, cfg.f1_threshold);
  return r;
}

}  // namespace geoctx::metrics
