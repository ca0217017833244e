#include "geoctx/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/SVD>

#include "geoctx/error.hpp"
#include "geoctx/spatial_hash.hpp"

namespace geoctx::geom {

Pose Pose::inverse() const {
  Pose out;
  out.rotation = rotation.transpose();
  out.translation = -(out.rotation * translation);
  return out;
}

Mat4 Pose::matrix() const {
  Mat4 m = Mat4::Identity();
  m.topLeftCorner<3, 3>() = rotation;
  m.topRightCorner<3, 1>() = translation;
  return m;
}

Pose compose(const Pose& a, const Pose& b) {
  Pose out;
  out.rotation = a.rotation * b.rotation;
  out.translation = a.rotation * b.translation + a.translation;
  return out;
}

Pose relative_pose(const Pose& p_i, const Pose& p_j) { return compose(p_i.inverse(), p_j); }

double geodesic_rotation_error(const Mat3& r_a, const Mat3& r_b) {
  // atan2 of the skew and trace parts; acos loses half the digits near 0.
  const Mat3 m = r_a.transpose() * r_b;
  const double s = 0.5 * Vec3(m(2, 1) - m(1, 2), m(0, 2) - m(2, 0), m(1, 0) - m(0, 1)).norm();
  const double c = 0.5 * (m.trace() - 1.0);
  return std::atan2(s, c);
}

Mat3 rotation_from_axis_angle(const Vec3& axis, double angle) {
  const double n = axis.norm();
  if (n == 0.0) return Mat3::Identity();
  return Eigen::AngleAxisd(angle, axis / n).toRotationMatrix();
}

Mat3 rotation_from_quaternion(double w, double x, double y, double z) {
  Eigen::Quaterniond q(w, x, y, z);
  q.normalize();
  return q.toRotationMatrix();
}

std::array<double, 4> quaternion_from_rotation(const Mat3& r) {
  Eigen::Quaterniond q(r);
  q.normalize();
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  return {q.w(), q.x(), q.y(), q.z()};
}

Pose Sim3::apply(const Pose& p) const {
  Pose out;
  out.rotation = rotation * p.rotation;
  out.translation = apply(p.translation);
  return out;
}

Sim3 Sim3::inverse() const {
  Sim3 out;
  out.scale = 1.0 / scale;
  out.rotation = rotation.transpose();
  out.translation = -(out.scale * (out.rotation * translation));
  return out;
}

Sim3 compose(const Sim3& a, const Sim3& b) {
  Sim3 out;
  out.scale = a.scale * b.scale;
  out.rotation = a.rotation * b.rotation;
  out.translation = a.scale * (a.rotation * b.translation) + a.translation;
  return out;
}

void Intrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw ConfigError("intrinsics: focal lengths must be positive");
  if (width == 0 || height == 0) throw ConfigError("intrinsics: raster size must be positive");
  if (!(cx >= 0.0 && cx < width) || !(cy >= 0.0 && cy < height))
    throw ConfigError("intrinsics: principal point outside the raster");
}

Intrinsics Intrinsics::downscaled(std::uint32_t patch) const {
  if (patch == 0) throw ConfigError("patch size must be positive");
  const double p = patch;
  const double half = (p - 1.0) / 2.0;
  Intrinsics out;
  out.fx = fx / p;
  out.fy = fy / p;
  out.cx = (cx - half) / p;
  out.cy = (cy - half) / p;
  out.width = width / patch;
  out.height = height / patch;
  return out;
}

Sim3 umeyama(std::span<const Vec3> src, std::span<const Vec3> dst, bool with_scale) {
  if (src.size() != dst.size())
    throw ShapeError("umeyama: point counts differ (" + std::to_string(src.size()) + " vs " +
                     std::to_string(dst.size()) + ")");
  const std::size_t n = src.size();
  if (n < 3) throw DegenerateError("umeyama: need at least 3 correspondences, got " + std::to_string(n));

  const double inv_n = 1.0 / static_cast<double>(n);
  Vec3 mu_src = Vec3::Zero();
  Vec3 mu_dst = Vec3::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    mu_src += src[i];
    mu_dst += dst[i];
  }
  mu_src *= inv_n;
  mu_dst *= inv_n;

  double var_src = 0.0;
  Mat3 sigma = Mat3::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 a = src[i] - mu_src;
    const Vec3 b = dst[i] - mu_dst;
    var_src += a.squaredNorm();
    sigma += b * a.transpose();
  }
  var_src *= inv_n;
  sigma *= inv_n;

  const Eigen::JacobiSVD<Mat3> svd(sigma, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec3 d = svd.singularValues();
  // Rotation is only determined when the cross-covariance has rank >= 2.
  if (!(var_src > 0.0) || !(d(0) > 0.0) || d(1) <= 1e-12 * d(0))
    throw DegenerateError("umeyama: degenerate (collinear or coincident) point configuration");

  Mat3 s = Mat3::Identity();
  if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0.0) s(2, 2) = -1.0;

  Sim3 out;
  out.rotation = svd.matrixU() * s * svd.matrixV().transpose();
  out.scale = with_scale ? (d.asDiagonal() * s).trace() / var_src : 1.0;
  out.translation = mu_dst - out.scale * (out.rotation * mu_src);
  return out;
}

namespace {

struct Correspondences {
  std::vector<Vec3> src;  // transformed source points
  std::vector<Vec3> dst;
  double rms = 0.0;
};

Correspondences match(const PointCloud& src, const PointCloud& dst, const SpatialHash& index,
                      const Sim3& t, double max_dist) {
  Correspondences c;
  double sq = 0.0;
  for (const Vec3& p : src.points) {
    const Vec3 moved = t.apply(p);
    if (auto hit = index.nearest_within(moved, max_dist)) {
      c.src.push_back(moved);
      c.dst.push_back(dst.points[hit->index]);
      sq += hit->distance * hit->distance;
    }
  }
  c.rms = c.src.empty() ? 0.0 : std::sqrt(sq / static_cast<double>(c.src.size()));
  return c;
}

}  // namespace

IcpResult icp_refine(const PointCloud& src, const PointCloud& dst, const Sim3& init,
                     const IcpOptions& options) {
  if (src.empty() || dst.empty()) throw ShapeError("icp: both clouds must be non-empty");
  if (!(options.max_corr_dist > 0.0)) throw ConfigError("icp: max_corr_dist must be positive");

  const SpatialHash index(dst.points, options.max_corr_dist);
  IcpResult result;
  result.transform = init;

  Correspondences current = match(src, dst, index, init, options.max_corr_dist);
  if (current.src.empty())
    throw NoOverlapError("icp: no correspondences within " + std::to_string(options.max_corr_dist) +
                         " m at the initial alignment");
  result.rms_history.push_back(current.rms);
  result.inliers = current.src.size();

  for (int iter = 0; iter < options.max_iters; ++iter) {
    if (current.src.size() < 3 || current.rms == 0.0) break;
    Sim3 step;
    try {
      step = umeyama(current.src, current.dst, false);
    } catch (const DegenerateError&) {
      break;
    }
    const Sim3 candidate = compose(step, result.transform);
    Correspondences next = match(src, dst, index, candidate, options.max_corr_dist);
    // Accept only non-increasing inlier RMS; a growing RMS means the inlier
    // set shifted under us and the previous estimate is the better one.
    if (next.src.empty() || next.rms > current.rms) break;

    const double improvement = current.rms - next.rms;
    result.transform = candidate;
    result.rms_history.push_back(next.rms);
    result.inliers = next.src.size();
    result.iterations = iter + 1;
    current = std::move(next);
    if (improvement < options.min_improvement) break;
  }
  return result;
}

PointCloud unproject(const DepthRaster& depth, const Intrinsics& k, const Pose& pose,
                     std::uint32_t stride) {
  if (depth.width != k.width || depth.height != k.height)
    throw ShapeError("unproject: depth raster " + std::to_string(depth.width) + "x" +
                     std::to_string(depth.height) + " does not match intrinsics " +
                     std::to_string(k.width) + "x" + std::to_string(k.height));
  if (stride == 0) stride = 1;
  PointCloud cloud;
  for (std::uint32_t v = 0; v < depth.height; v += stride) {
    for (std::uint32_t u = 0; u < depth.width; u += stride) {
      const double d = depth.at(u, v);
      if (!(d > 0.0) || !std::isfinite(d)) continue;
      const Vec3 p_cam(d * (u - k.cx) / k.fx, d * (v - k.cy) / k.fy, d);
      cloud.points.push_back(pose.apply(p_cam));
    }
  }
  return cloud;
}

bool project(const Vec3& p_cam, const Intrinsics& k, double& u, double& v) {
  if (!(p_cam.z() > 0.0)) return false;
  u = k.fx * p_cam.x() / p_cam.z() + k.cx;
  v = k.fy * p_cam.y() / p_cam.z() + k.cy;
  return true;
}

FlowResult mean_flow_magnitude(const DepthRaster& depth_key, const Pose& pose_key,
                               const Pose& pose_cur, const Intrinsics& k, std::uint32_t stride) {
  if (depth_key.width != k.width || depth_key.height != k.height)
    throw ShapeError("flow: keyframe depth does not match intrinsics");
  if (stride == 0) stride = 1;

  // Keyframe camera -> current camera.
  const Pose key_to_cur = compose(pose_cur.inverse(), pose_key);
  FlowResult out;
  double sum = 0.0;
  for (std::uint32_t v = 0; v < depth_key.height; v += stride) {
    for (std::uint32_t u = 0; u < depth_key.width; u += stride) {
      const double d = depth_key.at(u, v);
      if (!(d > 0.0) || !std::isfinite(d)) continue;
      const Vec3 p_key(d * (u - k.cx) / k.fx, d * (v - k.cy) / k.fy, d);
      double u2 = 0.0, v2 = 0.0;
      if (!project(key_to_cur.apply(p_key), k, u2, v2) || u2 < 0.0 || v2 < 0.0 || u2 >= k.width ||
          v2 >= k.height) {
        ++out.excluded;
        continue;
      }
      sum += std::hypot(u2 - u, v2 - v);
      ++out.valid;
    }
  }
  out.magnitude = out.valid == 0 ? std::numeric_limits<double>::infinity()
                                 : sum / static_cast<double>(out.valid);
  return out;
}

}  // namespace geoctx::geom
