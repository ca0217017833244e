#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "geoctx/raster.hpp"

namespace geoctx::geom {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

/// Rigid camera-to-world transform: x_world = rotation * x_cam + translation.
struct Pose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static Pose identity() { return {}; }

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  Vec3 center() const { return translation; }
  Pose inverse() const;
  Mat4 matrix() const;
};

/// Applies `b` first, then `a`.
Pose compose(const Pose& a, const Pose& b);
inline Pose operator*(const Pose& a, const Pose& b) { return compose(a, b); }

/// inverse(p_i) ∘ p_j: pose of frame j expressed in frame i.
Pose relative_pose(const Pose& p_i, const Pose& p_j);

/// Angle of r_aᵀ·r_b in radians, in [0, π].
double geodesic_rotation_error(const Mat3& r_a, const Mat3& r_b);

Mat3 rotation_from_axis_angle(const Vec3& axis, double angle);

/// Normalizes (w, x, y, z) before conversion.
Mat3 rotation_from_quaternion(double w, double x, double y, double z);

/// Unit quaternion (w, x, y, z) with w >= 0.
std::array<double, 4> quaternion_from_rotation(const Mat3& r);

/// Similarity transform: x -> scale * rotation * x + translation.
struct Sim3 {
  double scale = 1.0;
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static Sim3 identity() { return {}; }

  Vec3 apply(const Vec3& p) const { return scale * (rotation * p) + translation; }
  /// Maps a camera-to-world pose into the target frame. The camera center is
  /// transformed as a point; the orientation only picks up the rotation.
  Pose apply(const Pose& p) const;
  Sim3 inverse() const;
};

/// Applies `b` first, then `a`.
Sim3 compose(const Sim3& a, const Sim3& b);

/// Pinhole camera. Pixel (u, v) is the center of column u, row v.
struct Intrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  std::uint32_t width = 1;
  std::uint32_t height = 1;

  /// Throws ConfigError if the invariants (positive focal lengths, principal
  /// point inside the raster) do not hold.
  void validate() const;

  /// Intrinsics of the grid obtained by averaging `patch` x `patch` pixel
  /// blocks. Grid cell (i, j) is centered on the center of its pixel block.
  Intrinsics downscaled(std::uint32_t patch) const;
};

struct PointCloud {
  std::vector<Vec3> points;

  std::size_t size() const noexcept { return points.size(); }
  bool empty() const noexcept { return points.empty(); }
};

/// Least-squares (s, R, t) minimizing Σ‖dst_i − (s·R·src_i + t)‖².
/// Throws DegenerateError on fewer than 3 points or a rank-deficient
/// cross-covariance; ShapeError if the counts differ.
Sim3 umeyama(std::span<const Vec3> src, std::span<const Vec3> dst, bool with_scale);

struct IcpOptions {
  double max_corr_dist = 0.1;
  int max_iters = 50;
  double min_improvement = 1e-8;
};

struct IcpResult {
  Sim3 transform;
  /// Inlier RMS before the first iteration and after every accepted one.
  std::vector<double> rms_history;
  int iterations = 0;
  std::size_t inliers = 0;
};

/// Point-to-point ICP. The scale of `init` is kept; rotation and translation
/// are refined. Throws NoOverlapError when `init` yields no correspondences.
IcpResult icp_refine(const PointCloud& src, const PointCloud& dst, const Sim3& init,
                     const IcpOptions& options = {});

/// Back-projects every pixel with positive finite depth into world space.
PointCloud unproject(const DepthRaster& depth, const Intrinsics& k, const Pose& pose,
                     std::uint32_t stride = 1);

/// Projects a camera-frame point. Returns false when z <= 0.
bool project(const Vec3& p_cam, const Intrinsics& k, double& u, double& v);

struct FlowResult {
  /// Mean pixel displacement, +infinity when no pixel reprojects into view.
  double magnitude = 0.0;
  std::size_t valid = 0;
  std::size_t excluded = 0;
};

/// Geometric optical flow of the keyframe's depth reprojected into the current
/// camera.
FlowResult mean_flow_magnitude(const DepthRaster& depth_key, const Pose& pose_key,
                               const Pose& pose_cur, const Intrinsics& k, std::uint32_t stride = 1);

}  // namespace geoctx::geom
