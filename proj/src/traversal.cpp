#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "geoctx/error.hpp"
#include "geoctx/sequencer.hpp"

namespace geoctx::seq {

void TraversalParams::validate() const {
  if (!(fps > 0.0)) throw ConfigError("traversal: fps must be positive");
  if (!(alpha > 0.0 && alpha <= 1.0)) throw ConfigError("traversal: alpha must be in (0, 1]");
  if (lookahead < 1) throw ConfigError("traversal: lookahead must be at least one frame");
  if (speed) {
    if (!(*speed > 0.0)) throw ConfigError("traversal: speed must be positive");
  } else if (!(speed_min > 0.0) || speed_max < speed_min) {
    throw ConfigError("traversal: speed range must satisfy 0 < min <= max");
  }
  if (!(yaw_rate_max > 0.0) || !(yaw_gain > 0.0)) throw ConfigError("traversal: yaw rate and gain must be positive");
  if (!(pitch_tau > 0.0)) throw ConfigError("traversal: pitch time constant must be positive");
  if (jitter_pos < 0.0 || jitter_rot < 0.0 || jitter_bound < 0.0)
    throw ConfigError("traversal: jitter magnitudes must be non-negative");
  if (jitter_pole < 0.0 || jitter_pole >= 1.0) throw ConfigError("traversal: jitter pole must be in [0, 1)");
  if (glance_rate < 0.0) throw ConfigError("traversal: glance rate must be non-negative");
  if (glance_rate > 0.0 && !(glance_duration > 0.0)) throw ConfigError("traversal: glance duration must be positive");
  if (min_spacing < 0.0 || tail < 0.0) throw ConfigError("traversal: spacing and tail must be non-negative");
}

geom::Mat3 camera_rotation(double yaw, double pitch, double roll) {
  const double cy = std::cos(yaw), sy = std::sin(yaw), cp = std::cos(pitch), sp = std::sin(pitch);
  const geom::Vec3 f(cp * cy, cp * sy, sp);
  const geom::Vec3 r(sy, -cy, 0.0);
  const geom::Vec3 d = f.cross(r);
  const double cr = std::cos(roll), sr = std::sin(roll);
  geom::Mat3 m;
  m.col(0) = cr * r + sr * d;
  m.col(1) = -sr * r + cr * d;
  m.col(2) = f;
  return m;
}

namespace {

double wrap_angle(double a) {
  a = std::fmod(a + std::numbers::pi, 2.0 * std::numbers::pi);
  if (a < 0.0) a += 2.0 * std::numbers::pi;
  return a - std::numbers::pi;
}

struct Glance {
  double start = 0.0;
  double yaw = 0.0;
  double pitch = 0.0;
};

}  // namespace

Trajectory traversal_trajectory(std::span<const geom::Vec3> waypoints, const TraversalParams& params) {
  params.validate();
  if (waypoints.size() < 2) throw ConfigError("traversal: at least 2 waypoints are required");
  for (std::size_t i = 1; i < waypoints.size(); ++i) {
    const double d = (waypoints[i] - waypoints[i - 1]).norm();
    if (d < params.min_spacing || d == 0.0)
      throw ConfigError("traversal: waypoints " + std::to_string(i - 1) + " and " + std::to_string(i) + " are " +
                        std::to_string(d) + " m apart; minimum spacing is " + std::to_string(params.min_spacing));
  }

  Rng rng(params.seed);
  const double dt = 1.0 / params.fps;
  const std::size_t segments = waypoints.size() - 1;
  std::vector<double> speed(segments);
  for (double& v : speed) v = params.speed ? *params.speed : rng.uniform(params.speed_min, params.speed_max);

  // Carrot: a point advancing along the polyline at the segment speed.
  std::vector<geom::Vec3> carrot{waypoints[0]};
  std::vector<double> carrot_speed{speed[0]};
  {
    // Each frame spends dt of time; time left over at a waypoint carries into
    // the next segment at that segment's speed.
    std::size_t seg = 0;
    double along = 0.0;
    while (seg < segments) {
      double time = dt;
      while (seg < segments && time > 0.0) {
        const double len = (waypoints[seg + 1] - waypoints[seg]).norm();
        const double need = (len - along) / speed[seg];
        if (time < need) {
          along += time * speed[seg];
          time = 0.0;
        } else {
          time -= need;
          ++seg;
          along = 0.0;
        }
      }
      if (seg >= segments) {
        carrot.push_back(waypoints.back());
        carrot_speed.push_back(speed.back());
      } else {
        const geom::Vec3 dir = (waypoints[seg + 1] - waypoints[seg]).normalized();
        carrot.push_back(waypoints[seg] + along * dir);
        carrot_speed.push_back(speed[seg]);
      }
    }
    const auto tail = static_cast<std::size_t>(std::llround(params.tail * params.fps));
    for (std::size_t i = 0; i < tail; ++i) {
      carrot.push_back(waypoints.back());
      carrot_speed.push_back(speed.back());
    }
  }

  const std::size_t frames = carrot.size();
  Trajectory out;
  geom::Vec3 p = waypoints[0];
  geom::Vec3 jitter = geom::Vec3::Zero();
  geom::Vec3 rot_jitter = geom::Vec3::Zero();  // yaw, pitch, roll
  const geom::Vec3 d0 = waypoints[1] - waypoints[0];
  double yaw = std::atan2(d0.y(), d0.x());
  double pitch = std::atan2(d0.z(), std::hypot(d0.x(), d0.y()));
  const double pitch_step = 1.0 - std::exp(-dt / params.pitch_tau);
  std::optional<Glance> glance;

  for (std::size_t t = 0; t < frames; ++t) {
    if (t > 0) p += params.alpha * (carrot[t] - p);

    if (params.jitter_pos > 0.0) {
      const geom::Vec3 noise(rng.normal(), rng.normal(), rng.normal());
      geom::Vec3 next = params.jitter_pole * jitter + params.jitter_pos * noise;
      const double bound = params.jitter_bound * carrot_speed[t] * dt;
      const geom::Vec3 step = next - jitter;
      if (step.norm() > bound) next = jitter + step * (bound / step.norm());
      jitter = next;
    }
    if (params.jitter_rot > 0.0) {
      const geom::Vec3 noise(rng.normal(), rng.normal(), rng.normal());
      rot_jitter = params.jitter_pole * rot_jitter + params.jitter_rot * noise;
    }

    const std::size_t ahead = std::min(t + static_cast<std::size_t>(params.lookahead), frames - 1);
    const geom::Vec3 to = carrot[ahead] - p;
    const double horiz = std::hypot(to.x(), to.y());
    if (horiz > 1e-9) {
      const double err = wrap_angle(std::atan2(to.y(), to.x()) - yaw);
      const double omega = params.yaw_rate_max * std::tanh(params.yaw_gain * err / params.yaw_rate_max);
      yaw = wrap_angle(yaw + omega * dt);
      pitch += (std::atan2(to.z(), horiz) - pitch) * pitch_step;
    }

    const double now = static_cast<double>(t) * dt;
    if (glance && now - glance->start > params.glance_duration) glance.reset();
    if (!glance && params.glance_rate > 0.0 && rng.uniform() < params.glance_rate * dt)
      glance = Glance{now, rng.uniform(-params.glance_yaw, params.glance_yaw),
                      rng.uniform(-params.glance_pitch, params.glance_pitch)};
    double g_yaw = 0.0, g_pitch = 0.0;
    if (glance) {
      const double env = std::sin(std::numbers::pi * (now - glance->start) / params.glance_duration);
      g_yaw = glance->yaw * env;
      g_pitch = glance->pitch * env;
    }

    geom::Pose pose;
    pose.translation = p + jitter;
    pose.rotation = camera_rotation(yaw + g_yaw + rot_jitter.x(), pitch + g_pitch + rot_jitter.y(), rot_jitter.z());
    out.push_back(static_cast<std::int64_t>(t), pose);
  }
  return out;
}

}  // namespace geoctx::seq
