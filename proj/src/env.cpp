#include "wmrl/env.hpp"

#include <algorithm>
#include <cmath>

namespace wmrl {

std::array<double, kDynamicDim> dynamic_vector(const EnvState& s) {
  return {s.gripper.x(), s.gripper.y(), s.gripper.z(), s.g,
          s.object.x(),  s.object.y(),  s.object.z(),  s.attached ? 1.0 : 0.0};
}

EnvState with_dynamic_vector(const EnvState& base, const std::array<double, kDynamicDim>& v,
                             const EnvConfig& cfg) {
  EnvState s = base;
  s.gripper = Vec3(std::clamp(v[0], 0.0, 1.0), std::clamp(v[1], 0.0, 1.0),
                   std::clamp(v[2], 0.0, cfg.z_max));
  s.g = std::clamp(v[3], 0.0, 1.0);
  s.object = Vec3(std::clamp(v[4], 0.0, 1.0), std::clamp(v[5], 0.0, 1.0),
                  std::clamp(v[6], 0.0, cfg.z_max));
  s.attached = v[7] > 0.5;
  return s;
}

std::array<double, kStateFeatureDim> state_features(const EnvState& s) {
  const auto d = dynamic_vector(s);
  return {d[0],
          d[1],
          d[2],
          d[3],
          d[4],
          d[5],
          d[6],
          d[7],
          s.goal.x(),
          s.goal.y(),
          4.0 * (s.object.x() - s.gripper.x()),
          4.0 * (s.object.y() - s.gripper.y()),
          4.0 * (s.object.z() - s.gripper.z()),
          4.0 * (s.goal.x() - s.object.x()),
          4.0 * (s.goal.y() - s.object.y())};
}

bool success_condition(const EnvState& s, const EnvConfig& cfg) {
  const double dx = s.object.x() - s.goal.x();
  const double dy = s.object.y() - s.goal.y();
  return !s.attached && s.g > cfg.gripper_threshold &&
         std::sqrt(dx * dx + dy * dy) < s.goal_radius;
}

EnvState env_step(const EnvState& state, const DeltaAction& action, const EnvConfig& cfg) {
  EnvState next = state;
  next.step = state.step + 1;

  Vec3 moved = state.gripper;
  for (int i = 0; i < 3; ++i) {
    moved[i] += std::clamp(action.dp[i], -cfg.move_clip, cfg.move_clip);
  }
  moved.x() = std::clamp(moved.x(), 0.0, 1.0);
  moved.y() = std::clamp(moved.y(), 0.0, 1.0);
  moved.z() = std::clamp(moved.z(), 0.0, cfg.z_max);
  const Vec3 displacement = moved - state.gripper;
  next.gripper = moved;
  next.g = std::clamp(action.g, 0.0, 1.0);

  if (state.attached) {
    next.object = state.object + displacement;
    if (next.g >= cfg.gripper_threshold) {
      next.attached = false;
      next.object.z() = 0.0;
    }
  } else if (next.g < cfg.gripper_threshold &&
             (next.gripper - state.object).norm() < cfg.attach_radius) {
    next.attached = true;
  }

  next.success = state.success || success_condition(next, cfg);
  return next;
}

EnvState sample_initial_state(const EnvConfig& cfg, Rng& rng) {
  EnvState s;
  s.goal_radius = cfg.goal_radius;
  s.gripper = Vec3(rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9), cfg.start_height);
  s.g = 1.0;
  s.object = Vec3(rng.uniform(0.15, 0.85), rng.uniform(0.15, 0.85), 0.0);
  for (int attempt = 0; attempt < 1000; ++attempt) {
    s.goal = Vec2(rng.uniform(0.15, 0.85), rng.uniform(0.15, 0.85));
    if ((s.goal - s.object.head<2>()).norm() >= cfg.min_object_goal_distance) break;
  }
  return s;
}

Vec2 workspace_to_pixel(const Vec2& xy, const EnvConfig& cfg) {
  const double scale = static_cast<double>(cfg.canvas - 1);
  return {xy.x() * scale, xy.y() * scale};
}

namespace {

Vec2 clamp_pixel(Vec2 p, const EnvConfig& cfg, RasterStats* stats) {
  const double hi = static_cast<double>(cfg.canvas - 1);
  if (p.x() < 0.0 || p.x() > hi || p.y() < 0.0 || p.y() > hi) {
    if (stats) ++stats->out_of_bounds;
    p.x() = std::clamp(p.x(), 0.0, hi);
    p.y() = std::clamp(p.y(), 0.0, hi);
  }
  return p;
}

}  // namespace

Image rasterize_state(const EnvState& state, const EnvConfig& cfg, RasterStats* stats) {
  const int n = cfg.canvas;
  Image img(n, n, 3);
  const double scale = static_cast<double>(n - 1);

  // Goal ring.
  const Vec2 goal_px = clamp_pixel(workspace_to_pixel(state.goal, cfg), cfg, stats);
  const double ring = state.goal_radius * scale;
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      const double d = std::hypot(c - goal_px.x(), r - goal_px.y());
      if (std::abs(d - ring) <= 0.5) {
        img.at(r, c, 0) = 0.0;
        img.at(r, c, 1) = 0.0;
        img.at(r, c, 2) = 1.0;
      }
    }
  }

  // Object: 5x5 square.
  const Vec2 obj_px = clamp_pixel(workspace_to_pixel(state.object.head<2>(), cfg), cfg, stats);
  const int oc = round_half_up(obj_px.x());
  const int orow = round_half_up(obj_px.y());
  for (int r = orow - 2; r <= orow + 2; ++r) {
    for (int c = oc - 2; c <= oc + 2; ++c) {
      if (!img.contains(r, c)) continue;
      img.at(r, c, 0) = 1.0;
      img.at(r, c, 1) = 1.0;
      img.at(r, c, 2) = 0.0;
    }
  }

  // Gripper disk on top.
  const Vec2 grip_px = clamp_pixel(workspace_to_pixel(state.gripper.head<2>(), cfg), cfg, stats);
  const double t = std::clamp(state.g, 0.0, 1.0);
  draw_disk(img, round_half_up(grip_px.y()), round_half_up(grip_px.x()), 3.0,
            Vec3(1.0 - t, t, 0.0));
  return img;
}

DeltaAction scripted_expert(const EnvState& s, const EnvConfig& cfg, Rng* rng, double noise_std) {
  DeltaAction a;
  Vec3 target;
  if (s.attached) {
    target = Vec3(s.goal.x(), s.goal.y(), 0.1);
  } else {
    target = s.object;
  }
  Vec3 dp = target - s.gripper;
  for (int i = 0; i < 3; ++i) dp[i] = std::clamp(dp[i], -cfg.move_clip, cfg.move_clip);
  if (rng != nullptr && noise_std > 0.0) {
    for (int i = 0; i < 3; ++i) dp[i] += noise_std * rng->normal();
  }
  const Vec3 predicted = s.gripper + dp;
  if (s.attached) {
    const double goal_dist = (predicted.head<2>() - s.goal).norm();
    a.g = goal_dist < 0.5 * s.goal_radius ? 1.0 : 0.0;
  } else {
    a.g = (predicted - s.object).norm() < 0.6 * cfg.attach_radius ? 0.0 : 1.0;
  }
  a.dp = dp;
  return a;
}

CameraModel overhead_camera(const EnvConfig& cfg) {
  const double f = 0.78 * cfg.canvas;
  const double c = 0.5 * (cfg.canvas - 1);
  Mat3 k;
  k << f, 0, c, 0, f, c, 0, 0, 1;
  Mat3 r = Vec3(1.0, -1.0, -1.0).asDiagonal();
  const Vec3 center(0.5, 0.5, 1.0);
  return CameraModel(k, Pose(-r * center, r));
}

RenderConfig toy_render_config(const EnvConfig& cfg) {
  RenderConfig rc;
  rc.axis_length = 0.1;
  rc.r_ref = 4.0;
  rc.z_ref = 1.0;
  rc.r_min = 2.0;
  rc.r_max = 8.0;
  rc.height = cfg.canvas;
  rc.width = cfg.canvas;
  return rc;
}

}  // namespace wmrl
