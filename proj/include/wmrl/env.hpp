#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "wmrl/geometry.hpp"
#include "wmrl/image.hpp"
#include "wmrl/rng.hpp"

namespace wmrl {

// Ground-truth tabletop pick-and-place: a point gripper carries an object
// into a circular goal region. Workspace is the unit square in xy and
// [0, z_max] in z.
struct EnvConfig {
  double z_max = 0.5;
  double move_clip = 0.1;          // per-axis, metres per step
  double attach_radius = 0.05;
  double gripper_threshold = 0.5;  // g below closes, above opens
  double goal_radius = 0.1;
  double start_height = 0.25;
  double min_object_goal_distance = 0.3;
  int canvas = 64;
};

struct EnvState {
  Vec3 gripper = Vec3::Zero();
  double g = 1.0;
  Vec3 object = Vec3::Zero();
  bool attached = false;
  Vec2 goal = Vec2::Zero();
  double goal_radius = 0.1;
  int step = 0;
  bool success = false;

  bool operator==(const EnvState& o) const {
    return gripper == o.gripper && g == o.g && object == o.object && attached == o.attached &&
           goal == o.goal && goal_radius == o.goal_radius && step == o.step &&
           success == o.success;
  }
};

// Continuous part of the state that the learned dynamics model predicts:
// gripper xyz, g, object xyz, attached.
inline constexpr std::size_t kDynamicDim = 8;
// Policy/world-model input features derived from one state.
inline constexpr std::size_t kStateFeatureDim = 15;

std::array<double, kDynamicDim> dynamic_vector(const EnvState& s);
// Writes the dynamic part back; attached is thresholded at 0.5 and the
// success flag is re-derived (and kept monotone) by the caller.
EnvState with_dynamic_vector(const EnvState& base, const std::array<double, kDynamicDim>& v,
                             const EnvConfig& cfg);

// dynamic(8) ++ goal xy ++ 4 * (object - gripper, goal - object xy).
std::array<double, kStateFeatureDim> state_features(const EnvState& s);

// Success rule: object xy inside the goal disk with the gripper open and
// the object not held.
bool success_condition(const EnvState& s, const EnvConfig& cfg);

EnvState env_step(const EnvState& state, const DeltaAction& action, const EnvConfig& cfg);

EnvState sample_initial_state(const EnvConfig& cfg, Rng& rng);

struct RasterStats {
  int out_of_bounds = 0;
};

// 64x64 (cfg.canvas) RGB: goal ring (blue), object square (yellow), gripper
// disk coloured by g (red closed -> green open) on black. Positions outside
// the canvas are clamped to the edge and counted in stats.
Image rasterize_state(const EnvState& state, const EnvConfig& cfg, RasterStats* stats = nullptr);

// Pixel coordinates (col, row) of a workspace xy position.
Vec2 workspace_to_pixel(const Vec2& xy, const EnvConfig& cfg);

// Hand-written controller used for demonstrations and scripted checks.
// noise_std adds Gaussian noise (metres) to the translation command.
DeltaAction scripted_expert(const EnvState& state, const EnvConfig& cfg, Rng* rng = nullptr,
                            double noise_std = 0.0);

// Overhead camera looking down -z onto the workspace, used to render action
// frames for the toy world model.
CameraModel overhead_camera(const EnvConfig& cfg);
RenderConfig toy_render_config(const EnvConfig& cfg);

}  // namespace wmrl
