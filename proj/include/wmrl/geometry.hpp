#pragma once

#include <Eigen/Core>

#include "wmrl/image.hpp"

namespace wmrl {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Rigid transform with a validated rotation (orthonormal, det = +1, to 1e-9).
class Pose {
 public:
  Pose() : position_(Vec3::Zero()), rotation_(Mat3::Identity()) {}
  Pose(const Vec3& position, const Mat3& rotation);

  static Pose identity() { return Pose(); }

  [[nodiscard]] const Vec3& position() const noexcept { return position_; }
  [[nodiscard]] const Mat3& rotation() const noexcept { return rotation_; }

  // p -> R p + t
  [[nodiscard]] Vec3 apply(const Vec3& p) const { return rotation_ * p + position_; }

  bool operator==(const Pose& o) const {
    return position_ == o.position_ && rotation_ == o.rotation_;
  }

 private:
  Vec3 position_;
  Mat3 rotation_;
};

// One end-effector command: translation delta (m), Euler rotation delta
// (rad, intrinsic XYZ), gripper open ratio.
struct DeltaAction {
  Vec3 dp = Vec3::Zero();
  Vec3 de = Vec3::Zero();
  double g = 1.0;
};

// Intrinsic X-Y-Z Euler angles: R = Rx(e.x) * Ry(e.y) * Rz(e.z).
Mat3 euler_to_matrix(const Vec3& euler);
// Inverse of euler_to_matrix; the middle (Y) angle is returned in [-pi/2, pi/2].
Vec3 matrix_to_euler(const Mat3& rotation);

// xi_t = xi_{t-1} o delta: translation and rotation in the previous local frame.
Pose compose_delta(const Pose& prev, const DeltaAction& delta);

struct CameraModel {
  Mat3 intrinsics;
  Pose extrinsics;  // world -> camera

  CameraModel(const Mat3& k, const Pose& world_to_camera);
};

struct Projection {
  Vec2 pixel;
  double depth;
};

// Throws Errc::BehindCamera when the camera-frame z is <= 1e-6.
Projection project_point(const CameraModel& cam, const Vec3& world_point);

struct RenderConfig {
  double axis_length = 0.15;
  double r_ref = 40.0;
  double z_ref = 1.0;
  double r_min = 8.0;
  double r_max = 140.0;
  double g_min = 0.0;
  double g_max = 1.0;
  int height = 64;
  int width = 64;
  // Opacity of the disk where it overlaps the line drawing.
  double disk_alpha = 0.5;

  void validate() const;
};

// clip(r_ref * z_ref / depth, r_min, r_max); Errc::NonPositiveDepth for depth <= 0.
double disk_radius(const RenderConfig& cfg, double depth);

// Piecewise-linear red -> green ramp over [g_min, g_max]; values outside clamp.
Vec3 gripper_colormap(const RenderConfig& cfg, double g);

// Axis colours for the x, y, z segments.
Vec3 axis_color(int axis);

// Action frame: colour-mapped disk at the projected origin (radius from
// depth), white centre pixel, three axis segments to the projected tips
// p + R (l e_k). Tips behind the camera are skipped. No anti-aliasing.
Image render_action_frame(const CameraModel& cam, const RenderConfig& cfg,
                          const Pose& pose, double g);

// Integer raster helpers shared with the state rasterizer.
int round_half_up(double v) noexcept;
void draw_line(Image& img, int r0, int c0, int r1, int c1, const Vec3& color);
void draw_disk(Image& img, double center_row, double center_col, double radius,
               const Vec3& color);

}  // namespace wmrl
