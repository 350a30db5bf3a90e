#include "wmrl/geometry.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>
#include <Eigen/LU>
#include <vector>

#include "wmrl/error.hpp"

namespace wmrl {

namespace {

constexpr double kOrthoTol = 1e-9;
constexpr double kMinDepth = 1e-6;

template <typename F>
void for_each_line_pixel(int r0, int c0, int r1, int c1, F&& visit) {
  const int dc = std::abs(c1 - c0);
  const int dr = -std::abs(r1 - r0);
  const int sc = c0 < c1 ? 1 : -1;
  const int sr = r0 < r1 ? 1 : -1;
  int err = dc + dr;
  int r = r0;
  int c = c0;
  // Long segments to far-off tips are bounded by the canvas clip in callers.
  for (;;) {
    visit(r, c);
    if (r == r1 && c == c1) break;
    const int e2 = 2 * err;
    if (e2 >= dr) {
      err += dr;
      c += sc;
    }
    if (e2 <= dc) {
      err += dc;
      r += sr;
    }
  }
}

// Clamp a far endpoint along the segment so rasterization stays bounded.
Vec2 clamp_far_point(const Vec2& from, const Vec2& to, double limit) {
  const Vec2 d = to - from;
  const double n = d.norm();
  if (n <= limit) return to;
  return from + d * (limit / n);
}

}  // namespace

Pose::Pose(const Vec3& position, const Mat3& rotation)
    : position_(position), rotation_(rotation) {
  if (!position.allFinite() || !rotation.allFinite()) {
    throw Error(Errc::NonFiniteValue, "pose contains non-finite entries");
  }
  const Mat3 gram = rotation.transpose() * rotation;
  if ((gram - Mat3::Identity()).cwiseAbs().maxCoeff() > kOrthoTol ||
      std::abs(rotation.determinant() - 1.0) > kOrthoTol) {
    throw Error(Errc::InvalidArgument, "rotation is not a proper orthonormal matrix");
  }
}

Mat3 euler_to_matrix(const Vec3& e) {
  const double ca = std::cos(e.x()), sa = std::sin(e.x());
  const double cb = std::cos(e.y()), sb = std::sin(e.y());
  const double cc = std::cos(e.z()), sc = std::sin(e.z());
  Mat3 rx, ry, rz;
  rx << 1, 0, 0, 0, ca, -sa, 0, sa, ca;
  ry << cb, 0, sb, 0, 1, 0, -sb, 0, cb;
  rz << cc, -sc, 0, sc, cc, 0, 0, 0, 1;
  return rx * ry * rz;
}

Vec3 matrix_to_euler(const Mat3& r) {
  const double sb = std::clamp(r(0, 2), -1.0, 1.0);
  const double b = std::asin(sb);
  const double a = std::atan2(-r(1, 2), r(2, 2));
  const double c = std::atan2(-r(0, 1), r(0, 0));
  return {a, b, c};
}

Pose compose_delta(const Pose& prev, const DeltaAction& delta) {
  if (delta.dp.isZero(0.0) && delta.de.isZero(0.0)) return prev;
  const Vec3 position = prev.position() + prev.rotation() * delta.dp;
  const Mat3 rotation = prev.rotation() * euler_to_matrix(delta.de);
  return Pose(position, rotation);
}

CameraModel::CameraModel(const Mat3& k, const Pose& world_to_camera)
    : intrinsics(k), extrinsics(world_to_camera) {
  if (k(2, 2) != 1.0 || !(k(0, 0) > 0.0) || !(k(1, 1) > 0.0)) {
    throw Error(Errc::InvalidArgument, "intrinsics need K22 = 1 and positive focal lengths");
  }
}

Projection project_point(const CameraModel& cam, const Vec3& world_point) {
  const Vec3 x = cam.extrinsics.apply(world_point);
  if (!(x.z() > kMinDepth)) {
    throw Error(Errc::BehindCamera, "point has camera-frame depth " + std::to_string(x.z()));
  }
  const Vec3 u = cam.intrinsics * x;
  return {Vec2(u.x() / u.z(), u.y() / u.z()), x.z()};
}

void RenderConfig::validate() const {
  if (!(r_min > 0.0 && r_min <= r_ref && r_ref <= r_max)) {
    throw Error(Errc::InvalidArgument, "render config needs 0 < r_min <= r_ref <= r_max");
  }
  if (!(z_ref > 0.0)) throw Error(Errc::InvalidArgument, "z_ref must be positive");
  if (!(g_max > g_min)) throw Error(Errc::InvalidArgument, "colormap range is empty");
  if (height <= 0 || width <= 0) throw Error(Errc::InvalidArgument, "empty canvas");
  if (!(disk_alpha >= 0.0 && disk_alpha <= 1.0)) {
    throw Error(Errc::InvalidArgument, "disk_alpha must lie in [0,1]");
  }
}

double disk_radius(const RenderConfig& cfg, double depth) {
  if (!(depth > 0.0)) {
    throw Error(Errc::NonPositiveDepth, "depth " + std::to_string(depth));
  }
  return std::clamp(cfg.r_ref * cfg.z_ref / depth, cfg.r_min, cfg.r_max);
}

Vec3 gripper_colormap(const RenderConfig& cfg, double g) {
  const double t = std::clamp((g - cfg.g_min) / (cfg.g_max - cfg.g_min), 0.0, 1.0);
  return {1.0 - t, t, 0.0};
}

Vec3 axis_color(int axis) {
  switch (axis) {
    case 0: return {1.0, 0.0, 0.0};
    case 1: return {0.0, 1.0, 0.0};
    default: return {0.0, 0.0, 1.0};
  }
}

int round_half_up(double v) noexcept { return static_cast<int>(std::floor(v + 0.5)); }

void draw_line(Image& img, int r0, int c0, int r1, int c1, const Vec3& color) {
  for_each_line_pixel(r0, c0, r1, c1, [&](int r, int c) {
    if (!img.contains(r, c)) return;
    for (int ch = 0; ch < 3; ++ch) img.at(r, c, ch) = color[ch];
  });
}

void draw_disk(Image& img, double center_row, double center_col, double radius,
               const Vec3& color) {
  const int r_lo = std::max(0, static_cast<int>(std::floor(center_row - radius)));
  const int r_hi = std::min(img.height - 1, static_cast<int>(std::ceil(center_row + radius)));
  const int c_lo = std::max(0, static_cast<int>(std::floor(center_col - radius)));
  const int c_hi = std::min(img.width - 1, static_cast<int>(std::ceil(center_col + radius)));
  const double r2 = radius * radius;
  for (int r = r_lo; r <= r_hi; ++r) {
    for (int c = c_lo; c <= c_hi; ++c) {
      const double dr = r - center_row;
      const double dc = c - center_col;
      if (dr * dr + dc * dc <= r2) {
        for (int ch = 0; ch < 3; ++ch) img.at(r, c, ch) = color[ch];
      }
    }
  }
}

Image render_action_frame(const CameraModel& cam, const RenderConfig& cfg, const Pose& pose,
                          double g) {
  cfg.validate();
  const Projection origin = project_point(cam, pose.position());
  const int h = cfg.height;
  const int w = cfg.width;

  // Line layer.
  Image lines(h, w, 3);
  std::vector<std::uint8_t> line_mask(static_cast<std::size_t>(h) * w, 0);
  const int r0 = round_half_up(origin.pixel.y());
  const int c0 = round_half_up(origin.pixel.x());
  const double far_limit = 4.0 * (h + w);
  for (int k = 0; k < 3; ++k) {
    const Vec3 tip = pose.position() + pose.rotation() * (cfg.axis_length * Vec3::Unit(k));
    const Vec3 tip_cam = cam.extrinsics.apply(tip);
    if (!(tip_cam.z() > kMinDepth)) continue;
    const Projection p = project_point(cam, tip);
    const Vec2 end = clamp_far_point(origin.pixel, p.pixel, far_limit);
    const Vec3 color = axis_color(k);
    for_each_line_pixel(r0, c0, round_half_up(end.y()), round_half_up(end.x()),
                        [&](int r, int c) {
                          if (!lines.contains(r, c)) return;
                          line_mask[static_cast<std::size_t>(r) * w + c] = 1;
                          for (int ch = 0; ch < 3; ++ch) {
                            lines.at(r, c, ch) = color[ch];
                          }
                        });
  }

  // Disk overlay, alpha-blended over the line layer where they overlap.
  const double radius = disk_radius(cfg, origin.depth);
  const Vec3 disk_color = gripper_colormap(cfg, g);
  Image disk(h, w, 3);
  std::vector<std::uint8_t> disk_mask(static_cast<std::size_t>(h) * w, 0);
  {
    draw_disk(disk, origin.pixel.y(), origin.pixel.x(), radius, disk_color);
    // Coverage is tracked separately: a black disk colour is legal.
    const double r2 = radius * radius;
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        const double dr = r - origin.pixel.y();
        const double dc = c - origin.pixel.x();
        if (dr * dr + dc * dc <= r2) disk_mask[static_cast<std::size_t>(r) * w + c] = 1;
      }
    }
  }

  Image out(h, w, 3);
  const double a = cfg.disk_alpha;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const std::size_t i = static_cast<std::size_t>(r) * w + c;
      for (int ch = 0; ch < 3; ++ch) {
        if (disk_mask[i] && line_mask[i]) {
          out.at(r, c, ch) = a * disk.at(r, c, ch) + (1.0 - a) * lines.at(r, c, ch);
        } else if (disk_mask[i]) {
          out.at(r, c, ch) = disk.at(r, c, ch);
        } else if (line_mask[i]) {
          out.at(r, c, ch) = lines.at(r, c, ch);
        }
      }
    }
  }

  if (out.contains(r0, c0)) {
    for (int ch = 0; ch < 3; ++ch) out.at(r0, c0, ch) = 1.0;
  }
  return out;
}

}  // namespace wmrl
