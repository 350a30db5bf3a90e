#include "wmrl/flow_eval.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>

#include "wmrl/error.hpp"

namespace wmrl {

FlowField::FlowField(int h, int w, double ux, double uy)
    : height(h), width(w), data(static_cast<std::size_t>(h) * w * 2) {
  for (std::size_t i = 0; i < data.size(); i += 2) {
    data[i] = ux;
    data[i + 1] = uy;
  }
}

namespace {

// Single-channel double plane.
struct Plane {
  int h = 0, w = 0;
  std::vector<double> v;

  Plane() = default;
  Plane(int h_, int w_) : h(h_), w(w_), v(static_cast<std::size_t>(h_) * w_, 0.0) {}
  double& operator()(int r, int c) { return v[static_cast<std::size_t>(r) * w + c]; }
  double operator()(int r, int c) const { return v[static_cast<std::size_t>(r) * w + c]; }
  double clamped(int r, int c) const {
    return (*this)(std::clamp(r, 0, h - 1), std::clamp(c, 0, w - 1));
  }
  double bilinear(double r, double c) const {
    r = std::clamp(r, 0.0, static_cast<double>(h - 1));
    c = std::clamp(c, 0.0, static_cast<double>(w - 1));
    const int r0 = static_cast<int>(std::floor(r)), c0 = static_cast<int>(std::floor(c));
    const int r1 = std::min(r0 + 1, h - 1), c1 = std::min(c0 + 1, w - 1);
    const double fr = r - r0, fc = c - c0;
    return (1 - fr) * ((1 - fc) * (*this)(r0, c0) + fc * (*this)(r0, c1)) +
           fr * ((1 - fc) * (*this)(r1, c0) + fc * (*this)(r1, c1));
  }
};

Plane gray_plane(const Image& img) {
  const Image g = to_grayscale(img);
  Plane p(g.height, g.width);
  for (int r = 0; r < g.height; ++r) {
    for (int c = 0; c < g.width; ++c) p(r, c) = g.at(r, c, 0);
  }
  return p;
}

Plane downsample(const Plane& in) {
  static constexpr std::array<double, 5> k{1.0 / 16, 4.0 / 16, 6.0 / 16, 4.0 / 16, 1.0 / 16};
  Plane tmp(in.h, in.w);
  for (int r = 0; r < in.h; ++r) {
    for (int c = 0; c < in.w; ++c) {
      double s = 0.0;
      for (int i = -2; i <= 2; ++i) s += k[i + 2] * in.clamped(r, c + i);
      tmp(r, c) = s;
    }
  }
  Plane out((in.h + 1) / 2, (in.w + 1) / 2);
  for (int r = 0; r < out.h; ++r) {
    for (int c = 0; c < out.w; ++c) {
      double s = 0.0;
      for (int i = -2; i <= 2; ++i) s += k[i + 2] * tmp.clamped(2 * r + i, 2 * c);
      out(r, c) = s;
    }
  }
  return out;
}

// Per-pixel quadratic fit f(x0 + (dx, dy)) ~ c0 + c1 dx + c2 dy + c3 dx^2 +
// c4 dy^2 + c5 dx dy under Gaussian applicability; returns A (3 unique
// entries) and b.
struct Expansion {
  Plane a11, a12, a22, b1, b2;
};

Expansion poly_expand(const Plane& f, int n, double sigma) {
  const int side = 2 * n + 1;
  const int taps = side * side;
  Eigen::Matrix<double, 6, Eigen::Dynamic> basis(6, taps);
  Eigen::VectorXd weight(taps);
  for (int dy = -n, t = 0; dy <= n; ++dy) {
    for (int dx = -n; dx <= n; ++dx, ++t) {
      weight(t) = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
      basis.col(t) << 1.0, dx, dy, dx * dx, dy * dy, dx * dy;
    }
  }
  const Eigen::Matrix<double, 6, 6> gram = basis * weight.asDiagonal() * basis.transpose();
  const Eigen::Matrix<double, 6, Eigen::Dynamic> filt =
      gram.inverse() * basis * weight.asDiagonal();

  Expansion e{Plane(f.h, f.w), Plane(f.h, f.w), Plane(f.h, f.w), Plane(f.h, f.w),
              Plane(f.h, f.w)};
  std::vector<double> patch(taps);
  for (int r = 0; r < f.h; ++r) {
    for (int c = 0; c < f.w; ++c) {
      for (int dy = -n, t = 0; dy <= n; ++dy) {
        for (int dx = -n; dx <= n; ++dx, ++t) patch[t] = f.clamped(r + dy, c + dx);
      }
      std::array<double, 6> co{};
      for (int i = 1; i < 6; ++i) {
        double s = 0.0;
        for (int t = 0; t < taps; ++t) s += filt(i, t) * patch[t];
        co[i] = s;
      }
      e.a11(r, c) = co[3];
      e.a22(r, c) = co[4];
      e.a12(r, c) = 0.5 * co[5];
      e.b1(r, c) = co[1];
      e.b2(r, c) = co[2];
    }
  }
  return e;
}

Plane box_filter(const Plane& in, int radius) {
  Plane tmp(in.h, in.w), out(in.h, in.w);
  for (int r = 0; r < in.h; ++r) {
    for (int c = 0; c < in.w; ++c) {
      double s = 0.0;
      for (int i = -radius; i <= radius; ++i) s += in.clamped(r, c + i);
      tmp(r, c) = s;
    }
  }
  for (int r = 0; r < in.h; ++r) {
    for (int c = 0; c < in.w; ++c) {
      double s = 0.0;
      for (int i = -radius; i <= radius; ++i) s += tmp.clamped(r + i, c);
      out(r, c) = s;
    }
  }
  return out;
}

constexpr double kDetFloor = 1e-14;

// One displacement update at a single pyramid level; returns the fraction
// of well-conditioned pixels.
double refine(const Expansion& e1, const Expansion& e2, Plane& ux, Plane& uy, int window) {
  const int h = ux.h, w = ux.w;
  Plane g11(h, w), g12(h, w), g22(h, w), h1(h, w), h2(h, w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const double dx = ux(r, c), dy = uy(r, c);
      const double tr = r + dy, tc = c + dx;
      const double a11 = 0.5 * (e1.a11(r, c) + e2.a11.bilinear(tr, tc));
      const double a12 = 0.5 * (e1.a12(r, c) + e2.a12.bilinear(tr, tc));
      const double a22 = 0.5 * (e1.a22(r, c) + e2.a22.bilinear(tr, tc));
      // Delta b = -(b2 - b1) / 2 + A d
      const double db1 = -0.5 * (e2.b1.bilinear(tr, tc) - e1.b1(r, c)) + a11 * dx + a12 * dy;
      const double db2 = -0.5 * (e2.b2.bilinear(tr, tc) - e1.b2(r, c)) + a12 * dx + a22 * dy;
      g11(r, c) = a11 * a11 + a12 * a12;
      g12(r, c) = a11 * a12 + a12 * a22;
      g22(r, c) = a12 * a12 + a22 * a22;
      h1(r, c) = a11 * db1 + a12 * db2;
      h2(r, c) = a12 * db1 + a22 * db2;
    }
  }
  const int rad = window / 2;
  g11 = box_filter(g11, rad);
  g12 = box_filter(g12, rad);
  g22 = box_filter(g22, rad);
  h1 = box_filter(h1, rad);
  h2 = box_filter(h2, rad);
  std::size_t confident = 0;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const double det = g11(r, c) * g22(r, c) - g12(r, c) * g12(r, c);
      if (det > kDetFloor) {
        ++confident;
        ux(r, c) = (g22(r, c) * h1(r, c) - g12(r, c) * h2(r, c)) / det;
        uy(r, c) = (g11(r, c) * h2(r, c) - g12(r, c) * h1(r, c)) / det;
      }
    }
  }
  return static_cast<double>(confident) / static_cast<double>(h * w);
}

void upsample_flow(const Plane& cx, const Plane& cy, Plane& fx, Plane& fy) {
  for (int r = 0; r < fx.h; ++r) {
    for (int c = 0; c < fx.w; ++c) {
      const double sr = (r + 0.5) / 2.0 - 0.5, sc = (c + 0.5) / 2.0 - 0.5;
      fx(r, c) = 2.0 * cx.bilinear(sr, sc);
      fy(r, c) = 2.0 * cy.bilinear(sr, sc);
    }
  }
}

double median(std::vector<double> v) {
  const std::size_t n = v.size();
  std::nth_element(v.begin(), v.begin() + static_cast<long>(n / 2), v.end());
  const double hi = v[n / 2];
  if (n % 2 == 1) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + static_cast<long>(n / 2));
  return 0.5 * (lo + hi);
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

FlowField estimate_flow(const Image& frame_a, const Image& frame_b, const FarnebackConfig& cfg) {
  if (frame_a.height != frame_b.height || frame_a.width != frame_b.width) {
    throw Error(Errc::DimensionMismatch, "frames differ in size");
  }
  if (frame_a.height < 16 || frame_a.width < 16) {
    throw Error(Errc::TooSmall, "flow needs frames of at least 16x16");
  }
  if (cfg.levels < 1 || cfg.iterations < 1 || cfg.window < 1 || cfg.poly_n < 1) {
    throw Error(Errc::InvalidArgument, "invalid flow estimator settings");
  }
  std::vector<Plane> pa{gray_plane(frame_a)}, pb{gray_plane(frame_b)};
  for (int l = 1; l < cfg.levels; ++l) {
    if (std::min(pa.back().h, pa.back().w) < 16) break;
    pa.push_back(downsample(pa.back()));
    pb.push_back(downsample(pb.back()));
  }
  Plane ux, uy;
  double confident = 1.0;
  for (int l = static_cast<int>(pa.size()) - 1; l >= 0; --l) {
    const Plane& a = pa[static_cast<std::size_t>(l)];
    const Plane& b = pb[static_cast<std::size_t>(l)];
    Plane nx(a.h, a.w), ny(a.h, a.w);
    if (!ux.v.empty()) upsample_flow(ux, uy, nx, ny);
    ux = std::move(nx);
    uy = std::move(ny);
    const Expansion e1 = poly_expand(a, cfg.poly_n, cfg.poly_sigma);
    const Expansion e2 = poly_expand(b, cfg.poly_n, cfg.poly_sigma);
    for (int it = 0; it < cfg.iterations; ++it) confident = refine(e1, e2, ux, uy, cfg.window);
  }
  FlowField out(frame_a.height, frame_a.width);
  for (int r = 0; r < out.height; ++r) {
    for (int c = 0; c < out.width; ++c) {
      out.at(r, c, 0) = std::isfinite(ux(r, c)) ? ux(r, c) : 0.0;
      out.at(r, c, 1) = std::isfinite(uy(r, c)) ? uy(r, c) : 0.0;
    }
  }
  out.confident_fraction = confident;
  out.low_confidence = confident < cfg.min_confident_fraction;
  return out;
}

FlowMetrics flow_metrics(const std::vector<FlowField>& real, const std::vector<FlowField>& gen,
                         const FlowMetricOptions& opts) {
  if (real.size() != gen.size()) {
    throw Error(Errc::LengthMismatch, std::to_string(real.size()) + " real flows vs " +
                                          std::to_string(gen.size()) + " generated");
  }
  if (real.empty()) throw Error(Errc::EmptyInput, "no flow fields");
  FlowMetrics m;
  m.tau = opts.tau;
  for (std::size_t t = 0; t < real.size(); ++t) {
    const FlowField& u = real[t];
    const FlowField& v = gen[t];
    if (u.height != v.height || u.width != v.width) {
      throw Error(Errc::DimensionMismatch, "flow fields differ in size at frame " +
                                               std::to_string(t));
    }
    double epe_sum = 0.0, cos_sum = 0.0;
    std::size_t valid = 0;
    const std::size_t n = static_cast<std::size_t>(u.height) * u.width;
    for (std::size_t i = 0; i < n; ++i) {
      const double ux = u.data[2 * i], uy = u.data[2 * i + 1];
      const double vx = v.data[2 * i], vy = v.data[2 * i + 1];
      const double epe = std::hypot(ux - vx, uy - vy);
      const double nu2 = ux * ux + uy * uy, nv2 = vx * vx + vy * vy;
      const bool in_v = std::sqrt(nu2) > opts.tau && std::sqrt(nv2) > opts.tau;
      if (!opts.epe_on_valid_only || in_v) epe_sum += epe;
      if (in_v) {
        ++valid;
        // ||u|| ||v|| evaluated as sqrt(|u|^2 |v|^2), which is exact when u == v.
        cos_sum += (ux * vx + uy * vy) / (std::sqrt(nu2 * nv2) + opts.eps);
      }
    }
    const std::size_t epe_count = opts.epe_on_valid_only ? valid : n;
    m.epe_per_frame.push_back(epe_count > 0 ? epe_sum / static_cast<double>(epe_count) : 0.0);
    m.valid_pixels.push_back(valid);
    if (valid == 0) {
      ++m.skipped_cos_frames;
    } else {
      m.cos_per_frame.push_back(cos_sum / static_cast<double>(valid));
    }
  }
  m.mean_epe = mean(m.epe_per_frame);
  m.median_epe = median(m.epe_per_frame);
  if (!m.cos_per_frame.empty()) {
    m.mean_cos = mean(m.cos_per_frame);
    m.median_cos = median(m.cos_per_frame);
  }
  return m;
}

namespace {

void check_same_shape(const Image& a, const Image& b) {
  if (a.height != b.height || a.width != b.width || a.channels != b.channels) {
    throw Error(Errc::ShapeMismatch, "frames differ in shape");
  }
}

constexpr int kSsimRadius = 5;
constexpr double kSsimSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

std::array<double, 2 * kSsimRadius + 1> ssim_kernel() {
  std::array<double, 2 * kSsimRadius + 1> k{};
  double s = 0.0;
  for (int i = -kSsimRadius; i <= kSsimRadius; ++i) {
    k[i + kSsimRadius] = std::exp(-(i * i) / (2.0 * kSsimSigma * kSsimSigma));
    s += k[i + kSsimRadius];
  }
  for (double& v : k) v /= s;
  return k;
}

// Separable Gaussian filter over the valid region.
Plane filter_valid(const Plane& in) {
  static const auto k = ssim_kernel();
  const int oh = in.h - 2 * kSsimRadius, ow = in.w - 2 * kSsimRadius;
  Plane tmp(in.h, ow), out(oh, ow);
  for (int r = 0; r < in.h; ++r) {
    for (int c = 0; c < ow; ++c) {
      double s = 0.0;
      for (int i = 0; i <= 2 * kSsimRadius; ++i) s += k[i] * in(r, c + i);
      tmp(r, c) = s;
    }
  }
  for (int r = 0; r < oh; ++r) {
    for (int c = 0; c < ow; ++c) {
      double s = 0.0;
      for (int i = 0; i <= 2 * kSsimRadius; ++i) s += k[i] * tmp(r + i, c);
      out(r, c) = s;
    }
  }
  return out;
}

Plane channel(const Image& img, int ch) {
  Plane p(img.height, img.width);
  for (int r = 0; r < img.height; ++r) {
    for (int c = 0; c < img.width; ++c) p(r, c) = img.at(r, c, ch);
  }
  return p;
}

Plane product(const Plane& a, const Plane& b) {
  Plane out(a.h, a.w);
  for (std::size_t i = 0; i < a.v.size(); ++i) out.v[i] = a.v[i] * b.v[i];
  return out;
}

Image difference_frame(const Image& next, const Image& prev) {
  Image d(next.height, next.width, next.channels);
  for (std::size_t i = 0; i < d.data.size(); ++i) {
    d.data[i] = 0.5 * (next.data[i] - prev.data[i] + 1.0);
  }
  return d;
}

}  // namespace

double psnr(const Image& a, const Image& b) {
  check_same_shape(a, b);
  if (a.data.empty()) throw Error(Errc::EmptyInput, "empty frame");
  double se = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = a.data[i] - b.data[i];
    se += d * d;
  }
  const double mse = se / static_cast<double>(a.data.size());
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double ssim(const Image& a, const Image& b) {
  check_same_shape(a, b);
  if (a.height <= 2 * kSsimRadius || a.width <= 2 * kSsimRadius) {
    throw Error(Errc::TooSmall, "SSIM needs frames larger than 11x11");
  }
  double total = 0.0;
  for (int ch = 0; ch < a.channels; ++ch) {
    const Plane x = channel(a, ch), y = channel(b, ch);
    const Plane mx = filter_valid(x), my = filter_valid(y);
    const Plane sxx = filter_valid(product(x, x)), syy = filter_valid(product(y, y));
    const Plane sxy = filter_valid(product(x, y));
    double s = 0.0;
    for (std::size_t i = 0; i < mx.v.size(); ++i) {
      const double mux = mx.v[i], muy = my.v[i];
      const double vx = sxx.v[i] - mux * mux, vy = syy.v[i] - muy * muy;
      const double cxy = sxy.v[i] - mux * muy;
      s += ((2 * mux * muy + kC1) * (2 * cxy + kC2)) /
           ((mux * mux + muy * muy + kC1) * (vx + vy + kC2));
    }
    total += s / static_cast<double>(mx.v.size());
  }
  return total / static_cast<double>(a.channels);
}

VisualMetrics visual_metrics(const std::vector<Image>& real, const std::vector<Image>& gen) {
  if (real.size() != gen.size()) {
    throw Error(Errc::ShapeMismatch, "videos differ in frame count");
  }
  if (real.empty()) throw Error(Errc::EmptyInput, "no frames");
  VisualMetrics out;
  for (std::size_t t = 0; t < real.size(); ++t) {
    out.psnr += psnr(real[t], gen[t]);
    out.ssim += ssim(real[t], gen[t]);
  }
  out.psnr /= static_cast<double>(real.size());
  out.ssim /= static_cast<double>(real.size());
  if (real.size() >= 2) {
    double t_sum = 0.0;
    for (std::size_t t = 0; t + 1 < real.size(); ++t) {
      t_sum += ssim(difference_frame(real[t + 1], real[t]), difference_frame(gen[t + 1], gen[t]));
    }
    out.tssim = t_sum / static_cast<double>(real.size() - 1);
  }
  return out;
}

std::vector<FlowField> sequence_flow(const std::vector<Image>& frames,
                                     const FarnebackConfig& cfg) {
  std::vector<FlowField> out;
  for (std::size_t t = 0; t + 1 < frames.size(); ++t) {
    out.push_back(estimate_flow(frames[t], frames[t + 1], cfg));
  }
  return out;
}

FlowEvalRow evaluate_videos(const std::vector<Image>& real, const std::vector<Image>& gen,
                            const FarnebackConfig& flow_cfg, const FlowMetricOptions& opts) {
  FlowEvalRow row;
  row.visual = visual_metrics(real, gen);
  if (real.size() < 2) throw Error(Errc::EmptyInput, "flow needs at least two frames");
  row.flow = flow_metrics(sequence_flow(real, flow_cfg), sequence_flow(gen, flow_cfg), opts);
  return row;
}

}  // namespace wmrl
