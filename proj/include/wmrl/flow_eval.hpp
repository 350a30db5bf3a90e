#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "wmrl/image.hpp"

namespace wmrl {

// Dense displacement field, [H, W, 2] with component 0 = x (columns) and
// component 1 = y (rows), in pixels per frame.
struct FlowField {
  int height = 0;
  int width = 0;
  std::vector<double> data;
  bool low_confidence = false;
  double confident_fraction = 1.0;  // pixels whose local system was well conditioned

  FlowField() = default;
  FlowField(int h, int w, double ux = 0.0, double uy = 0.0);

  double& at(int row, int col, int comp) {
    return data[(static_cast<std::size_t>(row) * width + col) * 2 + comp];
  }
  [[nodiscard]] double at(int row, int col, int comp) const {
    return data[(static_cast<std::size_t>(row) * width + col) * 2 + comp];
  }
};

struct FarnebackConfig {
  int levels = 3;
  int window = 9;       // box window for the local least-squares solve
  int iterations = 2;   // per pyramid level
  int poly_n = 2;       // expansion neighbourhood radius (5x5)
  double poly_sigma = 1.1;
  double min_confident_fraction = 0.5;
};

// Multi-scale polynomial-expansion flow such that a(x) ~ b(x + u(x)).
// Inputs are converted to grayscale. Throws DimensionMismatch, TooSmall
// (either side below 16 pixels).
FlowField estimate_flow(const Image& frame_a, const Image& frame_b,
                        const FarnebackConfig& cfg = {});

struct FlowMetricOptions {
  double tau = 0.2;
  double eps = 1e-8;
  bool epe_on_valid_only = false;  // alternative reading: EPE over V_t only
};

struct FlowMetrics {
  double mean_epe = 0.0;
  double median_epe = 0.0;
  std::optional<double> mean_cos;  // absent when every frame had an empty V_t
  std::optional<double> median_cos;
  std::vector<double> epe_per_frame;
  std::vector<double> cos_per_frame;  // only frames with non-empty V_t
  std::vector<std::size_t> valid_pixels;
  std::size_t skipped_cos_frames = 0;
  double tau = 0.2;
};

// Throws LengthMismatch, DimensionMismatch, EmptyInput.
FlowMetrics flow_metrics(const std::vector<FlowField>& real, const std::vector<FlowField>& gen,
                         const FlowMetricOptions& opts = {});

inline constexpr double kPsnrCap = 99.0;

// MAX = 1, capped at kPsnrCap when the frames are identical.
double psnr(const Image& a, const Image& b);
// Gaussian 11x11 window (sigma 1.5), C1 = 0.01^2, C2 = 0.03^2, valid region,
// averaged over channels.
double ssim(const Image& a, const Image& b);

struct VisualMetrics {
  double psnr = 0.0;
  double ssim = 0.0;
  std::optional<double> tssim;  // needs at least two frames
};

// Means over frames. tSSIM is SSIM of the consecutive difference frames
// mapped to [0,1] via (d + 1) / 2. Throws ShapeMismatch, EmptyInput.
VisualMetrics visual_metrics(const std::vector<Image>& real, const std::vector<Image>& gen);

// Flow between consecutive frames of a sequence.
std::vector<FlowField> sequence_flow(const std::vector<Image>& frames,
                                     const FarnebackConfig& cfg = {});

struct FlowEvalRow {
  VisualMetrics visual;
  FlowMetrics flow;
};

FlowEvalRow evaluate_videos(const std::vector<Image>& real, const std::vector<Image>& gen,
                            const FarnebackConfig& flow_cfg = {},
                            const FlowMetricOptions& opts = {});

}  // namespace wmrl
