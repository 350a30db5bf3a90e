#pragma once

#include <cstddef>
#include <vector>

#include "wmrl/tensor.hpp"

namespace wmrl {

struct FlowScaleConfig {
  double p = 0.5;
  double alpha = 0.1;
  double w_min = 0.5;
  double w_max = 2.0;
  double eps = 1e-8;

  void validate() const;
};

struct ClipConfig {
  double eps_low = 0.2;
  double eps_high = 0.2;
  double beta = 0.01;  // KL coefficient

  void validate() const;
};

// Per-update training tensors. Shapes: logp tensors [B,S,K,CH,D], std
// [B,S,K], mask [B,S,CH]; rewards and groups have length B.
struct TrajectoryBatch {
  Tensor logp_elem;
  Tensor old_logp_elem;
  Tensor ref_logp_elem;
  Tensor std;
  Tensor mask;
  std::vector<double> rewards;
  std::vector<std::size_t> groups;

  static TrajectoryBatch zeros(std::size_t b, std::size_t s, std::size_t k, std::size_t ch,
                               std::size_t d);

  [[nodiscard]] std::size_t batch() const { return logp_elem.dim(0); }
  [[nodiscard]] std::size_t outer_steps() const { return logp_elem.dim(1); }
  [[nodiscard]] std::size_t flow_steps() const { return logp_elem.dim(2); }
  [[nodiscard]] std::size_t chunk_len() const { return logp_elem.dim(3); }
  [[nodiscard]] std::size_t action_dim() const { return logp_elem.dim(4); }

  // Shapes agree and every mask row is prefix-monotone. Throws ShapeMismatch.
  void validate() const;
};

// (R - mean_G) / (std_G + eps_r) per group, population std. Throws EmptyGroup
// when a group id in [0, max id] has no members.
std::vector<double> group_normalize(const std::vector<double>& rewards,
                                    const std::vector<std::size_t>& groups, double eps_r);

// [B,S,CH] advantages normed[b] * mask[b,s,c].
Tensor broadcast_advantages(const std::vector<double>& normed, const Tensor& mask);

inline constexpr double kRatioExponentLimit = 80.0;

struct RatioResult {
  Tensor ratios;          // [B,S,CH,D]
  Tensor clamped_mask;    // [B,S,CH,D], 1 where the exponent was clamped
  std::size_t clamped = 0;
};

// exp(sum_k logp - sum_k old_logp), exponent clamped to +-80 (counted).
// Throws NonFiniteValue on non-finite log-probabilities.
RatioResult action_ratios(const TrajectoryBatch& batch);

// Order: (std^2 + eps)^p, divide by the mean over k, mix with alpha,
// clip. premix (optional) receives the normalized weights before mixing.
// Throws NonPositiveStd.
Tensor flowscale_weights(const Tensor& std, const FlowScaleConfig& cfg, Tensor* premix = nullptr);

// min(r A, clip(r, 1 - eps_low, 1 + eps_high) A) and its derivative in r.
double clip_objective(double r, double a, const ClipConfig& clip);
double clip_objective_dr(double r, double a, const ClipConfig& clip);

// Where FlowScale weights enter. Both placements give the same gradient.
enum class WeightPlacement { Advantage, LogProb };

struct LossResult {
  double loss = 0.0;         // policy_term + beta * kl
  double policy_term = 0.0;  // -sum M f_clip(r, A)
  double kl = 0.0;           // masked mean of logp - ref_logp
  Tensor grad_logp;          // d loss / d logp_elem, [B,S,K,CH,D]
  double clip_fraction = 0.0;
  std::size_t clamped = 0;
  std::size_t active = 0;  // unmasked (b,s,c,d) ratio elements
};

// FA-GRPO: one ratio per (b,s,c,d) from the K-summed log-likelihood. Weights
// [B,S,K] are stop-gradient coefficients: they scale the gradient reaching
// logp_elem[b,s,k] and leave the loss value unchanged at the current point.
// Throws ShapeMismatch, NonFiniteValue.
LossResult fa_grpo_loss(const TrajectoryBatch& batch, const Tensor& advantages,
                        const Tensor* weights, const ClipConfig& clip,
                        WeightPlacement placement = WeightPlacement::Advantage);

// Value of the weighted surrogate whose plain gradient is the FlowScale
// gradient: the policy term sees anchor + w * (logp - anchor) per step k,
// the KL term sees logp. Equals fa_grpo_loss().loss when logp == anchor.
double fa_grpo_surrogate(const TrajectoryBatch& batch, const Tensor& advantages,
                         const Tensor* weights, const Tensor& anchor, const ClipConfig& clip);

// Per-step Flow-GRPO baseline: a separate ratio for every flow step k.
LossResult flow_grpo_loss(const TrajectoryBatch& batch, const Tensor& advantages,
                          const ClipConfig& clip);

}  // namespace wmrl
