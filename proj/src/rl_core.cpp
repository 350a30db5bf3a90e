#include "wmrl/rl_core.hpp"

#include <algorithm>
#include <cmath>

#include "wmrl/error.hpp"

namespace wmrl {

void FlowScaleConfig::validate() const {
  if (!(p > 0.0)) throw Error(Errc::InvalidArgument, "FlowScale p must be > 0");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error(Errc::InvalidArgument, "alpha outside [0,1]");
  if (!(w_min > 0.0 && w_min <= 1.0 && w_max >= 1.0)) {
    throw Error(Errc::InvalidArgument, "need 0 < w_min <= 1 <= w_max");
  }
  if (!(eps >= 0.0)) throw Error(Errc::InvalidArgument, "FlowScale eps must be >= 0");
}

void ClipConfig::validate() const {
  if (!(eps_low > 0.0 && eps_low < 1.0)) throw Error(Errc::InvalidArgument, "eps_low outside (0,1)");
  if (!(eps_high > 0.0)) throw Error(Errc::InvalidArgument, "eps_high must be > 0");
  if (!(beta >= 0.0)) throw Error(Errc::InvalidArgument, "KL coefficient must be >= 0");
}

TrajectoryBatch TrajectoryBatch::zeros(std::size_t b, std::size_t s, std::size_t k,
                                       std::size_t ch, std::size_t d) {
  TrajectoryBatch t;
  t.logp_elem = Tensor({b, s, k, ch, d});
  t.old_logp_elem = Tensor({b, s, k, ch, d});
  t.ref_logp_elem = Tensor({b, s, k, ch, d});
  t.std = Tensor({b, s, k}, 1.0);
  t.mask = Tensor({b, s, ch});
  t.rewards.assign(b, 0.0);
  t.groups.assign(b, 0);
  return t;
}

void TrajectoryBatch::validate() const {
  if (logp_elem.rank() != 5) throw Error(Errc::ShapeMismatch, "logp_elem must be [B,S,K,CH,D]");
  if (!old_logp_elem.same_shape(logp_elem) || !ref_logp_elem.same_shape(logp_elem)) {
    throw Error(Errc::ShapeMismatch, "log-probability tensors disagree in shape");
  }
  const std::size_t b = batch(), s = outer_steps(), k = flow_steps(), ch = chunk_len();
  if (std.shape() != std::vector<std::size_t>{b, s, k}) {
    throw Error(Errc::ShapeMismatch, "std must be [B,S,K], got " + std.shape_string());
  }
  if (mask.shape() != std::vector<std::size_t>{b, s, ch}) {
    throw Error(Errc::ShapeMismatch, "mask must be [B,S,CH], got " + mask.shape_string());
  }
  if (rewards.size() != b || groups.size() != b) {
    throw Error(Errc::ShapeMismatch, "rewards and groups need one entry per episode");
  }
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t c = 0; c < ch; ++c) {
      bool closed = false;
      for (std::size_t j = 0; j < s; ++j) {
        const double m = mask(i, j, c);
        if (m != 0.0 && m != 1.0) throw Error(Errc::ShapeMismatch, "mask entries must be 0 or 1");
        if (closed && m != 0.0) {
          throw Error(Errc::ShapeMismatch, "mask is not prefix-monotone for episode " +
                                               std::to_string(i));
        }
        closed = closed || m == 0.0;
      }
    }
  }
}

std::vector<double> group_normalize(const std::vector<double>& rewards,
                                    const std::vector<std::size_t>& groups, double eps_r) {
  if (rewards.size() != groups.size()) {
    throw Error(Errc::ShapeMismatch, "rewards and group ids differ in length");
  }
  if (rewards.empty()) throw Error(Errc::EmptyGroup, "no rewards to normalize");
  const std::size_t n_groups = *std::max_element(groups.begin(), groups.end()) + 1;
  std::vector<double> sum(n_groups, 0.0), sq(n_groups, 0.0);
  std::vector<std::size_t> count(n_groups, 0);
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    sum[groups[i]] += rewards[i];
    ++count[groups[i]];
  }
  for (std::size_t g = 0; g < n_groups; ++g) {
    if (count[g] == 0) throw Error(Errc::EmptyGroup, "group " + std::to_string(g) + " is empty");
  }
  std::vector<double> mean(n_groups);
  for (std::size_t g = 0; g < n_groups; ++g) mean[g] = sum[g] / static_cast<double>(count[g]);
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    const double d = rewards[i] - mean[groups[i]];
    sq[groups[i]] += d * d;
  }
  std::vector<double> out(rewards.size());
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    const std::size_t g = groups[i];
    const double sd = std::sqrt(sq[g] / static_cast<double>(count[g]));
    out[i] = (rewards[i] - mean[g]) / (sd + eps_r);
  }
  return out;
}

Tensor broadcast_advantages(const std::vector<double>& normed, const Tensor& mask) {
  if (mask.rank() != 3 || mask.dim(0) != normed.size()) {
    throw Error(Errc::ShapeMismatch, "mask " + mask.shape_string() + " vs " +
                                         std::to_string(normed.size()) + " advantages");
  }
  Tensor adv(mask.shape());
  const std::size_t per = mask.dim(1) * mask.dim(2);
  for (std::size_t b = 0; b < normed.size(); ++b) {
    const auto m = mask.slice(b);
    auto a = adv.slice(b);
    for (std::size_t i = 0; i < per; ++i) a[i] = normed[b] * m[i];
  }
  return adv;
}

namespace {

void check_finite(const Tensor& t, const char* name) {
  for (double v : t.flat()) {
    if (!std::isfinite(v)) throw Error(Errc::NonFiniteValue, std::string(name) + " is not finite");
  }
}

// exponent = sum_k (x' - old) where x' = anchor + w (x - anchor) when an
// anchor is given, else x.
RatioResult ratios_from(const TrajectoryBatch& batch, const Tensor* weights,
                        const Tensor* anchor) {
  check_finite(batch.logp_elem, "logp_elem");
  check_finite(batch.old_logp_elem, "old_logp_elem");
  const std::size_t B = batch.batch(), S = batch.outer_steps(), K = batch.flow_steps();
  const std::size_t CH = batch.chunk_len(), D = batch.action_dim();
  RatioResult out;
  out.ratios = Tensor({B, S, CH, D});
  out.clamped_mask = Tensor({B, S, CH, D});
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t s = 0; s < S; ++s) {
      for (std::size_t c = 0; c < CH; ++c) {
        for (std::size_t d = 0; d < D; ++d) {
          double expo = 0.0;
          for (std::size_t k = 0; k < K; ++k) {
            double x = batch.logp_elem(b, s, k, c, d);
            if (anchor != nullptr) {
              const double x0 = (*anchor)(b, s, k, c, d);
              const double w = weights != nullptr ? (*weights)(b, s, k) : 1.0;
              x = x0 + w * (x - x0);
            }
            expo += x - batch.old_logp_elem(b, s, k, c, d);
          }
          if (std::abs(expo) > kRatioExponentLimit) {
            expo = std::clamp(expo, -kRatioExponentLimit, kRatioExponentLimit);
            out.clamped_mask(b, s, c, d) = 1.0;
            ++out.clamped;
          }
          out.ratios(b, s, c, d) = std::exp(expo);
        }
      }
    }
  }
  return out;
}

void check_loss_shapes(const TrajectoryBatch& batch, const Tensor& adv, const Tensor* weights) {
  batch.validate();
  if (!adv.same_shape(batch.mask)) {
    throw Error(Errc::ShapeMismatch, "advantages " + adv.shape_string() + " vs mask " +
                                         batch.mask.shape_string());
  }
  if (weights != nullptr && !weights->same_shape(batch.std)) {
    throw Error(Errc::ShapeMismatch, "weights must be [B,S,K], got " + weights->shape_string());
  }
}

// Masked mean of (logp - ref) and its per-element gradient scale.
double kl_term(const TrajectoryBatch& batch, double* grad_scale) {
  check_finite(batch.ref_logp_elem, "ref_logp_elem");
  const std::size_t B = batch.batch(), S = batch.outer_steps(), K = batch.flow_steps();
  const std::size_t CH = batch.chunk_len(), D = batch.action_dim();
  double total = 0.0;
  std::size_t n = 0;
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t s = 0; s < S; ++s) {
      for (std::size_t c = 0; c < CH; ++c) {
        if (batch.mask(b, s, c) == 0.0) continue;
        for (std::size_t k = 0; k < K; ++k) {
          for (std::size_t d = 0; d < D; ++d) {
            total += batch.logp_elem(b, s, k, c, d) - batch.ref_logp_elem(b, s, k, c, d);
          }
        }
        n += K * D;
      }
    }
  }
  *grad_scale = n > 0 ? 1.0 / static_cast<double>(n) : 0.0;
  return n > 0 ? total / static_cast<double>(n) : 0.0;
}

}  // namespace

RatioResult action_ratios(const TrajectoryBatch& batch) {
  return ratios_from(batch, nullptr, nullptr);
}

Tensor flowscale_weights(const Tensor& std, const FlowScaleConfig& cfg, Tensor* premix) {
  cfg.validate();
  if (std.rank() < 1 || std.size() == 0) throw Error(Errc::ShapeMismatch, "empty std tensor");
  const std::size_t K = std.shape().back();
  const std::size_t rows = std.size() / K;
  Tensor w(std.shape());
  if (premix != nullptr) *premix = Tensor(std.shape());
  const auto in = std.flat();
  auto out = w.flat();
  std::vector<double> tilde(K);
  for (std::size_t r = 0; r < rows; ++r) {
    double mean = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      const double s = in[r * K + k];
      if (!(s > 0.0)) {
        throw Error(Errc::NonPositiveStd, "std at flat index " + std::to_string(r * K + k) +
                                              " is not positive");
      }
      tilde[k] = std::pow(s * s + cfg.eps, cfg.p);
      mean += tilde[k];
    }
    mean /= static_cast<double>(K);
    for (std::size_t k = 0; k < K; ++k) {
      const double bar = tilde[k] / mean;
      if (premix != nullptr) premix->flat()[r * K + k] = bar;
      const double mixed = cfg.alpha + (1.0 - cfg.alpha) * bar;
      out[r * K + k] = std::clamp(mixed, cfg.w_min, cfg.w_max);
    }
  }
  return w;
}

double clip_objective(double r, double a, const ClipConfig& clip) {
  const double rc = std::clamp(r, 1.0 - clip.eps_low, 1.0 + clip.eps_high);
  return std::min(r * a, rc * a);
}

double clip_objective_dr(double r, double a, const ClipConfig& clip) {
  const double rc = std::clamp(r, 1.0 - clip.eps_low, 1.0 + clip.eps_high);
  // The clipped branch is constant in r.
  return r * a <= rc * a ? a : 0.0;
}

LossResult fa_grpo_loss(const TrajectoryBatch& batch, const Tensor& advantages,
                        const Tensor* weights, const ClipConfig& clip,
                        WeightPlacement placement) {
  clip.validate();
  check_loss_shapes(batch, advantages, weights);
  const std::size_t B = batch.batch(), S = batch.outer_steps(), K = batch.flow_steps();
  const std::size_t CH = batch.chunk_len(), D = batch.action_dim();

  const RatioResult rr = ratios_from(batch, nullptr, nullptr);
  LossResult out;
  out.clamped = rr.clamped;
  out.grad_logp = Tensor(batch.logp_elem.shape());
  double kl_scale = 0.0;
  out.kl = kl_term(batch, &kl_scale);

  std::size_t clipped = 0;
  double policy = 0.0;
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t s = 0; s < S; ++s) {
      for (std::size_t c = 0; c < CH; ++c) {
        const double m = batch.mask(b, s, c);
        if (m == 0.0) continue;
        const double a = advantages(b, s, c);
        for (std::size_t d = 0; d < D; ++d) {
          const double r = rr.ratios(b, s, c, d);
          policy -= m * clip_objective(r, a, clip);
          ++out.active;
          const bool frozen = rr.clamped_mask(b, s, c, d) != 0.0;
          const double dr = clip_objective_dr(r, a, clip);
          if (a != 0.0 && dr == 0.0) ++clipped;
          for (std::size_t k = 0; k < K; ++k) {
            const double w = weights != nullptr ? (*weights)(b, s, k) : 1.0;
            double g = 0.0;
            if (!frozen) {
              g = placement == WeightPlacement::Advantage
                      ? -m * clip_objective_dr(r, w * a, clip) * r
                      : w * (-m * dr * r);
            }
            out.grad_logp(b, s, k, c, d) = g + clip.beta * m * kl_scale;
          }
        }
      }
    }
  }
  out.policy_term = policy;
  out.loss = policy + clip.beta * out.kl;
  out.clip_fraction =
      out.active > 0 ? static_cast<double>(clipped) / static_cast<double>(out.active) : 0.0;
  return out;
}

double fa_grpo_surrogate(const TrajectoryBatch& batch, const Tensor& advantages,
                         const Tensor* weights, const Tensor& anchor, const ClipConfig& clip) {
  clip.validate();
  check_loss_shapes(batch, advantages, weights);
  if (!anchor.same_shape(batch.logp_elem)) throw Error(Errc::ShapeMismatch, "anchor shape");
  const RatioResult rr = ratios_from(batch, weights, &anchor);
  double policy = 0.0;
  for (std::size_t b = 0; b < batch.batch(); ++b) {
    for (std::size_t s = 0; s < batch.outer_steps(); ++s) {
      for (std::size_t c = 0; c < batch.chunk_len(); ++c) {
        const double m = batch.mask(b, s, c);
        if (m == 0.0) continue;
        for (std::size_t d = 0; d < batch.action_dim(); ++d) {
          policy -= m * clip_objective(rr.ratios(b, s, c, d), advantages(b, s, c), clip);
        }
      }
    }
  }
  double kl_scale = 0.0;
  return policy + clip.beta * kl_term(batch, &kl_scale);
}

LossResult flow_grpo_loss(const TrajectoryBatch& batch, const Tensor& advantages,
                          const ClipConfig& clip) {
  clip.validate();
  check_loss_shapes(batch, advantages, nullptr);
  check_finite(batch.logp_elem, "logp_elem");
  check_finite(batch.old_logp_elem, "old_logp_elem");
  const std::size_t B = batch.batch(), S = batch.outer_steps(), K = batch.flow_steps();
  const std::size_t CH = batch.chunk_len(), D = batch.action_dim();
  LossResult out;
  out.grad_logp = Tensor(batch.logp_elem.shape());
  double kl_scale = 0.0;
  out.kl = kl_term(batch, &kl_scale);
  std::size_t clipped = 0;
  double policy = 0.0;
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t s = 0; s < S; ++s) {
      for (std::size_t c = 0; c < CH; ++c) {
        const double m = batch.mask(b, s, c);
        if (m == 0.0) continue;
        const double a = advantages(b, s, c);
        for (std::size_t k = 0; k < K; ++k) {
          for (std::size_t d = 0; d < D; ++d) {
            double expo = batch.logp_elem(b, s, k, c, d) - batch.old_logp_elem(b, s, k, c, d);
            bool frozen = false;
            if (std::abs(expo) > kRatioExponentLimit) {
              expo = std::clamp(expo, -kRatioExponentLimit, kRatioExponentLimit);
              frozen = true;
              ++out.clamped;
            }
            const double r = std::exp(expo);
            policy -= m * clip_objective(r, a, clip);
            ++out.active;
            const double dr = clip_objective_dr(r, a, clip);
            if (a != 0.0 && dr == 0.0) ++clipped;
            out.grad_logp(b, s, k, c, d) =
                (frozen ? 0.0 : -m * dr * r) + clip.beta * m * kl_scale;
          }
        }
      }
    }
  }
  out.policy_term = policy;
  out.loss = policy + clip.beta * out.kl;
  out.clip_fraction =
      out.active > 0 ? static_cast<double>(clipped) / static_cast<double>(out.active) : 0.0;
  return out;
}

}  // namespace wmrl
