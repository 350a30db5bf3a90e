#include "wmrl/flow_policy.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "wmrl/error.hpp"

namespace wmrl {

namespace {

const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

}  // namespace

NoiseSchedule::NoiseSchedule(std::vector<double> table, std::size_t steps)
    : table_(std::move(table)), steps_(steps) {
  if (steps_ < 1) throw Error(Errc::InvalidArgument, "schedule needs K >= 1");
  if (table_.empty()) throw Error(Errc::InvalidArgument, "empty sigma table");
  for (double s : table_) {
    if (!(s > 0.0) || !std::isfinite(s)) {
      throw Error(Errc::InvalidArgument, "sigma table entries must be positive and finite");
    }
  }
}

NoiseSchedule NoiseSchedule::linear_ramp(double sigma_start, double sigma_end, std::size_t entries,
                                         std::size_t steps) {
  if (entries < 2) return constant(sigma_start, steps);
  std::vector<double> table(entries);
  for (std::size_t i = 0; i < entries; ++i) {
    const double f = static_cast<double>(i) / static_cast<double>(entries - 1);
    table[i] = sigma_start + (sigma_end - sigma_start) * f;
  }
  return NoiseSchedule(std::move(table), steps);
}

NoiseSchedule NoiseSchedule::constant(double sigma, std::size_t steps) {
  return NoiseSchedule(std::vector<double>{sigma}, steps);
}

double NoiseSchedule::sigma(double t) const {
  if (table_.size() == 1) return table_.front();
  const double pos = std::clamp(t, 0.0, 1.0) * static_cast<double>(table_.size() - 1);
  const auto idx = static_cast<std::size_t>(std::floor(pos + 0.5));
  return table_[std::min(idx, table_.size() - 1)];
}

double noise_std(const NoiseSchedule& schedule, std::size_t k) {
  if (k >= schedule.steps()) {
    throw Error(Errc::IndexOutOfRange,
                "step " + std::to_string(k) + " with K = " + std::to_string(schedule.steps()));
  }
  return std::sqrt(schedule.sigma(schedule.time(k))) * std::sqrt(schedule.dt());
}

std::span<const double> SampledAction::final_iterate() const {
  return iterates.slice(iterates.dim(0) - 1);
}

FlowPolicy::FlowPolicy(const PolicyConfig& cfg, NoiseSchedule schedule, std::uint64_t init_seed)
    : cfg_(cfg),
      schedule_(std::move(schedule)),
      net_({cfg.obs_dim + cfg.chunk_len * kActionDim + kTimeFeatures, cfg.hidden,
            cfg.chunk_len * kActionDim}) {
  if (cfg.chunk_len < 1) throw Error(Errc::InvalidArgument, "chunk length must be >= 1");
  theta_.resize(net_.num_params());
  Rng rng(init_seed);
  net_.init(theta_, rng, cfg.init_scale);
  theta_old_ = theta_;
  theta_ref_ = theta_;
}

FlowPolicy::FlowPolicy(const PolicyConfig& cfg, NoiseSchedule schedule, std::vector<double> theta)
    : cfg_(cfg),
      schedule_(std::move(schedule)),
      net_({cfg.obs_dim + cfg.chunk_len * kActionDim + kTimeFeatures, cfg.hidden,
            cfg.chunk_len * kActionDim}),
      theta_(std::move(theta)) {
  if (theta_.size() != net_.num_params()) {
    throw Error(Errc::ShapeMismatch, "parameter count does not match the architecture");
  }
  theta_old_ = theta_;
  theta_ref_ = theta_;
}

std::span<const double> FlowPolicy::params(ParamSet which) const {
  switch (which) {
    case ParamSet::Current: return theta_;
    case ParamSet::Behavior: return theta_old_;
    case ParamSet::Reference: return theta_ref_;
  }
  return theta_;
}

std::array<double, FlowPolicy::kTimeFeatures> FlowPolicy::time_features(double t) {
  const double w = std::numbers::pi * t;
  return {std::cos(w), std::sin(w), std::cos(2.0 * w), std::sin(2.0 * w)};
}

void FlowPolicy::build_input(std::span<const double> obs, std::span<const double> a, double t,
                             std::vector<double>& x) const {
  if (obs.size() != cfg_.obs_dim) {
    throw Error(Errc::ShapeMismatch, "observation has " + std::to_string(obs.size()) +
                                         " features, expected " + std::to_string(cfg_.obs_dim));
  }
  if (a.size() != action_size()) throw Error(Errc::ShapeMismatch, "action iterate size");
  x.clear();
  x.insert(x.end(), obs.begin(), obs.end());
  x.insert(x.end(), a.begin(), a.end());
  const auto tf = time_features(t);
  x.insert(x.end(), tf.begin(), tf.end());
}

void FlowPolicy::velocity(ParamSet which, std::span<const double> obs, std::span<const double> a,
                          double t, std::span<double> out, Mlp::Cache* cache) const {
  std::vector<double> x;
  build_input(obs, a, t, x);
  net_.forward(params(which), x, out, cache);
}

SampledAction FlowPolicy::sample_chunk(std::span<const double> obs, Rng& rng,
                                       const SampleOptions& opts) const {
  for (double o : obs) {
    if (!std::isfinite(o)) throw Error(Errc::NonFiniteValue, "observation is not finite");
  }
  const std::size_t steps = schedule_.steps();
  const std::size_t ch = cfg_.chunk_len;
  const std::size_t n = action_size();
  const double dt = schedule_.dt();

  SampledAction out;
  out.iterates = Tensor({steps + 1, ch, kActionDim});
  out.noises = Tensor({steps, ch, kActionDim});
  out.stds.resize(steps);

  auto a0 = out.iterates.slice(0);
  if (opts.stochastic) {
    for (double& v : a0) v = rng.normal();
  }
  std::vector<double> v(n);
  for (std::size_t k = 0; k < steps; ++k) {
    const double std_k = opts.stochastic ? noise_std(schedule_, k) : 0.0;
    out.stds[k] = std_k;
    const auto a = out.iterates.slice(k);
    velocity(opts.params, obs, a, schedule_.time(k), v);
    auto eps = out.noises.slice(k);
    auto next = out.iterates.slice(k + 1);
    for (std::size_t i = 0; i < n; ++i) {
      eps[i] = opts.stochastic ? rng.normal() : 0.0;
      next[i] = a[i] + v[i] * dt + std_k * eps[i];
      if (!std::isfinite(next[i])) {
        throw Error(Errc::NonFiniteValue, "action iterate diverged at step " + std::to_string(k));
      }
    }
  }
  const auto final_it = out.final_iterate();
  out.action = ActionChunk(ch);
  for (std::size_t c = 0; c < ch; ++c) {
    out.action.set_delta(c, cfg_.scaling.to_physical(final_it.subspan(c * kActionDim, kActionDim)));
  }
  return out;
}

void FlowPolicy::check_schedule(const SampledAction& sampled) const {
  const std::size_t steps = schedule_.steps();
  if (sampled.stds.size() != steps || sampled.iterates.rank() != 3 ||
      sampled.iterates.dim(0) != steps + 1) {
    throw Error(Errc::ScheduleMismatch, "sample was drawn with a different step count");
  }
  if (sampled.iterates.dim(1) != cfg_.chunk_len || sampled.iterates.dim(2) != kActionDim) {
    throw Error(Errc::ShapeMismatch, "sample chunk shape");
  }
  for (std::size_t k = 0; k < steps; ++k) {
    if (sampled.stds[k] != noise_std(schedule_, k)) {
      throw Error(Errc::ScheduleMismatch, "sample noise std differs from the schedule");
    }
  }
}

Tensor FlowPolicy::logprob_elements(ParamSet which, std::span<const double> obs,
                                    const SampledAction& sampled) const {
  check_schedule(sampled);
  const std::size_t steps = schedule_.steps();
  const std::size_t n = action_size();
  const double dt = schedule_.dt();
  Tensor out({steps, cfg_.chunk_len, kActionDim});
  std::vector<double> v(n);
  for (std::size_t k = 0; k < steps; ++k) {
    const auto a = sampled.iterates.slice(k);
    const auto next = sampled.iterates.slice(k + 1);
    velocity(which, obs, a, schedule_.time(k), v);
    const double s = sampled.stds[k];
    const double log_s = std::log(s);
    auto lp = out.slice(k);
    for (std::size_t i = 0; i < n; ++i) {
      const double z = (next[i] - (a[i] + v[i] * dt)) / s;
      lp[i] = -0.5 * z * z - log_s - kHalfLog2Pi;
    }
  }
  return out;
}

double FlowPolicy::path_logprob(ParamSet which, std::span<const double> obs,
                                const SampledAction& sampled) const {
  check_schedule(sampled);
  const std::size_t steps = schedule_.steps();
  const std::size_t n = action_size();
  const double dt = schedule_.dt();
  std::vector<double> per_elem(n, 0.0);
  std::vector<double> v(n);
  for (std::size_t k = 0; k < steps; ++k) {
    const auto a = sampled.iterates.slice(k);
    const auto next = sampled.iterates.slice(k + 1);
    velocity(which, obs, a, schedule_.time(k), v);
    const double s = sampled.stds[k];
    const double log_s = std::log(s);
    for (std::size_t i = 0; i < n; ++i) {
      const double z = (next[i] - (a[i] + v[i] * dt)) / s;
      per_elem[i] += -0.5 * z * z - log_s - kHalfLog2Pi;
    }
  }
  double total = 0.0;
  for (double x : per_elem) total += x;
  return total;
}

void FlowPolicy::grad_logprob(std::span<const double> obs, const SampledAction& sampled,
                              const Tensor& upstream, std::span<double> grad) const {
  check_schedule(sampled);
  const std::size_t steps = schedule_.steps();
  if (upstream.shape() != std::vector<std::size_t>{steps, cfg_.chunk_len, kActionDim}) {
    throw Error(Errc::ShapeMismatch, "upstream must be [K, CH, 7], got " + upstream.shape_string());
  }
  if (grad.size() != num_params()) throw Error(Errc::ShapeMismatch, "gradient buffer size");
  const std::size_t n = action_size();
  const double dt = schedule_.dt();
  std::vector<double> x, v(n), dv(n);
  Mlp::Cache cache;
  for (std::size_t k = 0; k < steps; ++k) {
    const auto up = upstream.slice(k);
    bool any = false;
    for (double u : up) any = any || u != 0.0;
    if (!any) continue;
    const auto a = sampled.iterates.slice(k);
    const auto next = sampled.iterates.slice(k + 1);
    build_input(obs, a, schedule_.time(k), x);
    net_.forward(theta_, x, v, &cache);
    const double s = sampled.stds[k];
    for (std::size_t i = 0; i < n; ++i) {
      // d/dv of -0.5 ((next - a - v dt)/s)^2 = (next - a - v dt) dt / s^2
      const double resid = next[i] - (a[i] + v[i] * dt);
      dv[i] = up[i] * resid * dt / (s * s);
    }
    net_.backward(theta_, cache, dv, grad);
  }
}

std::vector<double> FlowPolicy::grad_logprob(std::span<const double> obs,
                                             const SampledAction& sampled,
                                             const Tensor& upstream) const {
  std::vector<double> grad(num_params(), 0.0);
  grad_logprob(obs, sampled, upstream, grad);
  return grad;
}

void FlowPolicy::backprop_velocity(std::span<const double> obs, std::span<const double> a,
                                   double t, std::span<const double> dv,
                                   std::span<double> grad) const {
  std::vector<double> x, v(action_size());
  Mlp::Cache cache;
  build_input(obs, a, t, x);
  net_.forward(theta_, x, v, &cache);
  net_.backward(theta_, cache, dv, grad);
}

}  // namespace wmrl
