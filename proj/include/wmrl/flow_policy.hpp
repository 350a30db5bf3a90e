#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "wmrl/action_space.hpp"
#include "wmrl/nn.hpp"
#include "wmrl/rng.hpp"
#include "wmrl/tensor.hpp"

namespace wmrl {

// sigma(t) lookup table over normalized time t in [0,1] (entry i sits at
// t = i/(n-1)), together with the internal step count K and dt = 1/K.
class NoiseSchedule {
 public:
  NoiseSchedule(std::vector<double> table, std::size_t steps);

  static NoiseSchedule linear_ramp(double sigma_start, double sigma_end, std::size_t entries,
                                   std::size_t steps);
  static NoiseSchedule constant(double sigma, std::size_t steps);

  [[nodiscard]] std::size_t steps() const noexcept { return steps_; }
  [[nodiscard]] double dt() const noexcept { return 1.0 / static_cast<double>(steps_); }
  [[nodiscard]] double time(std::size_t k) const noexcept {
    return static_cast<double>(k) / static_cast<double>(steps_);
  }
  [[nodiscard]] const std::vector<double>& table() const noexcept { return table_; }

  // Nearest-entry lookup.
  [[nodiscard]] double sigma(double t) const;

  bool operator==(const NoiseSchedule&) const = default;

 private:
  std::vector<double> table_;
  std::size_t steps_;
};

// sqrt(sigma(t_k)) * sqrt(dt); Errc::IndexOutOfRange unless 0 <= k < K.
double noise_std(const NoiseSchedule& schedule, std::size_t k);

enum class ParamSet { Current, Behavior, Reference };

struct SampledAction {
  ActionChunk action;          // physical command chunk decoded from a_K
  Tensor iterates;             // [K+1, CH, 7], normalized action space
  Tensor noises;               // [K, CH, 7]
  std::vector<double> stds;    // [K]

  [[nodiscard]] std::span<const double> final_iterate() const;
};

struct PolicyConfig {
  std::size_t obs_dim = 0;
  std::size_t chunk_len = 2;
  std::size_t hidden = 64;
  double init_scale = 0.1;
  ActionScaling scaling{};
};

// Flow-matching action head: v_theta(obs, a_k, t_k) is a two-layer tanh MLP
// producing a [CH, 7] velocity. Sampling is Euler-Maruyama:
//   a_{k+1} = a_k + v dt + std_k eps_k,   a_0 ~ N(0, I).
// Three parameter snapshots are kept: current (theta), behaviour (theta_old,
// changed only by sync_behavior) and reference (theta_ref, fixed at
// construction).
class FlowPolicy {
 public:
  static constexpr std::size_t kTimeFeatures = 4;

  FlowPolicy(const PolicyConfig& cfg, NoiseSchedule schedule, std::uint64_t init_seed);
  // All three snapshots start at theta (e.g. a behaviour-cloned checkpoint).
  FlowPolicy(const PolicyConfig& cfg, NoiseSchedule schedule, std::vector<double> theta);

  [[nodiscard]] const PolicyConfig& config() const noexcept { return cfg_; }
  [[nodiscard]] const NoiseSchedule& schedule() const noexcept { return schedule_; }
  [[nodiscard]] std::size_t chunk_len() const noexcept { return cfg_.chunk_len; }
  [[nodiscard]] std::size_t action_size() const noexcept { return cfg_.chunk_len * kActionDim; }
  [[nodiscard]] std::size_t num_params() const noexcept { return net_.num_params(); }
  [[nodiscard]] const Mlp& network() const noexcept { return net_; }

  [[nodiscard]] std::span<const double> params(ParamSet which) const;
  [[nodiscard]] std::span<double> mutable_params() noexcept { return theta_; }

  // theta_old <- theta
  void sync_behavior() { theta_old_ = theta_; }

  // v_theta for one iterate; out has CH*7 entries.
  void velocity(ParamSet which, std::span<const double> obs, std::span<const double> a, double t,
                std::span<double> out, Mlp::Cache* cache = nullptr) const;

  struct SampleOptions {
    bool stochastic = true;  // false: a_0 = 0 and zero injected noise (ODE mean path)
    ParamSet params = ParamSet::Behavior;
  };
  SampledAction sample_chunk(std::span<const double> obs, Rng& rng,
                             const SampleOptions& opts) const;
  SampledAction sample_chunk(std::span<const double> obs, Rng& rng) const {
    return sample_chunk(obs, rng, SampleOptions{});
  }

  // [K, CH, 7] per-step Gaussian log-densities of a_{k+1} given a_k.
  Tensor logprob_elements(ParamSet which, std::span<const double> obs,
                          const SampledAction& sampled) const;

  // Full-path log-density (conditional on a_0) in one pass; per (c,d) the
  // step terms are accumulated in k order and the (c,d) totals are summed
  // row-major, matching a k-then-(c,d) reduction of logprob_elements.
  double path_logprob(ParamSet which, std::span<const double> obs,
                      const SampledAction& sampled) const;

  // d(sum upstream * logprob_elements(Current))/d theta, accumulated into grad.
  void grad_logprob(std::span<const double> obs, const SampledAction& sampled,
                    const Tensor& upstream, std::span<double> grad) const;
  std::vector<double> grad_logprob(std::span<const double> obs, const SampledAction& sampled,
                                   const Tensor& upstream) const;

  // Backprop an arbitrary velocity cotangent through the current network
  // (used by behaviour cloning).
  void backprop_velocity(std::span<const double> obs, std::span<const double> a, double t,
                         std::span<const double> dv, std::span<double> grad) const;

  static std::array<double, kTimeFeatures> time_features(double t);

 private:
  void check_schedule(const SampledAction& sampled) const;
  void build_input(std::span<const double> obs, std::span<const double> a, double t,
                   std::vector<double>& x) const;

  PolicyConfig cfg_;
  NoiseSchedule schedule_;
  Mlp net_;
  std::vector<double> theta_, theta_old_, theta_ref_;
};

}  // namespace wmrl
