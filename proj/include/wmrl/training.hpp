#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "wmrl/flow_policy.hpp"
#include "wmrl/parallel.hpp"
#include "wmrl/reward.hpp"
#include "wmrl/rl_core.hpp"
#include "wmrl/rollout.hpp"
#include "wmrl/world_model.hpp"

namespace wmrl {

// ---- behaviour cloning ----

struct BcSample {
  std::vector<double> obs;
  std::vector<double> target;  // normalized [CH*7] chunk
};

struct DemoConfig {
  std::size_t episodes = 200;
  double expert_noise = 0.0;  // std of Gaussian noise on expert translation commands
  std::size_t max_steps = 40;
  std::size_t history_len = 6;
  std::uint64_t seed = 0;
};

// Scripted-expert chunks with the observations a rollout would see.
std::vector<BcSample> collect_demonstrations(const EnvConfig& env, const PolicyConfig& policy,
                                             const DemoConfig& cfg);

struct BcConfig {
  std::size_t epochs = 40;
  std::size_t batch_size = 64;
  double lr = 1e-3;
  std::uint64_t seed = 0;
};

// Conditional flow matching: regress v(obs, (1-t) a0 + t a1, t) onto a1 - a0
// with a0 ~ N(0, I) and t ~ U[0, 1). Trains the current parameters and
// returns the per-epoch mean loss.
std::vector<double> behavior_clone(FlowPolicy& policy, const std::vector<BcSample>& data,
                                   const BcConfig& cfg);

// ---- evaluation ----

struct EvalConfig {
  std::size_t episodes = 100;
  std::uint64_t seed = 0;
  bool stochastic = true;
  RolloutConfig rollout{};
};

// Fraction of successful closed-loop episodes with the current parameters.
// Initial states and policy noise come only from cfg.seed, so runs that share
// an EvalConfig are compared on identical episodes.
double evaluate_success(const FlowPolicy& policy, const Backend& backend, const EnvConfig& env,
                        const EvalConfig& cfg, std::size_t workers = 1);

// ---- world-model data ----

struct WmDataConfig {
  std::size_t episodes = 200;
  double expert_fraction = 0.5;  // remaining episodes use the policy
  double expert_noise = 0.03;
  RolloutConfig rollout{};
  std::uint64_t seed = 0;
};

std::vector<WmSample> collect_world_model_data(const FlowPolicy& policy, const EnvConfig& env,
                                               const WorldModelConfig& wm,
                                               const WmDataConfig& cfg);

// ---- RL ----

enum class OptimizerKind { Adam, Sgd };

struct RlConfig {
  std::size_t updates = 100;
  std::size_t groups = 32;      // initial conditions per update
  std::size_t group_size = 8;   // episodes per initial condition
  std::size_t minibatch = 128;  // episodes per optimizer step
  std::size_t sync_interval = 1;  // theta_old <- theta every n updates
  OptimizerKind optimizer = OptimizerKind::Adam;
  double lr = 1e-3;
  double momentum = 0.0;
  double max_grad_norm = 0.0;  // 0 disables clipping
  ClipConfig clip{};
  bool use_flowscale = true;
  FlowScaleConfig flowscale{};
  double eps_r = 1e-8;
  RolloutConfig rollout{};
  std::size_t workers = 1;
  std::uint64_t seed = 0;
};

struct UpdateMetrics {
  std::size_t update = 0;
  double mean_reward = 0.0;
  double success_rate = 0.0;  // outcome of the training rollouts as judged by the backend
  double clip_frac = 0.0;
  double kl = 0.0;
  double grad_norm = 0.0;
  std::size_t ratio_clamped = 0;
  std::size_t truncated = 0;
  RmDiagnostics rm;
  double rm_success_rate = 0.0;
};

// Stacks rollouts into the [B,S,K,CH,D] layout. logp, old and ref are filled
// from the current, behaviour and reference snapshots. Truncated rollouts
// get an all-zero mask.
TrajectoryBatch build_batch(const FlowPolicy& policy, const std::vector<const RolloutRecord*>& eps,
                            std::size_t max_steps, std::size_t workers = 1);

class RlTrainer {
 public:
  RlTrainer(FlowPolicy& policy, const Backend& backend, EnvConfig env, RewardScorer scorer,
            RlConfig cfg);

  // One update: rollouts, scoring, group normalization, then one optimizer
  // step per mini-batch.
  UpdateMetrics step(std::size_t update);

  [[nodiscard]] const RlConfig& config() const noexcept { return cfg_; }
  // Rollouts and rewards of the most recent step(); behaviour parameters are
  // still the ones that generated them until the next step() syncs.
  [[nodiscard]] const std::vector<RolloutRecord>& last_records() const noexcept {
    return last_records_;
  }
  [[nodiscard]] const std::vector<double>& last_rewards() const noexcept { return last_rewards_; }

 private:
  FlowPolicy& policy_;
  const Backend& backend_;
  EnvConfig env_;
  RewardScorer scorer_;
  RlConfig cfg_;
  Adam adam_;
  Sgd sgd_;
  std::vector<RolloutRecord> last_records_;
  std::vector<double> last_rewards_;
};

}  // namespace wmrl
