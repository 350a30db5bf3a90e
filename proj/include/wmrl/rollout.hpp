#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "wmrl/env.hpp"
#include "wmrl/flow_policy.hpp"
#include "wmrl/world_model.hpp"

namespace wmrl {

// Something that turns (current state, chunk, history) into the C next states.
class Backend {
 public:
  virtual ~Backend() = default;
  virtual std::vector<EnvState> predict(const EnvState& state, const ActionChunk& chunk,
                                        const History& history) const = 0;
  [[nodiscard]] virtual const EnvConfig& env() const = 0;
};

class GroundTruthBackend final : public Backend {
 public:
  explicit GroundTruthBackend(EnvConfig env) : env_(env) {}
  std::vector<EnvState> predict(const EnvState& state, const ActionChunk& chunk,
                                const History& history) const override;
  [[nodiscard]] const EnvConfig& env() const override { return env_; }

 private:
  EnvConfig env_;
};

// Rollouts inside the world model. Without a learned model the backend is
// "perfect": the world-model path is kept but the dynamics call env_step.
class WorldModelBackend final : public Backend {
 public:
  explicit WorldModelBackend(std::shared_ptr<const WorldModel> model);
  static WorldModelBackend perfect(EnvConfig env);

  std::vector<EnvState> predict(const EnvState& state, const ActionChunk& chunk,
                                const History& history) const override;
  [[nodiscard]] const EnvConfig& env() const override { return env_; }
  [[nodiscard]] bool is_perfect() const noexcept { return model_ == nullptr; }

 private:
  WorldModelBackend() = default;
  std::shared_ptr<const WorldModel> model_;
  EnvConfig env_{};
};

struct RolloutConfig {
  std::size_t history_len = 6;  // T_h
  std::size_t frames_per_chunk = 2;  // C; equals the policy chunk length
  std::size_t max_steps = 40;   // S_max
  bool render = false;          // rasterize every generated state into the history
  bool stochastic = true;
  ParamSet params = ParamSet::Behavior;
};

struct RolloutStep {
  std::vector<double> obs;
  SampledAction sampled;
  std::vector<EnvState> next_states;  // C
  std::vector<Image> frames;          // C when rendering, else empty
};

struct RolloutRecord {
  EnvState initial;
  std::vector<RolloutStep> steps;
  History history;
  bool truncated = false;
  std::string error;

  [[nodiscard]] std::size_t length() const noexcept { return steps.size(); }
  [[nodiscard]] const EnvState& final_state() const {
    return steps.empty() ? initial : steps.back().next_states.back();
  }
  [[nodiscard]] bool success() const { return final_state().success; }
};

// Policy input: state features of the current state followed by the mean of
// the buffered dynamic states.
inline constexpr std::size_t kObservationDim = kStateFeatureDim + kDynamicDim;
std::vector<double> policy_observation(const EnvState& state, const History& history);

HistoryFrame make_history_frame(const EnvState& state, const EnvConfig& env, bool render);

// Streaming closed-loop rollout. Each outer step s draws its policy noise
// from Rng(seed, {s}). Backend errors end the episode with truncated = true.
RolloutRecord closed_loop_rollout(const FlowPolicy& policy, const Backend& backend,
                                  const EnvState& x0, const RolloutConfig& cfg,
                                  std::uint64_t seed);

}  // namespace wmrl
