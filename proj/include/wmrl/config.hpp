#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "wmrl/env.hpp"
#include "wmrl/flow_policy.hpp"
#include "wmrl/reward.hpp"
#include "wmrl/rl_core.hpp"
#include "wmrl/rollout.hpp"
#include "wmrl/training.hpp"
#include "wmrl/world_model.hpp"

namespace wmrl {

enum class BackendKind { Env, WorldModel };

// Every tunable of a training run. The text form is flat `section.key = value`
// lines; `#` starts a comment. Unknown or repeated keys are errors.
struct RunConfig {
  // run
  std::uint64_t seed = 0;
  std::string out_dir = "runs/default";
  std::size_t workers = 1;
  std::size_t updates = 100;
  std::size_t checkpoint_interval = 25;
  std::size_t trajectory_interval = 0;  // 0: no trajectory files
  std::size_t eval_interval = 10;       // 0: evaluate only before and after RL
  std::size_t eval_episodes = 200;
  std::uint64_t eval_seed = 999;
  BackendKind backend = BackendKind::Env;
  bool log_wallclock = false;

  EnvConfig env{};

  // policy
  std::size_t chunk_len = 2;
  std::size_t hidden = 64;
  double init_scale = 0.1;
  std::size_t flow_steps = 4;
  std::vector<double> sigma_table = default_sigma_table();
  double translation_scale = 0.1;
  double rotation_scale = 0.1;

  // rollout
  std::size_t history_len = 6;
  std::size_t max_steps = 40;
  std::size_t frames_per_chunk = 2;

  // behaviour cloning
  bool bc_enabled = true;
  std::size_t bc_demos = 600;
  double bc_expert_noise = 0.02;
  std::size_t bc_epochs = 200;
  std::size_t bc_batch_size = 64;
  double bc_lr = 1e-3;

  // world model
  WmDataConfig wm_data{};
  WmTrainConfig wm_train{};
  std::size_t wm_embed_dim = 16;
  std::size_t wm_history_dim = 8;
  std::size_t wm_pool_stride = 2;
  std::size_t wm_hidden = 64;
  bool wm_action_frames = true;

  // rl
  std::size_t groups = 32;
  std::size_t group_size = 8;
  std::size_t minibatch = 128;
  std::size_t sync_interval = 1;
  OptimizerKind optimizer = OptimizerKind::Adam;
  double lr = 1e-3;
  double momentum = 0.0;
  double max_grad_norm = 0.0;
  double eps_r = 1e-8;
  ClipConfig clip{};
  bool flowscale_enabled = true;
  FlowScaleConfig flowscale{};

  // reward
  RewardScorer reward{};

  static std::vector<double> default_sigma_table();

  // Derived module configurations.
  [[nodiscard]] PolicyConfig policy_config() const;
  [[nodiscard]] NoiseSchedule schedule() const;
  [[nodiscard]] RolloutConfig rollout_config() const;
  [[nodiscard]] WorldModelConfig world_model_config() const;
  [[nodiscard]] RlConfig rl_config(std::uint64_t seed) const;

  // Throws ConfigParse when values are out of range or inconsistent.
  void validate() const;
};

// Throws ConfigParse with the offending line number.
RunConfig parse_config(const std::string& text);
// Throws Io when the file cannot be read.
std::string read_text_file(const std::filesystem::path& path);
RunConfig load_config(const std::filesystem::path& path);

// Canonical text form; parse_config(to_text(c)) reproduces c.
std::string to_text(const RunConfig& cfg);

// Applies one `section.key=value` override.
void apply_override(RunConfig& cfg, const std::string& assignment);

}  // namespace wmrl
