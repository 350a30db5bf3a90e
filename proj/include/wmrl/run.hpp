#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "wmrl/config.hpp"
#include "wmrl/training.hpp"

namespace wmrl {

// Per-stage seeds, all split from run.seed.
enum class SeedStage : std::uint64_t {
  PolicyInit = 1,
  Demonstrations = 2,
  BehaviorCloning = 3,
  WorldModelData = 4,
  WorldModelInit = 5,
  WorldModelTrain = 6,
  Rl = 7,
  Reward = 8,
};

std::uint64_t stage_seed(const RunConfig& cfg, SeedStage stage);

struct RunSummary {
  double initial_success = 0.0;  // true-environment success before RL
  double final_success = 0.0;
  std::vector<UpdateMetrics> updates;
  std::vector<std::pair<std::size_t, double>> evals;  // (update, true success)
  std::optional<WmTrainReport> world_model;
};

// The policy after the behaviour-cloning stage (or at initialization when BC
// is disabled). All three parameter snapshots equal the cloned weights.
FlowPolicy pretrain_policy(const RunConfig& cfg);

std::shared_ptr<WorldModel> fit_world_model(const RunConfig& cfg, const FlowPolicy& policy,
                                            WmTrainReport* report = nullptr);

// Full pipeline into cfg.out_dir:
//   config.txt            effective configuration (canonical form)
//   checkpoint_NNNN.prck  policy after BC (0000), at intervals, and at the end
//   world_model.prwm      when run.backend = world_model
//   wm_training.csv       per-epoch world-model losses
//   metrics.csv           one row per RL update
//   rm_diagnostics.csv    reward-model confusion statistics per update
//   eval.csv              true-environment success at the evaluation points
//   trajectories/update_NNNN.prtj
// With updates == 0 only the first checkpoint and header-only CSVs are
// written. log receives short progress lines when non-null.
RunSummary run_training(const RunConfig& cfg, std::ostream* log = nullptr);

}  // namespace wmrl
