#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "wmrl/rng.hpp"
#include "wmrl/rollout.hpp"
#include "wmrl/tensor.hpp"

namespace wmrl {

// Binary trajectory scorer. The corrupted kind flips the true outcome so
// that P(1 | success) = recall and P(1 | failure) = fpr. With votes > 1 each
// call takes the majority of that many independent draws.
struct RewardScorer {
  enum class Kind { Oracle, Corrupted };

  Kind kind = Kind::Oracle;
  double recall = 1.0;
  double fpr = 0.0;
  int votes = 1;
  std::uint64_t seed = 0;

  static RewardScorer oracle() { return {}; }
  static RewardScorer corrupted(double recall, double fpr, std::uint64_t seed, int votes = 1);

  // The stream for one trajectory is Rng(seed, {key}); callers pass a key
  // unique to the (update, episode) pair.
  [[nodiscard]] double score(bool truth, std::uint64_t key) const;
  [[nodiscard]] double score(const RolloutRecord& rollout, std::uint64_t key) const {
    return score(rollout.success(), key);
  }
};

struct RmDiagnostics {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> fpr;
};

// Throws LengthMismatch, EmptyInput.
RmDiagnostics diagnostics(const std::vector<int>& preds, const std::vector<int>& truths);

// Scores n synthetic trajectories whose true outcome is Bernoulli(base_rate)
// and summarizes the scorer against the truth.
struct RmTrial {
  std::size_t n = 0;
  RmDiagnostics diag;
  double rm_success_rate = 0.0;
  double true_success_rate = 0.0;
};

RmTrial rm_trial(const RewardScorer& scorer, std::size_t n, double base_rate,
                 std::uint64_t seed);

// [S, CH] prefix mask: ones for the first finish_step (default T_i) outer
// steps. Throws FinishBeyondHorizon when finish_step > T_i.
Tensor temporal_mask(std::size_t length, std::size_t max_steps, std::size_t chunk_len,
                     std::optional<std::size_t> finish_step = std::nullopt);
Tensor temporal_mask(const RolloutRecord& rollout, std::size_t max_steps, std::size_t chunk_len,
                     std::optional<std::size_t> finish_step = std::nullopt);

}  // namespace wmrl
