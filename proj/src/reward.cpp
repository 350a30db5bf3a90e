#include "wmrl/reward.hpp"

#include "wmrl/error.hpp"

namespace wmrl {

RewardScorer RewardScorer::corrupted(double recall, double fpr, std::uint64_t seed, int votes) {
  if (!(recall >= 0.0 && recall <= 1.0) || !(fpr >= 0.0 && fpr <= 1.0)) {
    throw Error(Errc::InvalidArgument, "recall and fpr must lie in [0, 1]");
  }
  if (votes < 1) throw Error(Errc::InvalidArgument, "vote count must be >= 1");
  RewardScorer s;
  s.kind = Kind::Corrupted;
  s.recall = recall;
  s.fpr = fpr;
  s.votes = votes;
  s.seed = seed;
  return s;
}

double RewardScorer::score(bool truth, std::uint64_t key) const {
  if (kind == Kind::Oracle) return truth ? 1.0 : 0.0;
  Rng rng(seed, {key});
  const double p = truth ? recall : fpr;
  int positive = 0;
  for (int v = 0; v < votes; ++v) positive += rng.uniform() < p ? 1 : 0;
  return 2 * positive > votes ? 1.0 : 0.0;
}

RmDiagnostics diagnostics(const std::vector<int>& preds, const std::vector<int>& truths) {
  if (preds.size() != truths.size()) {
    throw Error(Errc::LengthMismatch, std::to_string(preds.size()) + " predictions vs " +
                                          std::to_string(truths.size()) + " labels");
  }
  if (preds.empty()) throw Error(Errc::EmptyInput, "no predictions");
  RmDiagnostics d;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const bool p = preds[i] != 0;
    const bool t = truths[i] != 0;
    if (p && t) ++d.tp;
    else if (p && !t) ++d.fp;
    else if (!p && t) ++d.fn;
    else ++d.tn;
  }
  auto ratio = [](std::size_t num, std::size_t den) -> std::optional<double> {
    if (den == 0) return std::nullopt;
    return static_cast<double>(num) / static_cast<double>(den);
  };
  d.precision = ratio(d.tp, d.tp + d.fp);
  d.recall = ratio(d.tp, d.tp + d.fn);
  d.fpr = ratio(d.fp, d.fp + d.tn);
  return d;
}

Tensor temporal_mask(std::size_t length, std::size_t max_steps, std::size_t chunk_len,
                     std::optional<std::size_t> finish_step) {
  if (length > max_steps) throw Error(Errc::ShapeMismatch, "episode longer than S");
  std::size_t end = length;
  if (finish_step) {
    if (*finish_step > length) {
      throw Error(Errc::FinishBeyondHorizon, "finish step " + std::to_string(*finish_step) +
                                                 " beyond episode length " +
                                                 std::to_string(length));
    }
    end = *finish_step;
  }
  Tensor mask({max_steps, chunk_len});
  for (std::size_t s = 0; s < end; ++s) {
    for (std::size_t c = 0; c < chunk_len; ++c) mask(s, c) = 1.0;
  }
  return mask;
}

Tensor temporal_mask(const RolloutRecord& rollout, std::size_t max_steps, std::size_t chunk_len,
                     std::optional<std::size_t> finish_step) {
  return temporal_mask(rollout.length(), max_steps, chunk_len, finish_step);
}

RmTrial rm_trial(const RewardScorer& scorer, std::size_t n, double base_rate,
                 std::uint64_t seed) {
  if (n == 0) throw Error(Errc::EmptyInput, "no trajectories to score");
  Rng truth_rng(seed, {0});
  std::vector<int> preds(n), truths(n);
  RmTrial t;
  t.n = n;
  for (std::size_t i = 0; i < n; ++i) {
    truths[i] = truth_rng.uniform() < base_rate ? 1 : 0;
    preds[i] = scorer.score(truths[i] == 1, i) > 0.5 ? 1 : 0;
    t.rm_success_rate += preds[i];
    t.true_success_rate += truths[i];
  }
  t.rm_success_rate /= static_cast<double>(n);
  t.true_success_rate /= static_cast<double>(n);
  t.diag = diagnostics(preds, truths);
  return t;
}

}  // namespace wmrl
