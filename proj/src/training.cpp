#include "wmrl/training.hpp"

#include <cmath>
#include <functional>
#include <numeric>

#include "wmrl/error.hpp"

namespace wmrl {

namespace {

void shuffle(std::vector<std::size_t>& idx, Rng& rng) {
  for (std::size_t i = idx.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.next_u64() % i);
    std::swap(idx[i - 1], idx[j]);
  }
}

std::vector<std::array<double, kDynamicDim>> history_states(const History& h) {
  std::vector<std::array<double, kDynamicDim>> out;
  out.reserve(h.size());
  for (const HistoryFrame& f : h) out.push_back(dynamic_vector(f.state));
  return out;
}

// Expert chunk from state: clean commands for the label, noisy ones to execute.
void expert_chunk(const EnvState& state, const EnvConfig& env, std::size_t chunk_len,
                  double noise, Rng& rng, ActionChunk& clean, ActionChunk& executed,
                  std::vector<EnvState>& next) {
  clean = ActionChunk(chunk_len);
  executed = ActionChunk(chunk_len);
  next.clear();
  EnvState cur = state;
  for (std::size_t c = 0; c < chunk_len; ++c) {
    const DeltaAction a = scripted_expert(cur, env);
    DeltaAction noisy = a;
    if (noise > 0.0) {
      for (int i = 0; i < 3; ++i) noisy.dp[i] += noise * rng.normal();
    }
    clean.set_delta(c, a);
    executed.set_delta(c, noisy);
    cur = env_step(cur, noisy, env);
    next.push_back(cur);
  }
}

}  // namespace

std::vector<BcSample> collect_demonstrations(const EnvConfig& env, const PolicyConfig& policy,
                                             const DemoConfig& cfg) {
  std::vector<BcSample> data;
  ActionChunk clean, executed;
  std::vector<EnvState> next;
  for (std::size_t ep = 0; ep < cfg.episodes; ++ep) {
    Rng rng(cfg.seed, {ep});
    EnvState x = sample_initial_state(env, rng);
    History history(make_history_frame(x, env, false), cfg.history_len);
    for (std::size_t s = 0; s < cfg.max_steps && !x.success; ++s) {
      BcSample sample;
      sample.obs = policy_observation(x, history);
      expert_chunk(x, env, policy.chunk_len, cfg.expert_noise, rng, clean, executed, next);
      sample.target = normalized_chunk(clean, policy.scaling);
      data.push_back(std::move(sample));
      for (const EnvState& st : next) history.push(make_history_frame(st, env, false));
      x = next.back();
    }
  }
  return data;
}

std::vector<double> behavior_clone(FlowPolicy& policy, const std::vector<BcSample>& data,
                                   const BcConfig& cfg) {
  if (data.empty()) throw Error(Errc::EmptyDataset, "no demonstrations");
  const std::size_t n = policy.action_size();
  const Mlp& net = policy.network();
  Adam opt(policy.num_params(), cfg.lr);
  Rng rng(cfg.seed, {0xbc});
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::vector<double> grad(policy.num_params()), a0(n), xt(n), v(n), dv(n), input;
  std::vector<double> losses;
  Mlp::Cache cache;
  const std::size_t bs = std::max<std::size_t>(1, cfg.batch_size);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle(idx, rng);
    double total = 0.0;
    for (std::size_t start = 0; start < idx.size(); start += bs) {
      const std::size_t end = std::min(start + bs, idx.size());
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t i = start; i < end; ++i) {
        const BcSample& s = data[idx[i]];
        if (s.target.size() != n) throw Error(Errc::ShapeMismatch, "demonstration chunk size");
        const double t = rng.uniform();
        for (std::size_t j = 0; j < n; ++j) {
          a0[j] = rng.normal();
          xt[j] = (1.0 - t) * a0[j] + t * s.target[j];
        }
        policy.velocity(ParamSet::Current, s.obs, xt, t, v, &cache);
        double loss = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          const double err = v[j] - (s.target[j] - a0[j]);
          loss += err * err;
          dv[j] = 2.0 * err / static_cast<double>(n);
        }
        total += loss / static_cast<double>(n);
        net.backward(policy.params(ParamSet::Current), cache, dv, grad);
      }
      const double inv = 1.0 / static_cast<double>(end - start);
      for (double& g : grad) g *= inv;
      opt.step(policy.mutable_params(), grad);
    }
    losses.push_back(total / static_cast<double>(data.size()));
  }
  policy.sync_behavior();
  return losses;
}

double evaluate_success(const FlowPolicy& policy, const Backend& backend, const EnvConfig& env,
                        const EvalConfig& cfg, std::size_t workers) {
  if (cfg.episodes == 0) throw Error(Errc::EmptyInput, "no evaluation episodes");
  RolloutConfig rc = cfg.rollout;
  rc.params = ParamSet::Current;
  rc.stochastic = cfg.stochastic;
  rc.render = false;
  std::vector<int> success(cfg.episodes, 0);
  parallel_for(cfg.episodes, workers, [&](std::size_t i) {
    Rng init(cfg.seed, {0xe7a1, i});
    const EnvState x0 = sample_initial_state(env, init);
    const RolloutRecord rec =
        closed_loop_rollout(policy, backend, x0, rc, derive_seed(cfg.seed, {0xe7a2, i}));
    success[i] = rec.success() ? 1 : 0;
  });
  const int total = std::accumulate(success.begin(), success.end(), 0);
  return static_cast<double>(total) / static_cast<double>(cfg.episodes);
}

std::vector<WmSample> collect_world_model_data(const FlowPolicy& policy, const EnvConfig& env,
                                               const WorldModelConfig& wm,
                                               const WmDataConfig& cfg) {
  const GroundTruthBackend backend(env);
  const std::size_t n_expert = static_cast<std::size_t>(
      std::llround(cfg.expert_fraction * static_cast<double>(cfg.episodes)));
  RolloutConfig rc = cfg.rollout;
  rc.render = false;
  rc.history_len = wm.history_len;
  rc.frames_per_chunk = wm.chunk_len;

  std::vector<std::vector<WmSample>> per_episode(cfg.episodes);
  for (std::size_t ep = 0; ep < cfg.episodes; ++ep) {
    Rng rng(cfg.seed, {0xda7a, ep});
    const EnvState x0 = sample_initial_state(env, rng);
    std::vector<std::pair<ActionChunk, std::vector<EnvState>>> steps;
    if (ep < n_expert) {
      EnvState x = x0;
      ActionChunk clean, executed;
      std::vector<EnvState> next;
      for (std::size_t s = 0; s < rc.max_steps && !x.success; ++s) {
        expert_chunk(x, env, wm.chunk_len, cfg.expert_noise, rng, clean, executed, next);
        steps.emplace_back(executed, next);
        x = next.back();
      }
    } else {
      const RolloutRecord rec =
          closed_loop_rollout(policy, backend, x0, rc, derive_seed(cfg.seed, {0xda7b, ep}));
      for (const RolloutStep& st : rec.steps) steps.emplace_back(st.sampled.action, st.next_states);
    }
    History history(make_history_frame(x0, env, false), wm.history_len);
    EnvState x = x0;
    for (const auto& [chunk, next] : steps) {
      WmSample sample;
      sample.state = x;
      sample.chunk = chunk;
      if (wm.use_action_frames) {
        for (const Image& f : render_chunk_action_frames(x, chunk, env)) {
          sample.frames.push_back(action_frame_moments(f));
        }
      }
      sample.history = history_states(history);
      for (const EnvState& st : next) {
        sample.next.push_back(dynamic_vector(st));
        history.push(make_history_frame(st, env, false));
      }
      x = next.back();
      per_episode[ep].push_back(std::move(sample));
    }
  }
  std::vector<WmSample> data;
  for (auto& ep : per_episode) {
    for (auto& s : ep) data.push_back(std::move(s));
  }
  return data;
}

namespace {

void fill_logp(const FlowPolicy& policy, ParamSet which,
               const std::vector<const RolloutRecord*>& eps, Tensor& out, std::size_t workers) {
  parallel_for(eps.size(), workers, [&](std::size_t b) {
    const RolloutRecord& rec = *eps[b];
    for (std::size_t s = 0; s < rec.length(); ++s) {
      const RolloutStep& st = rec.steps[s];
      const Tensor lp = policy.logprob_elements(which, st.obs, st.sampled);
      auto dst = out.slice(b, s);
      std::copy(lp.flat().begin(), lp.flat().end(), dst.begin());
    }
  });
}

}  // namespace

TrajectoryBatch build_batch(const FlowPolicy& policy, const std::vector<const RolloutRecord*>& eps,
                            std::size_t max_steps, std::size_t workers) {
  const std::size_t K = policy.schedule().steps();
  const std::size_t CH = policy.chunk_len();
  TrajectoryBatch batch = TrajectoryBatch::zeros(eps.size(), max_steps, K, CH, kActionDim);
  for (std::size_t b = 0; b < eps.size(); ++b) {
    const RolloutRecord& rec = *eps[b];
    if (rec.length() > max_steps) throw Error(Errc::ShapeMismatch, "rollout longer than S");
    for (std::size_t s = 0; s < rec.length(); ++s) {
      for (std::size_t k = 0; k < K; ++k) batch.std(b, s, k) = rec.steps[s].sampled.stds[k];
    }
    if (!rec.truncated) {
      const Tensor m = temporal_mask(rec, max_steps, CH);
      std::copy(m.flat().begin(), m.flat().end(), batch.mask.slice(b).begin());
    }
  }
  fill_logp(policy, ParamSet::Current, eps, batch.logp_elem, workers);
  fill_logp(policy, ParamSet::Behavior, eps, batch.old_logp_elem, workers);
  fill_logp(policy, ParamSet::Reference, eps, batch.ref_logp_elem, workers);
  return batch;
}

RlTrainer::RlTrainer(FlowPolicy& policy, const Backend& backend, EnvConfig env,
                     RewardScorer scorer, RlConfig cfg)
    : policy_(policy), backend_(backend), env_(env), scorer_(scorer), cfg_(std::move(cfg)) {
  cfg_.clip.validate();
  if (cfg_.use_flowscale) cfg_.flowscale.validate();
  if (cfg_.groups == 0 || cfg_.group_size == 0 || cfg_.minibatch == 0) {
    throw Error(Errc::InvalidArgument, "groups, group size and mini-batch must be positive");
  }
  if (cfg_.sync_interval == 0) throw Error(Errc::InvalidArgument, "sync interval must be >= 1");
  adam_ = Adam(policy_.num_params(), cfg_.lr);
  sgd_ = Sgd(policy_.num_params(), cfg_.lr, cfg_.momentum);
}

UpdateMetrics RlTrainer::step(std::size_t update) {
  if (update % cfg_.sync_interval == 0) policy_.sync_behavior();
  const std::size_t B = cfg_.groups * cfg_.group_size;
  const std::size_t S = cfg_.rollout.max_steps;
  RolloutConfig rc = cfg_.rollout;
  rc.params = ParamSet::Behavior;
  rc.stochastic = true;

  // Rollouts: every member of a group starts from the same initial state.
  std::vector<EnvState> starts(cfg_.groups);
  for (std::size_t g = 0; g < cfg_.groups; ++g) {
    Rng rng(cfg_.seed, {1, update, g});
    starts[g] = sample_initial_state(env_, rng);
  }
  std::vector<RolloutRecord> records(B);
  parallel_for(B, cfg_.workers, [&](std::size_t i) {
    records[i] = closed_loop_rollout(policy_, backend_, starts[i / cfg_.group_size], rc,
                                     derive_seed(cfg_.seed, {2, update, i}));
  });

  UpdateMetrics m;
  m.update = update;
  std::vector<double> rewards(B);
  std::vector<std::size_t> groups(B);
  std::vector<int> preds(B), truths(B);
  for (std::size_t i = 0; i < B; ++i) {
    groups[i] = i / cfg_.group_size;
    truths[i] = records[i].success() ? 1 : 0;
    if (records[i].truncated) {
      ++m.truncated;
      rewards[i] = 0.0;
    } else {
      rewards[i] = scorer_.score(records[i].success(), (static_cast<std::uint64_t>(update) << 32) | i);
    }
    preds[i] = rewards[i] > 0.5 ? 1 : 0;
    m.mean_reward += rewards[i];
    m.success_rate += truths[i];
    m.rm_success_rate += preds[i];
  }
  m.mean_reward /= static_cast<double>(B);
  m.success_rate /= static_cast<double>(B);
  m.rm_success_rate /= static_cast<double>(B);
  m.rm = diagnostics(preds, truths);
  const std::vector<double> normed = group_normalize(rewards, groups, cfg_.eps_r);

  // Mini-batches over a seeded permutation of the episodes.
  std::vector<std::size_t> order(B);
  std::iota(order.begin(), order.end(), 0);
  Rng perm(cfg_.seed, {3, update});
  shuffle(order, perm);

  const std::size_t n_params = policy_.num_params();
  std::size_t n_mb = 0;
  for (std::size_t start = 0; start < B; start += cfg_.minibatch) {
    const std::size_t end = std::min(start + cfg_.minibatch, B);
    std::vector<const RolloutRecord*> eps;
    std::vector<double> mb_normed;
    for (std::size_t j = start; j < end; ++j) {
      eps.push_back(&records[order[j]]);
      mb_normed.push_back(normed[order[j]]);
    }
    TrajectoryBatch batch = build_batch(policy_, eps, S, cfg_.workers);
    for (std::size_t j = start; j < end; ++j) {
      batch.rewards[j - start] = rewards[order[j]];
      batch.groups[j - start] = groups[order[j]];
    }
    const Tensor adv = broadcast_advantages(mb_normed, batch.mask);
    Tensor weights;
    if (cfg_.use_flowscale) weights = flowscale_weights(batch.std, cfg_.flowscale);
    const LossResult loss =
        fa_grpo_loss(batch, adv, cfg_.use_flowscale ? &weights : nullptr, cfg_.clip);

    // Per-episode parameter gradients, summed in episode order.
    std::vector<std::vector<double>> per_ep(eps.size());
    parallel_for(eps.size(), cfg_.workers, [&](std::size_t b) {
      per_ep[b].assign(n_params, 0.0);
      const RolloutRecord& rec = *eps[b];
      for (std::size_t s = 0; s < rec.length(); ++s) {
        const auto g = loss.grad_logp.slice(b, s);
        Tensor upstream({g.size() / (policy_.chunk_len() * kActionDim), policy_.chunk_len(),
                         kActionDim});
        std::copy(g.begin(), g.end(), upstream.flat().begin());
        policy_.grad_logprob(rec.steps[s].obs, rec.steps[s].sampled, upstream, per_ep[b]);
      }
    });
    std::vector<double> grad(n_params, 0.0);
    for (const auto& g : per_ep) {
      for (std::size_t p = 0; p < n_params; ++p) grad[p] += g[p];
    }
    double norm = 0.0;
    for (double g : grad) norm += g * g;
    norm = std::sqrt(norm);
    if (cfg_.max_grad_norm > 0.0 && norm > cfg_.max_grad_norm) {
      const double scale = cfg_.max_grad_norm / norm;
      for (double& g : grad) g *= scale;
    }
    if (cfg_.optimizer == OptimizerKind::Adam) {
      adam_.step(policy_.mutable_params(), grad);
    } else {
      sgd_.step(policy_.mutable_params(), grad);
    }
    m.clip_frac += loss.clip_fraction;
    m.kl += loss.kl;
    m.grad_norm += norm;
    m.ratio_clamped += loss.clamped;
    ++n_mb;
  }
  m.clip_frac /= static_cast<double>(n_mb);
  m.kl /= static_cast<double>(n_mb);
  m.grad_norm /= static_cast<double>(n_mb);
  last_records_ = std::move(records);
  last_rewards_ = std::move(rewards);
  return m;
}

}  // namespace wmrl
