#include "wmrl/rollout.hpp"

#include "wmrl/error.hpp"

namespace wmrl {

std::vector<EnvState> GroundTruthBackend::predict(const EnvState& state, const ActionChunk& chunk,
                                                  const History& /*history*/) const {
  std::vector<EnvState> out;
  out.reserve(chunk.length());
  EnvState current = state;
  for (std::size_t c = 0; c < chunk.length(); ++c) {
    current = env_step(current, chunk.delta(c), env_);
    out.push_back(current);
  }
  return out;
}

WorldModelBackend::WorldModelBackend(std::shared_ptr<const WorldModel> model)
    : model_(std::move(model)) {
  if (!model_) throw Error(Errc::InvalidArgument, "world-model backend needs a model");
  env_ = model_->config().env;
}

WorldModelBackend WorldModelBackend::perfect(EnvConfig env) {
  WorldModelBackend b;
  b.env_ = env;
  return b;
}

std::vector<EnvState> WorldModelBackend::predict(const EnvState& state, const ActionChunk& chunk,
                                                 const History& history) const {
  if (!model_) {
    std::vector<EnvState> out;
    out.reserve(chunk.length());
    EnvState current = state;
    for (std::size_t c = 0; c < chunk.length(); ++c) {
      current = env_step(current, chunk.delta(c), env_);
      out.push_back(current);
    }
    return out;
  }
  if (model_->config().use_action_frames) {
    const auto frames = render_chunk_action_frames(state, chunk, env_);
    return model_->step(state, chunk, &frames, history);
  }
  return model_->step(state, chunk, nullptr, history);
}

std::vector<double> policy_observation(const EnvState& state, const History& history) {
  std::vector<double> obs;
  obs.reserve(kObservationDim);
  const auto f = state_features(state);
  obs.insert(obs.end(), f.begin(), f.end());
  std::array<double, kDynamicDim> mean{};
  for (const HistoryFrame& h : history) {
    const auto d = dynamic_vector(h.state);
    for (std::size_t i = 0; i < kDynamicDim; ++i) mean[i] += d[i];
  }
  const double n = history.size() > 0 ? static_cast<double>(history.size()) : 1.0;
  for (double m : mean) obs.push_back(m / n);
  return obs;
}

HistoryFrame make_history_frame(const EnvState& state, const EnvConfig& env, bool render) {
  HistoryFrame f;
  f.state = state;
  if (render) f.image = rasterize_state(state, env);
  return f;
}

RolloutRecord closed_loop_rollout(const FlowPolicy& policy, const Backend& backend,
                                  const EnvState& x0, const RolloutConfig& cfg,
                                  std::uint64_t seed) {
  if (cfg.history_len < 1 || cfg.frames_per_chunk < 1) {
    throw Error(Errc::InvalidArgument, "rollout needs T_h >= 1 and C >= 1");
  }
  if (cfg.frames_per_chunk != policy.chunk_len()) {
    throw Error(Errc::ShapeMismatch, "frames per chunk must equal the policy chunk length");
  }
  RolloutRecord rec;
  rec.initial = x0;
  rec.history.init(make_history_frame(x0, backend.env(), cfg.render), cfg.history_len);

  EnvState current = x0;
  FlowPolicy::SampleOptions opts{cfg.stochastic, cfg.params};
  for (std::size_t s = 0; s < cfg.max_steps && !current.success; ++s) {
    RolloutStep step;
    step.obs = policy_observation(current, rec.history);
    Rng rng(seed, {s});
    try {
      step.sampled = policy.sample_chunk(step.obs, rng, opts);
      step.next_states = backend.predict(current, step.sampled.action, rec.history);
    } catch (const Error& e) {
      rec.truncated = true;
      rec.error = e.what();
      break;
    }
    for (const EnvState& st : step.next_states) {
      HistoryFrame f = make_history_frame(st, backend.env(), cfg.render);
      if (cfg.render) step.frames.push_back(f.image);
      rec.history.push(f);
    }
    current = step.next_states.back();
    rec.steps.push_back(std::move(step));
  }
  return rec;
}

}  // namespace wmrl
