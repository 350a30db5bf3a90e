#include "wmrl/world_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "wmrl/error.hpp"

namespace wmrl {

namespace {

constexpr double kMomentScale = 16.0;

std::vector<std::array<double, kDynamicDim>> history_states(const History& history) {
  std::vector<std::array<double, kDynamicDim>> out;
  out.reserve(history.size());
  for (const HistoryFrame& f : history) out.push_back(dynamic_vector(f.state));
  return out;
}

void shuffle_indices(std::vector<std::size_t>& idx, Rng& rng) {
  for (std::size_t i = idx.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.next_u64() % i);
    std::swap(idx[i - 1], idx[j]);
  }
}

}  // namespace

FrameMoments action_frame_moments(const Image& frame) {
  FrameMoments m{};
  if (frame.channels != 3) throw Error(Errc::ShapeMismatch, "action frames are RGB");
  const double sx = frame.width > 1 ? 2.0 / (frame.width - 1) : 0.0;
  const double sy = frame.height > 1 ? 2.0 / (frame.height - 1) : 0.0;
  for (int r = 0; r < frame.height; ++r) {
    const double y = r * sy - 1.0;
    for (int c = 0; c < frame.width; ++c) {
      const double x = c * sx - 1.0;
      for (int ch = 0; ch < 3; ++ch) {
        const double v = frame.at(r, c, ch);
        if (v == 0.0) continue;
        m[ch] += v;
        m[3 + ch] += v * x;
        m[6 + ch] += v * y;
      }
    }
  }
  const double n = static_cast<double>(frame.width) * frame.height;
  for (double& v : m) v *= kMomentScale / n;
  return m;
}

std::vector<Image> render_chunk_action_frames(const EnvState& state, const ActionChunk& chunk,
                                              const EnvConfig& env) {
  const CameraModel cam = overhead_camera(env);
  const RenderConfig rc = toy_render_config(env);
  std::vector<Image> frames;
  frames.reserve(chunk.length());
  Vec3 pos = state.gripper;
  Vec3 euler = Vec3::Zero();
  for (std::size_t c = 0; c < chunk.length(); ++c) {
    const DeltaAction a = chunk.delta(c);
    for (int i = 0; i < 3; ++i) pos[i] += std::clamp(a.dp[i], -env.move_clip, env.move_clip);
    pos.x() = std::clamp(pos.x(), 0.0, 1.0);
    pos.y() = std::clamp(pos.y(), 0.0, 1.0);
    pos.z() = std::clamp(pos.z(), 0.0, env.z_max);
    euler += a.de;
    frames.push_back(render_action_frame(cam, rc, Pose(pos, euler_to_matrix(euler)), a.g));
  }
  return frames;
}

std::vector<double> normalized_chunk(const ActionChunk& chunk, const ActionScaling& scaling) {
  std::vector<double> out;
  out.reserve(chunk.length() * kActionDim);
  for (std::size_t c = 0; c < chunk.length(); ++c) {
    const auto n = scaling.to_normalized(chunk.delta(c));
    out.insert(out.end(), n.begin(), n.end());
  }
  return out;
}

WorldModel::WorldModel(const WorldModelConfig& cfg, std::uint64_t seed)
    : cfg_(cfg),
      phi_({cfg.chunk_len * kActionDim, cfg.embed_dim, cfg.embed_dim}),
      psi_({kFrameMoments, cfg.embed_dim}),
      hist_({(((cfg.history_len + cfg.pool_stride - 1) / cfg.pool_stride) + 1) * kDynamicDim,
             cfg.history_dim}),
      dyn_({kStateFeatureDim + kActionDim + cfg.chunk_len + cfg.embed_dim + cfg.history_dim,
            cfg.hidden, kDynamicDim}) {
  if (cfg.chunk_len < 1 || cfg.history_len < 1 || cfg.pool_stride < 1) {
    throw Error(Errc::InvalidArgument, "world model needs C, T_h, stride >= 1");
  }
  offsets_[0] = 0;
  offsets_[1] = offsets_[0] + phi_.num_params();
  offsets_[2] = offsets_[1] + psi_.num_params();
  offsets_[3] = offsets_[2] + hist_.num_params();
  offsets_[4] = offsets_[3] + dyn_.num_params();
  params_.assign(offsets_[4], 0.0);
  Rng rng(seed);
  phi_.init(block(params_, 0), rng, cfg.init_scale);
  psi_.init(block(params_, 1), rng, cfg.init_scale);
  hist_.init(block(params_, 2), rng, cfg.init_scale);
  dyn_.init(block(params_, 3), rng, cfg.init_scale, /*zero_output=*/true);
}

std::span<const double> WorldModel::block(std::size_t i) const {
  return std::span<const double>(params_).subspan(offsets_[i], offsets_[i + 1] - offsets_[i]);
}

std::span<double> WorldModel::block(std::span<double> all, std::size_t i) const {
  return all.subspan(offsets_[i], offsets_[i + 1] - offsets_[i]);
}

std::size_t WorldModel::pooled_history_dim() const noexcept { return hist_.input_dim(); }

std::vector<double> WorldModel::pool_history(
    std::span<const std::array<double, kDynamicDim>> states) const {
  if (states.size() != cfg_.history_len) {
    throw Error(Errc::ShapeMismatch, "history holds " + std::to_string(states.size()) +
                                         " states, expected " + std::to_string(cfg_.history_len));
  }
  std::vector<double> out;
  out.reserve(pooled_history_dim());
  const std::size_t s = cfg_.pool_stride;
  for (std::size_t start = 0; start < states.size(); start += s) {
    const std::size_t end = std::min(start + s, states.size());
    std::array<double, kDynamicDim> acc{};
    for (std::size_t i = start; i < end; ++i) {
      for (std::size_t d = 0; d < kDynamicDim; ++d) acc[d] += states[i][d];
    }
    for (double v : acc) out.push_back(v / static_cast<double>(end - start));
  }
  std::array<double, kDynamicDim> mean{};
  for (const auto& st : states) {
    for (std::size_t d = 0; d < kDynamicDim; ++d) mean[d] += st[d];
  }
  for (double v : mean) out.push_back(v / static_cast<double>(states.size()));
  return out;
}

std::vector<double> WorldModel::positional_encoding(std::size_t slot) const {
  std::vector<double> pe(cfg_.embed_dim);
  for (std::size_t i = 0; i < cfg_.embed_dim; ++i) {
    const double freq = std::pow(100.0, -static_cast<double>(i / 2 * 2) /
                                            static_cast<double>(cfg_.embed_dim));
    const double arg = static_cast<double>(slot) * freq;
    pe[i] = (i % 2 == 0) ? std::sin(arg) : std::cos(arg);
  }
  return pe;
}

WorldModel::Conditioning WorldModel::embed_conditioning(
    const ActionChunk& chunk, std::optional<std::span<const FrameMoments>> frames,
    std::span<const std::array<double, kDynamicDim>> history_states) const {
  if (chunk.length() != cfg_.chunk_len) {
    throw Error(Errc::ShapeMismatch, "chunk length " + std::to_string(chunk.length()) +
                                         " != configured " + std::to_string(cfg_.chunk_len));
  }
  Conditioning out;
  const std::size_t dm = cfg_.embed_dim;
  out.f_sa.assign(dm, 0.0);
  phi_.forward(block(0), normalized_chunk(chunk, cfg_.scaling), out.f_sa);

  out.f_af.assign(dm, 0.0);
  if (frames && !frames->empty()) {
    std::vector<double> h(dm);
    for (std::size_t t = 0; t < frames->size(); ++t) {
      psi_.forward(block(1), (*frames)[t], h);
      const auto pe = positional_encoding(t);
      for (std::size_t i = 0; i < dm; ++i) out.f_af[i] += h[i] + pe[i];
    }
    for (double& v : out.f_af) v /= static_cast<double>(frames->size());
  }

  out.f_hist.assign(cfg_.history_dim, 0.0);
  hist_.forward(block(2), pool_history(history_states), out.f_hist);

  out.combined.resize(conditioning_dim());
  for (std::size_t i = 0; i < dm; ++i) out.combined[i] = out.f_sa[i] + out.f_af[i];
  std::copy(out.f_hist.begin(), out.f_hist.end(), out.combined.begin() + static_cast<long>(dm));
  return out;
}

WorldModel::Conditioning WorldModel::embed_conditioning(const ActionChunk& chunk,
                                                        const std::vector<Image>* frames,
                                                        const History& history) const {
  std::vector<FrameMoments> moments;
  std::optional<std::span<const FrameMoments>> frame_span;
  if (frames != nullptr && cfg_.use_action_frames) {
    for (const Image& f : *frames) moments.push_back(action_frame_moments(f));
    frame_span = moments;
  }
  const auto states = history_states(history);
  return embed_conditioning(chunk, frame_span, states);
}

std::vector<double> WorldModel::dynamics_input(const EnvState& state, const ActionChunk& chunk,
                                               std::size_t slot,
                                               std::span<const double> cond) const {
  std::vector<double> x;
  x.reserve(dyn_.input_dim());
  const auto f = state_features(state);
  x.insert(x.end(), f.begin(), f.end());
  const auto a = cfg_.scaling.to_normalized(chunk.delta(slot));
  x.insert(x.end(), a.begin(), a.end());
  for (std::size_t c = 0; c < cfg_.chunk_len; ++c) x.push_back(c == slot ? 1.0 : 0.0);
  x.insert(x.end(), cond.begin(), cond.end());
  return x;
}

std::array<double, kDynamicDim> WorldModel::predict_delta(const EnvState& state,
                                                          const ActionChunk& chunk,
                                                          std::size_t slot,
                                                          std::span<const double> cond) const {
  std::array<double, kDynamicDim> out{};
  dyn_.forward(block(3), dynamics_input(state, chunk, slot, cond), out);
  return out;
}

std::vector<EnvState> WorldModel::step(const EnvState& state, const ActionChunk& chunk,
                                       const std::vector<Image>* frames,
                                       const History& history) const {
  const Conditioning cond = embed_conditioning(chunk, frames, history);
  std::vector<EnvState> out;
  out.reserve(cfg_.chunk_len);
  EnvState current = state;
  for (std::size_t c = 0; c < cfg_.chunk_len; ++c) {
    const auto delta = predict_delta(current, chunk, c, cond.combined);
    auto dyn = dynamic_vector(current);
    for (std::size_t i = 0; i < kDynamicDim; ++i) {
      dyn[i] += delta[i];
      if (!std::isfinite(dyn[i])) throw Error(Errc::NonFiniteValue, "world model diverged");
    }
    EnvState next = with_dynamic_vector(current, dyn, cfg_.env);
    next.step = current.step + 1;
    next.success = current.success || success_condition(next, cfg_.env);
    out.push_back(next);
    current = next;
  }
  return out;
}

double WorldModel::loss_and_grad(const EnvState& state, const ActionChunk& chunk,
                                 std::optional<std::span<const FrameMoments>> frames,
                                 std::span<const std::array<double, kDynamicDim>> history,
                                 std::span<const std::array<double, kDynamicDim>> next,
                                 std::span<double> grad) const {
  if (next.size() != cfg_.chunk_len) throw Error(Errc::ShapeMismatch, "next-state count");
  const std::size_t dm = cfg_.embed_dim;

  // Forward with caches.
  Mlp::Cache phi_cache, hist_cache;
  std::vector<double> f_sa(dm), f_hist(cfg_.history_dim);
  phi_.forward(block(0), normalized_chunk(chunk, cfg_.scaling), f_sa, &phi_cache);
  std::vector<Mlp::Cache> psi_caches;
  std::vector<double> f_af(dm, 0.0);
  const bool have_frames = cfg_.use_action_frames && frames && !frames->empty();
  if (have_frames) {
    psi_caches.resize(frames->size());
    std::vector<double> h(dm);
    for (std::size_t t = 0; t < frames->size(); ++t) {
      psi_.forward(block(1), (*frames)[t], h, &psi_caches[t]);
      const auto pe = positional_encoding(t);
      for (std::size_t i = 0; i < dm; ++i) f_af[i] += h[i] + pe[i];
    }
    for (double& v : f_af) v /= static_cast<double>(frames->size());
  }
  hist_.forward(block(2), pool_history(history), f_hist, &hist_cache);
  std::vector<double> cond(conditioning_dim());
  for (std::size_t i = 0; i < dm; ++i) cond[i] = f_sa[i] + f_af[i];
  std::copy(f_hist.begin(), f_hist.end(), cond.begin() + static_cast<long>(dm));

  // Teacher-forced per-slot regression.
  double loss = 0.0;
  std::vector<double> d_cond(conditioning_dim(), 0.0);
  std::vector<double> d_in(dyn_.input_dim());
  const std::size_t cond_off = kStateFeatureDim + kActionDim + cfg_.chunk_len;
  EnvState current = state;
  Mlp::Cache cache;
  std::array<double, kDynamicDim> pred{}, d_pred{};
  for (std::size_t c = 0; c < cfg_.chunk_len; ++c) {
    dyn_.forward(block(3), dynamics_input(current, chunk, c, cond), pred, &cache);
    const auto cur = dynamic_vector(current);
    for (std::size_t i = 0; i < kDynamicDim; ++i) {
      const double err = pred[i] - (next[c][i] - cur[i]);
      loss += err * err;
      d_pred[i] = 2.0 * err;
    }
    dyn_.backward(block(3), cache, d_pred, block(grad, 3), d_in);
    for (std::size_t i = 0; i < conditioning_dim(); ++i) d_cond[i] += d_in[cond_off + i];
    current = with_dynamic_vector(current, next[c], cfg_.env);
  }

  const std::span<const double> d_sa(d_cond.data(), dm);
  phi_.backward(block(0), phi_cache, d_sa, block(grad, 0));
  if (have_frames) {
    std::vector<double> d_h(dm);
    for (std::size_t i = 0; i < dm; ++i) d_h[i] = d_cond[i] / static_cast<double>(frames->size());
    for (std::size_t t = 0; t < frames->size(); ++t) {
      psi_.backward(block(1), psi_caches[t], d_h, block(grad, 1));
    }
  }
  hist_.backward(block(2), hist_cache,
                 std::span<const double>(d_cond.data() + dm, cfg_.history_dim), block(grad, 2));
  return loss;
}

double evaluate_world_model(const WorldModel& model, const std::vector<WmSample>& data) {
  if (data.empty()) throw Error(Errc::EmptyDataset, "no samples to evaluate");
  std::vector<double> scratch(model.num_params(), 0.0);
  double total = 0.0;
  for (const WmSample& s : data) {
    std::optional<std::span<const FrameMoments>> frames;
    if (!s.frames.empty()) frames = std::span<const FrameMoments>(s.frames);
    total += model.loss_and_grad(s.state, s.chunk, frames, s.history, s.next, scratch);
  }
  return total / static_cast<double>(data.size());
}

WorldModel train_world_model(const std::vector<WmSample>& data, const WorldModelConfig& cfg,
                             const WmTrainConfig& train, WmTrainReport* report) {
  if (data.empty()) throw Error(Errc::EmptyDataset, "world-model dataset is empty");
  Rng rng(train.seed, {0x574d});
  WorldModel model(cfg, derive_seed(train.seed, {1}));

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  shuffle_indices(order, rng);
  std::size_t n_val = static_cast<std::size_t>(
      std::floor(train.validation_fraction * static_cast<double>(data.size())));
  if (data.size() >= 2) n_val = std::clamp<std::size_t>(n_val, 1, data.size() - 1);
  else n_val = 0;
  std::vector<WmSample> val, tr;
  for (std::size_t i = 0; i < order.size(); ++i) {
    (i < n_val ? val : tr).push_back(data[order[i]]);
  }
  const std::vector<WmSample>& val_set = val.empty() ? tr : val;

  Adam opt(model.num_params(), train.lr);
  std::vector<double> grad(model.num_params());
  std::vector<double> best = std::vector<double>(model.params().begin(), model.params().end());
  double best_val = evaluate_world_model(model, val_set);
  std::size_t best_epoch = 0;
  WmTrainReport rep;

  std::vector<std::size_t> idx(tr.size());
  std::iota(idx.begin(), idx.end(), 0);
  const std::size_t bs = std::max<std::size_t>(1, train.batch_size);
  for (std::size_t epoch = 0; epoch < train.epochs; ++epoch) {
    shuffle_indices(idx, rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < idx.size(); start += bs) {
      const std::size_t end = std::min(start + bs, idx.size());
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t i = start; i < end; ++i) {
        const WmSample& s = tr[idx[i]];
        std::optional<std::span<const FrameMoments>> frames;
        if (!s.frames.empty()) frames = std::span<const FrameMoments>(s.frames);
        epoch_loss += model.loss_and_grad(s.state, s.chunk, frames, s.history, s.next, grad);
      }
      const double inv = 1.0 / static_cast<double>(end - start);
      for (double& g : grad) g *= inv;
      opt.step(model.mutable_params(), grad);
    }
    rep.train_loss.push_back(epoch_loss / static_cast<double>(tr.size()));
    const double v = evaluate_world_model(model, val_set);
    rep.validation_loss.push_back(v);
    if (v < best_val) {
      best_val = v;
      best_epoch = epoch + 1;
      best.assign(model.params().begin(), model.params().end());
    }
  }
  std::copy(best.begin(), best.end(), model.mutable_params().begin());
  model.trained = true;
  rep.best_epoch = best_epoch;
  rep.best_validation_loss = best_val;
  if (report) *report = std::move(rep);
  return model;
}

}  // namespace wmrl
