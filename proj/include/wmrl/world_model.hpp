#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "wmrl/action_space.hpp"
#include "wmrl/env.hpp"
#include "wmrl/history.hpp"
#include "wmrl/image.hpp"
#include "wmrl/nn.hpp"

namespace wmrl {

// One entry of the rollout history: the low-dimensional state and, when
// rendering is enabled, its rasterized frame.
struct HistoryFrame {
  EnvState state;
  Image image;

  bool operator==(const HistoryFrame&) const = default;
};

using History = HistoryBuffer<HistoryFrame>;

// Spatial pooling of an action frame after a per-pixel linear embedding of
// [rgb, rgb*x, rgb*y] (x, y in [-1, 1]): pooling commutes with the 1x1
// projection, so the pooled embedding is a linear map of these 9 moments.
inline constexpr std::size_t kFrameMoments = 9;
using FrameMoments = std::array<double, kFrameMoments>;
FrameMoments action_frame_moments(const Image& frame);

// Action frames for every slot of a chunk: the commanded gripper pose
// (position accumulated from clipped dp, rotation from accumulated de) and g.
std::vector<Image> render_chunk_action_frames(const EnvState& state, const ActionChunk& chunk,
                                              const EnvConfig& env);

struct WorldModelConfig {
  std::size_t chunk_len = 2;     // C
  std::size_t history_len = 6;   // T_h
  std::size_t embed_dim = 16;    // D_m analogue
  std::size_t history_dim = 8;
  std::size_t pool_stride = 2;
  std::size_t hidden = 64;
  double init_scale = 0.1;
  bool use_action_frames = true;
  ActionScaling scaling{};
  EnvConfig env{};
};

// Learned dynamics: for each chunk slot, next dynamic state = current +
// net([state features, slot action, slot one-hot, f_sa + f_af, f_hist]).
//   f_sa   = phi(flatten(chunk))           (two-layer MLP)
//   f_af   = mean_slots(psi(moments) + PE) (zero when frames are absent)
//   f_hist = linear(strided mean pools of the buffered dynamic states)
class WorldModel {
 public:
  explicit WorldModel(const WorldModelConfig& cfg, std::uint64_t seed = 0);

  [[nodiscard]] const WorldModelConfig& config() const noexcept { return cfg_; }
  [[nodiscard]] std::span<const double> params() const noexcept { return params_; }
  [[nodiscard]] std::span<double> mutable_params() noexcept { return params_; }
  [[nodiscard]] std::size_t num_params() const noexcept { return params_.size(); }

  [[nodiscard]] std::size_t conditioning_dim() const noexcept {
    return cfg_.embed_dim + cfg_.history_dim;
  }
  [[nodiscard]] std::size_t pooled_history_dim() const noexcept;

  // Strided mean pools (window = stride = pool_stride) plus the global mean.
  [[nodiscard]] std::vector<double> pool_history(
      std::span<const std::array<double, kDynamicDim>> states) const;

  struct Conditioning {
    std::vector<double> f_sa;
    std::vector<double> f_af;
    std::vector<double> f_hist;
    std::vector<double> combined;  // (f_sa + f_af) ++ f_hist
  };

  [[nodiscard]] Conditioning embed_conditioning(
      const ActionChunk& chunk, std::optional<std::span<const FrameMoments>> frames,
      std::span<const std::array<double, kDynamicDim>> history_states) const;
  [[nodiscard]] Conditioning embed_conditioning(const ActionChunk& chunk,
                                                const std::vector<Image>* frames,
                                                const History& history) const;

  // Predicted next dynamic-state delta for one slot.
  [[nodiscard]] std::array<double, kDynamicDim> predict_delta(const EnvState& state,
                                                              const ActionChunk& chunk,
                                                              std::size_t slot,
                                                              std::span<const double> cond) const;

  // C predicted states, applied sequentially per slot. Throws NonFiniteValue.
  [[nodiscard]] std::vector<EnvState> step(const EnvState& state, const ActionChunk& chunk,
                                           const std::vector<Image>* frames,
                                           const History& history) const;

  // Training plumbing: per-sample loss/grad of the summed squared error of
  // predicted deltas against targets; returns the loss and accumulates grad.
  double loss_and_grad(const EnvState& state, const ActionChunk& chunk,
                       std::optional<std::span<const FrameMoments>> frames,
                       std::span<const std::array<double, kDynamicDim>> history_states,
                       std::span<const std::array<double, kDynamicDim>> next_states,
                       std::span<double> grad) const;

  bool trained = false;

 private:
  std::vector<double> dynamics_input(const EnvState& state, const ActionChunk& chunk,
                                     std::size_t slot, std::span<const double> cond) const;
  std::span<const double> block(std::size_t i) const;
  std::span<double> block(std::span<double> all, std::size_t i) const;
  std::vector<double> positional_encoding(std::size_t slot) const;

  WorldModelConfig cfg_;
  Mlp phi_, psi_, hist_, dyn_;
  std::array<std::size_t, 5> offsets_{};
  std::vector<double> params_;
};

std::vector<double> normalized_chunk(const ActionChunk& chunk, const ActionScaling& scaling);

// One logged transition group: a state, the chunk applied, its action-frame
// moments (empty when frames were not rendered), the history states, and the
// C next dynamic states.
struct WmSample {
  EnvState state;
  ActionChunk chunk;
  std::vector<FrameMoments> frames;
  std::vector<std::array<double, kDynamicDim>> history;
  std::vector<std::array<double, kDynamicDim>> next;
};

struct WmTrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  double lr = 1e-3;
  double validation_fraction = 0.1;
  std::uint64_t seed = 0;
};

struct WmTrainReport {
  std::vector<double> train_loss;       // per epoch, mean per-sample loss
  std::vector<double> validation_loss;  // per epoch
  std::size_t best_epoch = 0;
  double best_validation_loss = 0.0;
};

// Adam regression on next-state deltas; returns the best-validation weights.
// Throws EmptyDataset.
WorldModel train_world_model(const std::vector<WmSample>& data, const WorldModelConfig& cfg,
                             const WmTrainConfig& train, WmTrainReport* report = nullptr);

// Mean per-sample summed squared error over next-state deltas.
double evaluate_world_model(const WorldModel& model, const std::vector<WmSample>& data);

}  // namespace wmrl
