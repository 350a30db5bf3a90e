#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "wmrl/geometry.hpp"
#include "wmrl/tensor.hpp"

namespace wmrl {

inline constexpr std::size_t kActionDim = 7;  // dp(3), de(3), g

// [CH, 7] block of per-step commands emitted by one policy call.
class ActionChunk {
 public:
  ActionChunk() = default;
  explicit ActionChunk(std::size_t chunk_len) : values_(chunk_len * kActionDim, 0.0) {}
  static ActionChunk from_flat(std::span<const double> flat);

  [[nodiscard]] std::size_t length() const noexcept { return values_.size() / kActionDim; }

  double& operator()(std::size_t c, std::size_t d) { return values_[c * kActionDim + d]; }
  [[nodiscard]] double operator()(std::size_t c, std::size_t d) const {
    return values_[c * kActionDim + d];
  }

  [[nodiscard]] std::span<const double> row(std::size_t c) const {
    return std::span<const double>(values_).subspan(c * kActionDim, kActionDim);
  }
  [[nodiscard]] std::span<double> row(std::size_t c) {
    return std::span<double>(values_).subspan(c * kActionDim, kActionDim);
  }

  [[nodiscard]] DeltaAction delta(std::size_t c) const;
  void set_delta(std::size_t c, const DeltaAction& a);

  [[nodiscard]] const std::vector<double>& values() const noexcept { return values_; }

  bool operator==(const ActionChunk&) const = default;

 private:
  std::vector<double> values_;
};

// Row-major [CH*7] vector; ActionChunk::from_flat is the inverse.
std::vector<double> flatten_chunk(const ActionChunk& chunk);

struct PaddedActionSequence {
  Tensor values;               // [T, n_max, 7]
  std::vector<bool> pad_mask;  // true for physical end-effectors
};

// seq is [T, n, 7]. Throws Errc::TooManyEndEffectors when n > n_max.
PaddedActionSequence pad_sequence(const Tensor& seq, std::size_t n_max);

// Sequential compose_delta over every row of the chunk; returns CH poses.
std::vector<Pose> integrate_actions(const Pose& start, const ActionChunk& chunk);

// Mapping between the policy's normalized action space and physical commands.
// Translation and rotation scale linearly; g = clamp(0.5 + 0.5 a_6, 0, 1).
struct ActionScaling {
  double translation = 0.1;  // metres per unit
  double rotation = 0.1;     // radians per unit

  [[nodiscard]] DeltaAction to_physical(std::span<const double> normalized) const;
  [[nodiscard]] std::vector<double> to_normalized(const DeltaAction& a) const;
};

}  // namespace wmrl
