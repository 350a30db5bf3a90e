#include "wmrl/action_space.hpp"

#include <algorithm>

#include "wmrl/error.hpp"

namespace wmrl {

ActionChunk ActionChunk::from_flat(std::span<const double> flat) {
  if (flat.size() % kActionDim != 0) {
    throw Error(Errc::ShapeMismatch, "flat chunk length is not a multiple of 7");
  }
  ActionChunk chunk(flat.size() / kActionDim);
  std::copy(flat.begin(), flat.end(), chunk.values_.begin());
  for (std::size_t c = 0; c < chunk.length(); ++c) {
    const double g = chunk(c, 6);
    if (!(g >= 0.0 && g <= 1.0)) {
      throw Error(Errc::InvalidArgument, "gripper ratio outside [0,1]");
    }
  }
  return chunk;
}

DeltaAction ActionChunk::delta(std::size_t c) const {
  const auto r = row(c);
  DeltaAction a;
  a.dp = Vec3(r[0], r[1], r[2]);
  a.de = Vec3(r[3], r[4], r[5]);
  a.g = r[6];
  return a;
}

void ActionChunk::set_delta(std::size_t c, const DeltaAction& a) {
  if (!(a.g >= 0.0 && a.g <= 1.0)) {
    throw Error(Errc::InvalidArgument, "gripper ratio outside [0,1]");
  }
  auto r = row(c);
  for (int i = 0; i < 3; ++i) {
    r[i] = a.dp[i];
    r[3 + i] = a.de[i];
  }
  r[6] = a.g;
}

std::vector<double> flatten_chunk(const ActionChunk& chunk) { return chunk.values(); }

PaddedActionSequence pad_sequence(const Tensor& seq, std::size_t n_max) {
  if (seq.rank() != 3 || seq.dim(2) != kActionDim) {
    throw Error(Errc::ShapeMismatch, "expected [T, n, 7], got " + seq.shape_string());
  }
  const std::size_t t_len = seq.dim(0);
  const std::size_t n = seq.dim(1);
  if (n > n_max) {
    throw Error(Errc::TooManyEndEffectors,
                std::to_string(n) + " end-effectors exceed n_max " + std::to_string(n_max));
  }
  PaddedActionSequence out{Tensor({t_len, n_max, kActionDim}), std::vector<bool>(n_max, false)};
  for (std::size_t j = 0; j < n; ++j) out.pad_mask[j] = true;
  for (std::size_t t = 0; t < t_len; ++t) {
    const auto src = seq.slice(t);
    auto dst = out.values.slice(t);
    std::copy(src.begin(), src.end(), dst.begin());
  }
  return out;
}

std::vector<Pose> integrate_actions(const Pose& start, const ActionChunk& chunk) {
  std::vector<Pose> poses;
  poses.reserve(chunk.length());
  Pose current = start;
  for (std::size_t c = 0; c < chunk.length(); ++c) {
    current = compose_delta(current, chunk.delta(c));
    poses.push_back(current);
  }
  return poses;
}

DeltaAction ActionScaling::to_physical(std::span<const double> a) const {
  if (a.size() != kActionDim) throw Error(Errc::ShapeMismatch, "expected 7 action values");
  DeltaAction out;
  out.dp = Vec3(a[0], a[1], a[2]) * translation;
  out.de = Vec3(a[3], a[4], a[5]) * rotation;
  out.g = std::clamp(0.5 + 0.5 * a[6], 0.0, 1.0);
  return out;
}

std::vector<double> ActionScaling::to_normalized(const DeltaAction& a) const {
  return {a.dp.x() / translation, a.dp.y() / translation, a.dp.z() / translation,
          a.de.x() / rotation,    a.de.y() / rotation,    a.de.z() / rotation,
          2.0 * a.g - 1.0};
}

}  // namespace wmrl
