#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "wmrl/env.hpp"
#include "wmrl/flow_policy.hpp"
#include "wmrl/rollout.hpp"

namespace wmrl {

// ---- trajectory file ----
//
// Little-endian. "PRTJ1", then B, S, K, CH, D, T_h, C as u32, then B episode
// records: T_i (u32) followed by f32 arrays
//   reward [1], mask [S*CH], actions [S*CH*D], old_logp [S*K*CH*D],
//   ref_logp [S*K*CH*D], std [S*K], states [(S*C + 1) * kStateRecordDim].
// Slots past the episode end are zero.

inline constexpr std::size_t kStateRecordDim = 12;  // gripper 3, g, object 3, attached, goal 2, radius, success

struct TrajectoryHeader {
  std::uint32_t batch = 0, max_steps = 0, flow_steps = 0, chunk_len = 0, action_dim = 0,
                history_len = 0, frames_per_chunk = 0;

  bool operator==(const TrajectoryHeader&) const = default;
};

struct TrajectoryEpisode {
  std::uint32_t length = 0;
  float reward = 0.0f;
  std::vector<float> mask, actions, old_logp, ref_logp, std, states;

  bool operator==(const TrajectoryEpisode&) const = default;
};

struct TrajectoryFile {
  TrajectoryHeader header;
  std::vector<TrajectoryEpisode> episodes;

  bool operator==(const TrajectoryFile&) const = default;
};

std::array<float, kStateRecordDim> encode_state(const EnvState& s);
EnvState decode_state(std::span<const float> v, int step);

// Packs a rollout. Behaviour and reference log-probabilities are evaluated
// with the policy's current snapshots.
TrajectoryEpisode episode_from_rollout(const RolloutRecord& rec, double reward,
                                       const FlowPolicy& policy, const TrajectoryHeader& h);
// The recorded state sequence: x0 followed by T_i * C generated states.
std::vector<EnvState> episode_states(const TrajectoryEpisode& ep, const TrajectoryHeader& h);

void write_trajectory_file(const std::filesystem::path& path, const TrajectoryFile& file);
// Throws Io when the file cannot be opened and MalformedFile when the magic,
// header, or payload length is inconsistent.
TrajectoryFile read_trajectory_file(const std::filesystem::path& path);

// ---- checkpoints ----
// "PRCK" (policy) or "PRWM" (world model), u32 version, u64 count, f32 values.
// Values are rounded to single precision on write.

void write_checkpoint(const std::filesystem::path& path, const char (&magic)[5],
                      std::span<const double> params);
std::vector<double> read_checkpoint(const std::filesystem::path& path, const char (&magic)[5]);

// ---- CSV and plots ----

std::string format_double(double v);

class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& columns);
  void row(const std::vector<std::string>& cells);

 private:
  std::filesystem::path path_;
  std::size_t columns_;
};

struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
};

CsvTable read_csv(const std::filesystem::path& path);

// One polyline per numeric column (row index on x). Returns the number of
// polylines written.
std::size_t write_svg_plot(const CsvTable& table, const std::filesystem::path& out,
                           const std::string& title);

// Zero-padded PNG sequences: frame_00000.png, frame_00001.png, ...
void write_png_sequence(const std::vector<Image>& frames, const std::filesystem::path& dir);
std::vector<Image> read_png_sequence(const std::filesystem::path& dir);

}  // namespace wmrl
