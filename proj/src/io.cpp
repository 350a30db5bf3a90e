#include "wmrl/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "wmrl/error.hpp"

namespace wmrl {

namespace {

constexpr char kTrajMagic[5] = {'P', 'R', 'T', 'J', '1'};
constexpr std::uint32_t kCheckpointVersion = 1;

class ByteWriter {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void f32(float f) {
    std::uint32_t v;
    std::memcpy(&v, &f, 4);
    u32(v);
  }
  void raw(const char* p, std::size_t n) { bytes_.insert(bytes_.end(), p, p + n); }
  void floats(const std::vector<float>& v) {
    for (float f : v) f32(f);
  }
  void save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(Errc::Io, "cannot open " + path.string() + " for writing");
    out.write(bytes_.data(), static_cast<std::streamsize>(bytes_.size()));
    if (!out) throw Error(Errc::Io, "write failed for " + path.string());
  }

 private:
  std::vector<char> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(const std::filesystem::path& path) : path_(path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::Io, "cannot open " + path.string());
    bytes_.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }
  [[nodiscard]] std::size_t remaining() const noexcept { return bytes_.size() - pos_; }
  void need(std::size_t n) const {
    if (remaining() < n) {
      throw Error(Errc::MalformedFile, path_.string() + ": truncated at byte " +
                                           std::to_string(pos_));
    }
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += 8;
    return v;
  }
  float f32() {
    const std::uint32_t v = u32();
    float f;
    std::memcpy(&f, &v, 4);
    return f;
  }
  bool magic(const char* m, std::size_t n) {
    if (remaining() < n || std::memcmp(bytes_.data() + pos_, m, n) != 0) return false;
    pos_ += n;
    return true;
  }
  std::vector<float> floats(std::size_t n) {
    need(n * 4);
    std::vector<float> v(n);
    for (float& f : v) f = f32();
    return v;
  }

 private:
  std::filesystem::path path_;
  std::vector<char> bytes_;
  std::size_t pos_ = 0;
};

struct Sizes {
  std::size_t mask, actions, logp, std, states;
};

Sizes sizes(const TrajectoryHeader& h) {
  const std::size_t s = h.max_steps, k = h.flow_steps, ch = h.chunk_len, d = h.action_dim;
  return {s * ch, s * ch * d, s * k * ch * d, s * k,
          (s * h.frames_per_chunk + 1) * kStateRecordDim};
}

}  // namespace

std::array<float, kStateRecordDim> encode_state(const EnvState& s) {
  return {static_cast<float>(s.gripper.x()), static_cast<float>(s.gripper.y()),
          static_cast<float>(s.gripper.z()), static_cast<float>(s.g),
          static_cast<float>(s.object.x()),  static_cast<float>(s.object.y()),
          static_cast<float>(s.object.z()),  s.attached ? 1.0f : 0.0f,
          static_cast<float>(s.goal.x()),    static_cast<float>(s.goal.y()),
          static_cast<float>(s.goal_radius), s.success ? 1.0f : 0.0f};
}

EnvState decode_state(std::span<const float> v, int step) {
  if (v.size() != kStateRecordDim) throw Error(Errc::ShapeMismatch, "state record size");
  EnvState s;
  s.gripper = Vec3(v[0], v[1], v[2]);
  s.g = v[3];
  s.object = Vec3(v[4], v[5], v[6]);
  s.attached = v[7] > 0.5f;
  s.goal = Vec2(v[8], v[9]);
  s.goal_radius = v[10];
  s.success = v[11] > 0.5f;
  s.step = step;
  return s;
}

TrajectoryEpisode episode_from_rollout(const RolloutRecord& rec, double reward,
                                       const FlowPolicy& policy, const TrajectoryHeader& h) {
  if (rec.length() > h.max_steps) throw Error(Errc::ShapeMismatch, "rollout longer than S");
  if (h.chunk_len != policy.chunk_len() || h.flow_steps != policy.schedule().steps() ||
      h.action_dim != kActionDim) {
    throw Error(Errc::ShapeMismatch, "trajectory header does not match the policy");
  }
  const Sizes z = sizes(h);
  TrajectoryEpisode ep;
  ep.length = static_cast<std::uint32_t>(rec.length());
  ep.reward = static_cast<float>(reward);
  ep.mask.assign(z.mask, 0.0f);
  ep.actions.assign(z.actions, 0.0f);
  ep.old_logp.assign(z.logp, 0.0f);
  ep.ref_logp.assign(z.logp, 0.0f);
  ep.std.assign(z.std, 0.0f);
  ep.states.assign(z.states, 0.0f);
  const std::size_t ch = h.chunk_len, d = h.action_dim, k = h.flow_steps;
  const auto x0 = encode_state(rec.initial);
  std::copy(x0.begin(), x0.end(), ep.states.begin());
  for (std::size_t s = 0; s < rec.length(); ++s) {
    const RolloutStep& st = rec.steps[s];
    for (std::size_t c = 0; c < ch; ++c) {
      ep.mask[s * ch + c] = rec.truncated ? 0.0f : 1.0f;
      for (std::size_t j = 0; j < d; ++j) {
        ep.actions[(s * ch + c) * d + j] = static_cast<float>(st.sampled.action(c, j));
      }
    }
    const Tensor old_lp = policy.logprob_elements(ParamSet::Behavior, st.obs, st.sampled);
    const Tensor ref_lp = policy.logprob_elements(ParamSet::Reference, st.obs, st.sampled);
    const std::size_t block = k * ch * d;
    for (std::size_t i = 0; i < block; ++i) {
      ep.old_logp[s * block + i] = static_cast<float>(old_lp.flat()[i]);
      ep.ref_logp[s * block + i] = static_cast<float>(ref_lp.flat()[i]);
    }
    for (std::size_t j = 0; j < k; ++j) ep.std[s * k + j] = static_cast<float>(st.sampled.stds[j]);
    if (st.next_states.size() != h.frames_per_chunk) {
      throw Error(Errc::ShapeMismatch, "step produced a different number of frames than C");
    }
    for (std::size_t c = 0; c < st.next_states.size(); ++c) {
      const auto enc = encode_state(st.next_states[c]);
      std::copy(enc.begin(), enc.end(),
                ep.states.begin() +
                    static_cast<long>((1 + s * h.frames_per_chunk + c) * kStateRecordDim));
    }
  }
  return ep;
}

std::vector<EnvState> episode_states(const TrajectoryEpisode& ep, const TrajectoryHeader& h) {
  const std::size_t n = 1 + static_cast<std::size_t>(ep.length) * h.frames_per_chunk;
  std::vector<EnvState> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(decode_state(
        std::span<const float>(ep.states).subspan(i * kStateRecordDim, kStateRecordDim),
        static_cast<int>(i)));
  }
  return out;
}

void write_trajectory_file(const std::filesystem::path& path, const TrajectoryFile& file) {
  const TrajectoryHeader& h = file.header;
  if (file.episodes.size() != h.batch) throw Error(Errc::ShapeMismatch, "episode count != B");
  const Sizes z = sizes(h);
  ByteWriter w;
  w.raw(kTrajMagic, sizeof(kTrajMagic));
  for (std::uint32_t v : {h.batch, h.max_steps, h.flow_steps, h.chunk_len, h.action_dim,
                          h.history_len, h.frames_per_chunk}) {
    w.u32(v);
  }
  for (const TrajectoryEpisode& ep : file.episodes) {
    if (ep.mask.size() != z.mask || ep.actions.size() != z.actions ||
        ep.old_logp.size() != z.logp || ep.ref_logp.size() != z.logp ||
        ep.std.size() != z.std || ep.states.size() != z.states) {
      throw Error(Errc::ShapeMismatch, "episode arrays do not match the header");
    }
    w.u32(ep.length);
    w.f32(ep.reward);
    w.floats(ep.mask);
    w.floats(ep.actions);
    w.floats(ep.old_logp);
    w.floats(ep.ref_logp);
    w.floats(ep.std);
    w.floats(ep.states);
  }
  w.save(path);
}

TrajectoryFile read_trajectory_file(const std::filesystem::path& path) {
  ByteReader r(path);
  if (!r.magic(kTrajMagic, sizeof(kTrajMagic))) {
    throw Error(Errc::MalformedFile, path.string() + ": bad magic");
  }
  TrajectoryFile f;
  TrajectoryHeader& h = f.header;
  h.batch = r.u32();
  h.max_steps = r.u32();
  h.flow_steps = r.u32();
  h.chunk_len = r.u32();
  h.action_dim = r.u32();
  h.history_len = r.u32();
  h.frames_per_chunk = r.u32();
  const Sizes z = sizes(h);
  const std::size_t per_episode =
      4 + 4 * (1 + z.mask + z.actions + 2 * z.logp + z.std + z.states);
  if (r.remaining() != static_cast<std::size_t>(h.batch) * per_episode) {
    throw Error(Errc::MalformedFile,
                path.string() + ": payload has " + std::to_string(r.remaining()) +
                    " bytes, header declares " +
                    std::to_string(static_cast<std::size_t>(h.batch) * per_episode));
  }
  f.episodes.resize(h.batch);
  for (TrajectoryEpisode& ep : f.episodes) {
    ep.length = r.u32();
    if (ep.length > h.max_steps) {
      throw Error(Errc::MalformedFile, path.string() + ": episode length exceeds S");
    }
    ep.reward = r.f32();
    ep.mask = r.floats(z.mask);
    ep.actions = r.floats(z.actions);
    ep.old_logp = r.floats(z.logp);
    ep.ref_logp = r.floats(z.logp);
    ep.std = r.floats(z.std);
    ep.states = r.floats(z.states);
  }
  return f;
}

void write_checkpoint(const std::filesystem::path& path, const char (&magic)[5],
                      std::span<const double> params) {
  ByteWriter w;
  w.raw(magic, 4);
  w.u32(kCheckpointVersion);
  w.u64(params.size());
  for (double p : params) w.f32(static_cast<float>(p));
  w.save(path);
}

std::vector<double> read_checkpoint(const std::filesystem::path& path, const char (&magic)[5]) {
  ByteReader r(path);
  if (!r.magic(magic, 4)) throw Error(Errc::MalformedFile, path.string() + ": bad magic");
  if (r.u32() != kCheckpointVersion) {
    throw Error(Errc::MalformedFile, path.string() + ": unsupported version");
  }
  const std::uint64_t n = r.u64();
  if (r.remaining() != n * 4) {
    throw Error(Errc::MalformedFile, path.string() + ": payload length mismatch");
  }
  std::vector<double> out(n);
  for (double& p : out) p = r.f32();
  return out;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

CsvWriter::CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& columns)
    : path_(path), columns_(columns.size()) {
  std::ofstream out(path_, std::ios::trunc);
  if (!out) throw Error(Errc::Io, "cannot open " + path_.string() + " for writing");
  for (std::size_t i = 0; i < columns.size(); ++i) out << (i ? "," : "") << columns[i];
  out << "\n";
}

void CsvWriter::row(const std::vector<std::string>& cells) {
  if (cells.size() != columns_) throw Error(Errc::ShapeMismatch, "CSV row width");
  std::ofstream out(path_, std::ios::app);
  if (!out) throw Error(Errc::Io, "cannot append to " + path_.string());
  for (std::size_t i = 0; i < cells.size(); ++i) out << (i ? "," : "") << cells[i];
  out << "\n";
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, "cannot open " + path.string());
  CsvTable t;
  std::string line;
  auto split = [](const std::string& s) {
    std::vector<std::string> cells;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!s.empty() && s.back() == ',') cells.emplace_back();
    return cells;
  };
  if (!std::getline(in, line)) throw Error(Errc::MalformedFile, path.string() + ": empty CSV");
  t.columns = split(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = split(line);
    if (cells.size() != t.columns.size()) {
      throw Error(Errc::MalformedFile, path.string() + ": ragged row");
    }
    t.rows.push_back(std::move(cells));
  }
  return t;
}

namespace {

bool parse_number(const std::string& s, double& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size() && std::isfinite(out);
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::size_t write_svg_plot(const CsvTable& table, const std::filesystem::path& out,
                           const std::string& title) {
  std::vector<std::size_t> numeric;
  for (std::size_t c = 0; c < table.columns.size(); ++c) {
    bool ok = !table.rows.empty();
    double v;
    for (const auto& row : table.rows) ok = ok && parse_number(row[c], v);
    if (ok) numeric.push_back(c);
  }
  const int panel_w = 560, panel_h = 140, margin = 50, gap = 30;
  const int width = panel_w + 2 * margin;
  const int height = margin + static_cast<int>(numeric.size()) * (panel_h + gap);
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
      << height << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  svg << "<text x=\"" << margin << "\" y=\"20\" font-size=\"14\">" << xml_escape(title)
      << "</text>\n";
  const std::size_t n = table.rows.size();
  for (std::size_t p = 0; p < numeric.size(); ++p) {
    const std::size_t col = numeric[p];
    std::vector<double> ys(n);
    for (std::size_t i = 0; i < n; ++i) parse_number(table.rows[i][col], ys[i]);
    double lo = *std::min_element(ys.begin(), ys.end());
    double hi = *std::max_element(ys.begin(), ys.end());
    if (hi == lo) {
      lo -= 0.5;
      hi += 0.5;
    }
    const int top = margin + static_cast<int>(p) * (panel_h + gap);
    svg << "<g>\n<text x=\"" << margin << "\" y=\"" << top - 6 << "\">"
        << xml_escape(table.columns[col]) << " [" << format_double(lo) << ", "
        << format_double(hi) << "]</text>\n";
    svg << "<rect x=\"" << margin << "\" y=\"" << top << "\" width=\"" << panel_w
        << "\" height=\"" << panel_h << "\" fill=\"none\" stroke=\"#999\"/>\n";
    svg << "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < n; ++i) {
      const double fx = n > 1 ? static_cast<double>(i) / static_cast<double>(n - 1) : 0.5;
      const double fy = (ys[i] - lo) / (hi - lo);
      svg << (i ? " " : "") << format_double(margin + fx * panel_w) << ","
          << format_double(top + (1.0 - fy) * panel_h);
    }
    svg << "\"/>\n</g>\n";
  }
  svg << "</svg>\n";
  std::ofstream f(out);
  if (!f) throw Error(Errc::Io, "cannot open " + out.string() + " for writing");
  f << svg.str();
  return numeric.size();
}

void write_png_sequence(const std::vector<Image>& frames, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%05zu.png", i);
    write_png(dir / name, frames[i]);
  }
}

std::vector<Image> read_png_sequence(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw Error(Errc::Io, dir.string() + " is not a directory");
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (entry.is_regular_file() && name.rfind("frame_", 0) == 0 &&
        entry.path().extension() == ".png") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw Error(Errc::Io, dir.string() + " holds no frame_*.png files");
  std::vector<Image> frames;
  for (const auto& f : files) frames.push_back(read_png(f));
  return frames;
}

}  // namespace wmrl
