#include "wmrl/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "wmrl/error.hpp"

namespace wmrl {

namespace {

// Thrown by value converters; assign() adds the key and location.
struct BadValue {
  std::string want;
};

[[noreturn]] void bad_value(const std::string&, const std::string&, const char* want) {
  throw BadValue{want};
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) {
    bad_value(key, v, "a non-negative integer");
  }
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const double out = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size() || !std::isfinite(out)) {
    bad_value(key, v, "a finite number");
  }
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  bad_value(key, v, "true or false");
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct Field {
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

using Registry = std::vector<std::pair<std::string, Field>>;

// Generic accessors for nested members.
template <class Get>
Field size_ref(Get get) {
  return {[get](RunConfig& c, const std::string& v) { get(c) = to_u64("", v); },
          [get](const RunConfig& c) { return std::to_string(get(const_cast<RunConfig&>(c))); }};
}
template <class Get>
Field double_ref(Get get) {
  return {[get](RunConfig& c, const std::string& v) { get(c) = to_double("", v); },
          [get](const RunConfig& c) { return fmt(get(const_cast<RunConfig&>(c))); }};
}
template <class Get>
Field bool_ref(Get get) {
  return {[get](RunConfig& c, const std::string& v) { get(c) = to_bool("", v); },
          [get](const RunConfig& c) {
            return std::string(get(const_cast<RunConfig&>(c)) ? "true" : "false");
          }};
}

#define SZ(expr) size_ref([](RunConfig& c) -> auto& { return c.expr; })
#define DB(expr) double_ref([](RunConfig& c) -> double& { return c.expr; })
#define BL(expr) bool_ref([](RunConfig& c) -> bool& { return c.expr; })

const Registry& registry() {
  static const Registry r = [] {
    Registry r;
    r.emplace_back("run.seed", SZ(seed));
    r.emplace_back("run.out_dir",
                   Field{[](RunConfig& c, const std::string& v) { c.out_dir = v; },
                         [](const RunConfig& c) { return c.out_dir; }});
    r.emplace_back("run.workers", SZ(workers));
    r.emplace_back("run.updates", SZ(updates));
    r.emplace_back("run.checkpoint_interval", SZ(checkpoint_interval));
    r.emplace_back("run.trajectory_interval", SZ(trajectory_interval));
    r.emplace_back("run.eval_interval", SZ(eval_interval));
    r.emplace_back("run.eval_episodes", SZ(eval_episodes));
    r.emplace_back("run.eval_seed", SZ(eval_seed));
    r.emplace_back(
        "run.backend",
        Field{[](RunConfig& c, const std::string& v) {
                if (v == "env") {
                  c.backend = BackendKind::Env;
                } else if (v == "world_model") {
                  c.backend = BackendKind::WorldModel;
                } else {
                  bad_value("run.backend", v, "env or world_model");
                }
              },
              [](const RunConfig& c) {
                return std::string(c.backend == BackendKind::Env ? "env" : "world_model");
              }});
    r.emplace_back("log.wallclock", BL(log_wallclock));

    r.emplace_back("env.z_max", DB(env.z_max));
    r.emplace_back("env.move_clip", DB(env.move_clip));
    r.emplace_back("env.attach_radius", DB(env.attach_radius));
    r.emplace_back("env.gripper_threshold", DB(env.gripper_threshold));
    r.emplace_back("env.goal_radius", DB(env.goal_radius));
    r.emplace_back("env.start_height", DB(env.start_height));
    r.emplace_back("env.min_object_goal_distance", DB(env.min_object_goal_distance));
    r.emplace_back("env.canvas",
                   Field{[](RunConfig& c, const std::string& v) {
                           c.env.canvas = static_cast<int>(to_u64("env.canvas", v));
                         },
                         [](const RunConfig& c) { return std::to_string(c.env.canvas); }});

    r.emplace_back("policy.chunk_len", SZ(chunk_len));
    r.emplace_back("policy.hidden", SZ(hidden));
    r.emplace_back("policy.init_scale", DB(init_scale));
    r.emplace_back("policy.flow_steps", SZ(flow_steps));
    r.emplace_back("policy.sigma_table",
                   Field{[](RunConfig& c, const std::string& v) {
                           c.sigma_table.clear();
                           std::stringstream ss(v);
                           std::string item;
                           while (std::getline(ss, item, ',')) {
                             c.sigma_table.push_back(to_double("policy.sigma_table", trim(item)));
                           }
                         },
                         [](const RunConfig& c) {
                           std::string out;
                           for (std::size_t i = 0; i < c.sigma_table.size(); ++i) {
                             out += (i ? ", " : "") + fmt(c.sigma_table[i]);
                           }
                           return out;
                         }});
    r.emplace_back("policy.translation_scale", DB(translation_scale));
    r.emplace_back("policy.rotation_scale", DB(rotation_scale));

    r.emplace_back("rollout.history_len", SZ(history_len));
    r.emplace_back("rollout.max_steps", SZ(max_steps));
    r.emplace_back("rollout.frames_per_chunk", SZ(frames_per_chunk));

    r.emplace_back("bc.enabled", BL(bc_enabled));
    r.emplace_back("bc.demos", SZ(bc_demos));
    r.emplace_back("bc.expert_noise", DB(bc_expert_noise));
    r.emplace_back("bc.epochs", SZ(bc_epochs));
    r.emplace_back("bc.batch_size", SZ(bc_batch_size));
    r.emplace_back("bc.lr", DB(bc_lr));

    r.emplace_back("wm.episodes", SZ(wm_data.episodes));
    r.emplace_back("wm.expert_fraction", DB(wm_data.expert_fraction));
    r.emplace_back("wm.expert_noise", DB(wm_data.expert_noise));
    r.emplace_back("wm.epochs", SZ(wm_train.epochs));
    r.emplace_back("wm.batch_size", SZ(wm_train.batch_size));
    r.emplace_back("wm.lr", DB(wm_train.lr));
    r.emplace_back("wm.validation_fraction", DB(wm_train.validation_fraction));
    r.emplace_back("wm.embed_dim", SZ(wm_embed_dim));
    r.emplace_back("wm.history_dim", SZ(wm_history_dim));
    r.emplace_back("wm.pool_stride", SZ(wm_pool_stride));
    r.emplace_back("wm.hidden", SZ(wm_hidden));
    r.emplace_back("wm.action_frames", BL(wm_action_frames));

    r.emplace_back("rl.groups", SZ(groups));
    r.emplace_back("rl.group_size", SZ(group_size));
    r.emplace_back("rl.minibatch", SZ(minibatch));
    r.emplace_back("rl.sync_interval", SZ(sync_interval));
    r.emplace_back(
        "rl.optimizer",
        Field{[](RunConfig& c, const std::string& v) {
                if (v == "adam") {
                  c.optimizer = OptimizerKind::Adam;
                } else if (v == "sgd") {
                  c.optimizer = OptimizerKind::Sgd;
                } else {
                  bad_value("rl.optimizer", v, "adam or sgd");
                }
              },
              [](const RunConfig& c) {
                return std::string(c.optimizer == OptimizerKind::Adam ? "adam" : "sgd");
              }});
    r.emplace_back("rl.lr", DB(lr));
    r.emplace_back("rl.momentum", DB(momentum));
    r.emplace_back("rl.max_grad_norm", DB(max_grad_norm));
    r.emplace_back("rl.eps_r", DB(eps_r));

    r.emplace_back("clip.eps_low", DB(clip.eps_low));
    r.emplace_back("clip.eps_high", DB(clip.eps_high));
    r.emplace_back("clip.beta", DB(clip.beta));

    r.emplace_back("flowscale.enabled", BL(flowscale_enabled));
    r.emplace_back("flowscale.p", DB(flowscale.p));
    r.emplace_back("flowscale.alpha", DB(flowscale.alpha));
    r.emplace_back("flowscale.w_min", DB(flowscale.w_min));
    r.emplace_back("flowscale.w_max", DB(flowscale.w_max));
    r.emplace_back("flowscale.eps", DB(flowscale.eps));

    r.emplace_back(
        "reward.kind",
        Field{[](RunConfig& c, const std::string& v) {
                if (v == "oracle") {
                  c.reward.kind = RewardScorer::Kind::Oracle;
                } else if (v == "corrupted") {
                  c.reward.kind = RewardScorer::Kind::Corrupted;
                } else {
                  bad_value("reward.kind", v, "oracle or corrupted");
                }
              },
              [](const RunConfig& c) {
                return std::string(c.reward.kind == RewardScorer::Kind::Oracle ? "oracle"
                                                                               : "corrupted");
              }});
    r.emplace_back("reward.recall", DB(reward.recall));
    r.emplace_back("reward.fpr", DB(reward.fpr));
    r.emplace_back("reward.votes",
                   Field{[](RunConfig& c, const std::string& v) {
                           c.reward.votes = static_cast<int>(to_u64("reward.votes", v));
                         },
                         [](const RunConfig& c) { return std::to_string(c.reward.votes); }});
    r.emplace_back("reward.seed", SZ(reward.seed));
    return r;
  }();
  return r;
}

#undef SZ
#undef DB
#undef BL

void assign(RunConfig& cfg, const std::string& key, const std::string& value,
            const std::string& where) {
  for (const auto& [name, field] : registry()) {
    if (name != key) continue;
    try {
      field.set(cfg, value);
    } catch (const BadValue& e) {
      throw Error(Errc::ConfigParse,
                  where + key + ": expected " + e.want + ", got '" + value + "'");
    }
    return;
  }
  throw Error(Errc::ConfigParse, where + "unknown key '" + key + "'");
}

}  // namespace

std::vector<double> RunConfig::default_sigma_table() {
  return NoiseSchedule::linear_ramp(1.0, 0.1, 32, 4).table();
}

PolicyConfig RunConfig::policy_config() const {
  PolicyConfig p;
  p.obs_dim = kObservationDim;
  p.chunk_len = chunk_len;
  p.hidden = hidden;
  p.init_scale = init_scale;
  p.scaling = {translation_scale, rotation_scale};
  return p;
}

NoiseSchedule RunConfig::schedule() const { return NoiseSchedule(sigma_table, flow_steps); }

RolloutConfig RunConfig::rollout_config() const {
  RolloutConfig r;
  r.history_len = history_len;
  r.frames_per_chunk = frames_per_chunk;
  r.max_steps = max_steps;
  return r;
}

WorldModelConfig RunConfig::world_model_config() const {
  WorldModelConfig w;
  w.chunk_len = chunk_len;
  w.history_len = history_len;
  w.embed_dim = wm_embed_dim;
  w.history_dim = wm_history_dim;
  w.pool_stride = wm_pool_stride;
  w.hidden = wm_hidden;
  w.init_scale = init_scale;
  w.use_action_frames = wm_action_frames;
  w.scaling = {translation_scale, rotation_scale};
  w.env = env;
  return w;
}

RlConfig RunConfig::rl_config(std::uint64_t rl_seed) const {
  RlConfig r;
  r.updates = updates;
  r.groups = groups;
  r.group_size = group_size;
  r.minibatch = minibatch;
  r.sync_interval = sync_interval;
  r.optimizer = optimizer;
  r.lr = lr;
  r.momentum = momentum;
  r.max_grad_norm = max_grad_norm;
  r.clip = clip;
  r.use_flowscale = flowscale_enabled;
  r.flowscale = flowscale;
  r.eps_r = eps_r;
  r.rollout = rollout_config();
  r.workers = workers;
  r.seed = rl_seed;
  return r;
}

void RunConfig::validate() const {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw Error(Errc::ConfigParse, msg);
  };
  require(workers >= 1, "run.workers must be at least 1");
  require(chunk_len >= 1, "policy.chunk_len must be at least 1");
  require(frames_per_chunk == chunk_len,
          "rollout.frames_per_chunk must equal policy.chunk_len (one state per command)");
  require(flow_steps >= 1, "policy.flow_steps must be at least 1");
  require(!sigma_table.empty(), "policy.sigma_table must not be empty");
  for (double s : sigma_table) require(s > 0.0, "policy.sigma_table entries must be positive");
  require(hidden >= 1, "policy.hidden must be at least 1");
  require(history_len >= 1, "rollout.history_len must be at least 1");
  require(max_steps >= 1, "rollout.max_steps must be at least 1");
  require(groups >= 1 && group_size >= 1, "rl.groups and rl.group_size must be positive");
  require(minibatch >= 1, "rl.minibatch must be at least 1");
  require(sync_interval >= 1, "rl.sync_interval must be at least 1");
  require(lr > 0.0 && bc_lr > 0.0 && wm_train.lr > 0.0, "learning rates must be positive");
  require(bc_batch_size >= 1 && wm_train.batch_size >= 1, "batch sizes must be positive");
  require(eval_episodes >= 1, "run.eval_episodes must be at least 1");
  require(wm_pool_stride >= 1, "wm.pool_stride must be at least 1");
  require(wm_data.expert_fraction >= 0.0 && wm_data.expert_fraction <= 1.0,
          "wm.expert_fraction must lie in [0, 1]");
  require(wm_train.validation_fraction >= 0.0 && wm_train.validation_fraction < 1.0,
          "wm.validation_fraction must lie in [0, 1)");
  require(reward.recall >= 0.0 && reward.recall <= 1.0 && reward.fpr >= 0.0 &&
              reward.fpr <= 1.0,
          "reward.recall and reward.fpr must lie in [0, 1]");
  require(reward.votes >= 1, "reward.votes must be at least 1");
  require(env.canvas >= 16, "env.canvas must be at least 16");
  try {
    clip.validate();
    flowscale.validate();
  } catch (const Error& e) {
    throw Error(Errc::ConfigParse, e.what());
  }
}

RunConfig parse_config(const std::string& text) {
  RunConfig cfg;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = "line " + std::to_string(lineno) + ": ";
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(Errc::ConfigParse, where + "expected 'section.key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.find('.') == std::string::npos) {
      throw Error(Errc::ConfigParse, where + "key '" + key + "' has no section prefix");
    }
    if (!seen.insert(key).second) {
      throw Error(Errc::ConfigParse, where + "duplicate key '" + key + "'");
    }
    assign(cfg, key, value, where);
  }
  cfg.validate();
  return cfg;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunConfig load_config(const std::filesystem::path& path) {
  return parse_config(read_text_file(path));
}

std::string to_text(const RunConfig& cfg) {
  std::string out;
  std::string section;
  for (const auto& [name, field] : registry()) {
    const std::string sec = name.substr(0, name.find('.'));
    if (sec != section) {
      if (!section.empty()) out += "\n";
      section = sec;
    }
    out += name + " = " + field.get(cfg) + "\n";
  }
  return out;
}

void apply_override(RunConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) {
    throw Error(Errc::ConfigParse, "override '" + assignment + "' is not key=value");
  }
  assign(cfg, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)),
         "override: ");
  cfg.validate();
}

}  // namespace wmrl
