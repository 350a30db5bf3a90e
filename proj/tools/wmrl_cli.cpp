// Command-line front end: train, eval-flow, render-frames, rollout, rm-diag, plot.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage/config error or missing
// input, 3 malformed trajectory or checkpoint file.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "wmrl/config.hpp"
#include "wmrl/error.hpp"
#include "wmrl/flow_eval.hpp"
#include "wmrl/io.hpp"
#include "wmrl/run.hpp"

namespace {

using namespace wmrl;

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;
constexpr int kExitMalformed = 3;

struct UsageError {
  std::string message;
};

void require_file(const std::string& path, const char* what) {
  if (!std::filesystem::exists(path)) throw UsageError{std::string(what) + " not found: " + path};
}

std::optional<std::string> env_var(const char* name) {
  const char* v = std::getenv(name);
  if (v == nullptr || *v == '\0') return std::nullopt;
  return std::string(v);
}

std::string cell(const std::optional<double>& v) {
  return v ? format_double(*v) : std::string("nan");
}

// ---- train ----

struct TrainArgs {
  std::string config;
  std::optional<std::size_t> updates;
  std::optional<std::size_t> workers;
  std::string out;
  std::vector<std::string> overrides;
  bool quiet = false;
};

int cmd_train(const TrainArgs& a) {
  require_file(a.config, "config");
  const std::string source = read_text_file(a.config);
  RunConfig cfg = parse_config(source);
  for (const auto& o : a.overrides) apply_override(cfg, o);
  if (auto v = env_var("WMRL_OUT_DIR")) cfg.out_dir = *v;
  if (auto v = env_var("WMRL_WORKERS")) apply_override(cfg, "run.workers=" + *v);
  if (!a.out.empty()) cfg.out_dir = a.out;
  if (a.workers) cfg.workers = *a.workers;
  if (a.updates) cfg.updates = *a.updates;
  cfg.validate();

  const std::filesystem::path dir(cfg.out_dir);
  try {
    std::filesystem::create_directories(dir);
    {
      std::ofstream src(dir / "config.source.txt", std::ios::binary);
      src << source;
    }
    const RunSummary s = run_training(cfg, a.quiet ? nullptr : &std::cerr);
    if (cfg.updates > 0) {
      std::cout << "success " << format_double(s.initial_success) << " -> "
                << format_double(s.final_success) << "\n";
    }
  } catch (const std::exception& e) {
    std::ofstream report(dir / "error.txt");
    report << e.what() << "\n";
    throw;
  }
  return kExitOk;
}

// ---- eval-flow ----

struct EvalFlowArgs {
  std::string real, gen, out;
  double tau = 0.2;
  double eps = 1e-8;
  bool valid_only = false;
};

int cmd_eval_flow(const EvalFlowArgs& a) {
  require_file(a.real, "real frame directory");
  require_file(a.gen, "generated frame directory");
  const std::vector<Image> real = read_png_sequence(a.real);
  const std::vector<Image> gen = read_png_sequence(a.gen);
  FlowMetricOptions opts;
  opts.tau = a.tau;
  opts.eps = a.eps;
  opts.epe_on_valid_only = a.valid_only;
  const FlowEvalRow r = evaluate_videos(real, gen, FarnebackConfig{}, opts);
  std::ostringstream csv;
  csv << "psnr,ssim,tssim,mean_epe,median_epe,mean_cos,median_cos\n"
      << format_double(r.visual.psnr) << "," << format_double(r.visual.ssim) << ","
      << cell(r.visual.tssim) << "," << format_double(r.flow.mean_epe) << ","
      << format_double(r.flow.median_epe) << "," << cell(r.flow.mean_cos) << ","
      << cell(r.flow.median_cos) << "\n";
  if (a.out.empty()) {
    std::cout << csv.str();
  } else {
    std::ofstream f(a.out);
    if (!f) throw Error(Errc::Io, "cannot write " + a.out);
    f << csv.str();
  }
  return kExitOk;
}

// ---- render-frames ----

struct RenderArgs {
  std::string trajectory, out, config;
  std::size_t episode = 0;
};

EnvConfig env_from(const std::string& config_path) {
  if (config_path.empty()) return EnvConfig{};
  require_file(config_path, "config");
  return load_config(config_path).env;
}

int cmd_render_frames(const RenderArgs& a) {
  require_file(a.trajectory, "trajectory file");
  const EnvConfig env = env_from(a.config);
  const TrajectoryFile file = read_trajectory_file(a.trajectory);
  if (a.episode >= file.episodes.size()) {
    throw UsageError{"episode " + std::to_string(a.episode) + " out of range (file holds " +
                     std::to_string(file.episodes.size()) + ")"};
  }
  std::vector<Image> frames;
  for (const EnvState& s : episode_states(file.episodes[a.episode], file.header)) {
    frames.push_back(rasterize_state(s, env));
  }
  write_png_sequence(frames, a.out);
  std::cout << frames.size() << " frames written to " << a.out << "\n";
  return kExitOk;
}

// ---- rollout ----

struct RolloutArgs {
  std::string checkpoint, config, world_model, out, backend = "env";
  std::size_t episodes = 8;
  std::uint64_t seed = 0;
  std::optional<std::size_t> workers;
};

int cmd_rollout(const RolloutArgs& a) {
  require_file(a.config, "config");
  require_file(a.checkpoint, "checkpoint");
  if (!a.world_model.empty()) require_file(a.world_model, "world-model checkpoint");
  RunConfig cfg = load_config(a.config);
  if (auto v = env_var("WMRL_WORKERS")) apply_override(cfg, "run.workers=" + *v);
  if (a.workers) cfg.workers = *a.workers;

  const std::vector<double> theta = read_checkpoint(a.checkpoint, "PRCK");
  FlowPolicy probe(cfg.policy_config(), cfg.schedule(), 0);
  if (theta.size() != probe.num_params()) {
    throw Error(Errc::MalformedFile, a.checkpoint + " holds " + std::to_string(theta.size()) +
                                         " parameters, the configured policy has " +
                                         std::to_string(probe.num_params()));
  }
  const FlowPolicy policy(cfg.policy_config(), cfg.schedule(), theta);

  std::unique_ptr<Backend> backend;
  if (a.backend == "env") {
    backend = std::make_unique<GroundTruthBackend>(cfg.env);
  } else if (a.backend == "world_model") {
    if (a.world_model.empty()) {
      backend = std::make_unique<WorldModelBackend>(WorldModelBackend::perfect(cfg.env));
    } else {
      auto model = std::make_shared<WorldModel>(cfg.world_model_config());
      const std::vector<double> w = read_checkpoint(a.world_model, "PRWM");
      if (w.size() != model->num_params()) {
        throw Error(Errc::MalformedFile, a.world_model + " does not match the configured model");
      }
      std::copy(w.begin(), w.end(), model->mutable_params().begin());
      model->trained = true;
      backend = std::make_unique<WorldModelBackend>(std::move(model));
    }
  } else {
    throw UsageError{"--backend must be env or world_model"};
  }

  RolloutConfig rc = cfg.rollout_config();
  rc.params = ParamSet::Current;
  const TrajectoryHeader header{static_cast<std::uint32_t>(a.episodes),
                                static_cast<std::uint32_t>(cfg.max_steps),
                                static_cast<std::uint32_t>(cfg.flow_steps),
                                static_cast<std::uint32_t>(cfg.chunk_len),
                                static_cast<std::uint32_t>(kActionDim),
                                static_cast<std::uint32_t>(cfg.history_len),
                                static_cast<std::uint32_t>(cfg.frames_per_chunk)};
  std::vector<RolloutRecord> records(a.episodes);
  parallel_for(a.episodes, cfg.workers, [&](std::size_t i) {
    Rng init(a.seed, {0xe7a1, i});
    records[i] = closed_loop_rollout(policy, *backend, sample_initial_state(cfg.env, init), rc,
                                     derive_seed(a.seed, {0xe7a2, i}));
  });
  TrajectoryFile file;
  file.header = header;
  std::size_t successes = 0;
  for (const RolloutRecord& rec : records) {
    successes += rec.success() ? 1 : 0;
    file.episodes.push_back(episode_from_rollout(rec, rec.success() ? 1.0 : 0.0, policy, header));
  }
  if (!a.out.empty()) write_trajectory_file(a.out, file);
  std::cout << "success " << successes << "/" << a.episodes << "\n";
  return kExitOk;
}

// ---- rm-diag ----

struct RmDiagArgs {
  std::vector<double> recalls{0.95}, fprs{0.35};
  std::size_t n = 10000;
  double base_rate = 0.5;
  int votes = 1;
  std::uint64_t seed = 0;
  bool oracle = false;
  std::string out;
};

int cmd_rm_diag(const RmDiagArgs& a) {
  std::ostringstream csv;
  csv << "config_recall,config_fpr,n,precision,recall,fpr,rm_success_rate,true_success_rate\n";
  std::size_t cell_index = 0;
  for (double rho : a.recalls) {
    for (double phi : a.fprs) {
      const RewardScorer scorer =
          a.oracle ? RewardScorer::oracle()
                   : RewardScorer::corrupted(rho, phi, derive_seed(a.seed, {1, cell_index}),
                                             a.votes);
      const RmTrial t = rm_trial(scorer, a.n, a.base_rate, derive_seed(a.seed, {2, cell_index}));
      csv << format_double(a.oracle ? 1.0 : rho) << "," << format_double(a.oracle ? 0.0 : phi)
          << "," << t.n << "," << cell(t.diag.precision) << "," << cell(t.diag.recall) << ","
          << cell(t.diag.fpr) << "," << format_double(t.rm_success_rate) << ","
          << format_double(t.true_success_rate) << "\n";
      ++cell_index;
      if (a.oracle) break;
    }
    if (a.oracle) break;
  }
  if (a.out.empty()) {
    std::cout << csv.str();
  } else {
    std::ofstream f(a.out);
    if (!f) throw Error(Errc::Io, "cannot write " + a.out);
    f << csv.str();
  }
  return kExitOk;
}

// ---- plot ----

struct PlotArgs {
  std::string csv, out, title;
};

int cmd_plot(const PlotArgs& a) {
  require_file(a.csv, "CSV file");
  const CsvTable table = read_csv(a.csv);
  const std::size_t lines =
      write_svg_plot(table, a.out, a.title.empty() ? std::filesystem::path(a.csv).filename().string()
                                                   : a.title);
  std::cout << lines << " series written to " << a.out << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"World-model RL toolkit"};
  app.require_subcommand(1);

  TrainArgs train;
  auto* t = app.add_subcommand("train", "behaviour cloning, optional world model, RL updates");
  t->add_option("--config", train.config, "run configuration file")->required();
  t->add_option("--updates", train.updates, "override run.updates");
  t->add_option("--workers", train.workers, "override run.workers");
  t->add_option("--out", train.out, "override run.out_dir");
  t->add_option("--set", train.overrides, "section.key=value override (repeatable)");
  t->add_flag("--quiet", train.quiet, "suppress progress lines");

  EvalFlowArgs ef;
  auto* e = app.add_subcommand("eval-flow", "PSNR/SSIM/tSSIM and flow EPE/cosine of two videos");
  e->add_option("--real", ef.real, "directory of frame_NNNNN.png")->required();
  e->add_option("--gen", ef.gen, "directory of frame_NNNNN.png")->required();
  e->add_option("--out", ef.out, "CSV output path (default stdout)");
  e->add_option("--tau", ef.tau, "motion threshold in pixels for the cosine");
  e->add_option("--eps", ef.eps, "cosine denominator floor");
  e->add_flag("--epe-valid-only", ef.valid_only, "average EPE over moving pixels only");

  RenderArgs rf;
  auto* r = app.add_subcommand("render-frames", "rasterize a trajectory episode to PNGs");
  r->add_option("--trajectory", rf.trajectory, "trajectory file")->required();
  r->add_option("--out", rf.out, "output directory")->required();
  r->add_option("--episode", rf.episode, "episode index");
  r->add_option("--config", rf.config, "run configuration (environment settings)");

  RolloutArgs ro;
  auto* o = app.add_subcommand("rollout", "replay a policy checkpoint against a backend");
  o->add_option("--checkpoint", ro.checkpoint, "policy checkpoint (.prck)")->required();
  o->add_option("--config", ro.config, "run configuration")->required();
  o->add_option("--backend", ro.backend, "env or world_model");
  o->add_option("--world-model", ro.world_model,
                "world-model checkpoint (.prwm); without it the world_model backend is exact");
  o->add_option("--episodes", ro.episodes, "number of episodes");
  o->add_option("--seed", ro.seed, "initial-state and noise seed");
  o->add_option("--out", ro.out, "trajectory file to write");
  o->add_option("--workers", ro.workers, "worker threads");

  RmDiagArgs rm;
  auto* d = app.add_subcommand("rm-diag", "reward-model confusion statistics over a grid");
  d->add_option("--recall", rm.recalls, "configured recall values")->delimiter(',');
  d->add_option("--fpr", rm.fprs, "configured false-positive rates")->delimiter(',');
  d->add_option("--n", rm.n, "trajectories per grid cell");
  d->add_option("--base-rate", rm.base_rate, "true success probability");
  d->add_option("--votes", rm.votes, "majority-vote count per label");
  d->add_option("--seed", rm.seed, "seed");
  d->add_flag("--oracle", rm.oracle, "use the exact scorer");
  d->add_option("--out", rm.out, "CSV output path (default stdout)");

  PlotArgs pl;
  auto* p = app.add_subcommand("plot", "SVG line charts from a CSV file");
  p->add_option("--csv", pl.csv, "input CSV")->required();
  p->add_option("--out", pl.out, "output SVG")->required();
  p->add_option("--title", pl.title, "chart title");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (t->parsed()) return cmd_train(train);
    if (e->parsed()) return cmd_eval_flow(ef);
    if (r->parsed()) return cmd_render_frames(rf);
    if (o->parsed()) return cmd_rollout(ro);
    if (d->parsed()) return cmd_rm_diag(rm);
    if (p->parsed()) return cmd_plot(pl);
  } catch (const UsageError& err) {
    std::cerr << "error: " << err.message << "\n";
    return kExitUsage;
  } catch (const Error& err) {
    std::cerr << "error: " << err.what() << "\n";
    switch (err.code()) {
      case Errc::ConfigParse:
        return kExitUsage;
      case Errc::MalformedFile:
        return kExitMalformed;
      default:
        return kExitRuntime;
    }
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
