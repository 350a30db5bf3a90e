#include "wmrl/run.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>

#include "wmrl/error.hpp"
#include "wmrl/io.hpp"

namespace wmrl {

namespace {

std::string numbered(const char* prefix, std::size_t n, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%04zu%s", prefix, n, ext);
  return buf;
}

std::string optional_cell(const std::optional<double>& v) {
  return v ? format_double(*v) : std::string("nan");
}

void save_policy(const std::filesystem::path& dir, std::size_t update, const FlowPolicy& policy) {
  write_checkpoint(dir / numbered("checkpoint", update, ".prck"), "PRCK",
                   policy.params(ParamSet::Current));
}

}  // namespace

std::uint64_t stage_seed(const RunConfig& cfg, SeedStage stage) {
  return derive_seed(cfg.seed, {static_cast<std::uint64_t>(stage)});
}

FlowPolicy pretrain_policy(const RunConfig& cfg) {
  const PolicyConfig pc = cfg.policy_config();
  FlowPolicy policy(pc, cfg.schedule(), stage_seed(cfg, SeedStage::PolicyInit));
  if (!cfg.bc_enabled) return policy;
  DemoConfig dc;
  dc.episodes = cfg.bc_demos;
  dc.expert_noise = cfg.bc_expert_noise;
  dc.max_steps = cfg.max_steps;
  dc.history_len = cfg.history_len;
  dc.seed = stage_seed(cfg, SeedStage::Demonstrations);
  BcConfig bc;
  bc.epochs = cfg.bc_epochs;
  bc.batch_size = cfg.bc_batch_size;
  bc.lr = cfg.bc_lr;
  bc.seed = stage_seed(cfg, SeedStage::BehaviorCloning);
  behavior_clone(policy, collect_demonstrations(cfg.env, pc, dc), bc);
  const auto theta = policy.params(ParamSet::Current);
  return FlowPolicy(pc, cfg.schedule(), std::vector<double>(theta.begin(), theta.end()));
}

std::shared_ptr<WorldModel> fit_world_model(const RunConfig& cfg, const FlowPolicy& policy,
                                            WmTrainReport* report) {
  const WorldModelConfig wc = cfg.world_model_config();
  WmDataConfig wd = cfg.wm_data;
  wd.rollout = cfg.rollout_config();
  wd.seed = stage_seed(cfg, SeedStage::WorldModelData);
  const std::vector<WmSample> data = collect_world_model_data(policy, cfg.env, wc, wd);
  WmTrainConfig tc = cfg.wm_train;
  tc.seed = stage_seed(cfg, SeedStage::WorldModelTrain);
  return std::make_shared<WorldModel>(train_world_model(data, wc, tc, report));
}

RunSummary run_training(const RunConfig& cfg, std::ostream* log) {
  cfg.validate();
  const std::filesystem::path dir(cfg.out_dir);
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "config.txt");
    if (!out) throw Error(Errc::Io, "cannot write config.txt in " + dir.string());
    out << to_text(cfg);
  }
  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed_ms = [&] {
    if (!cfg.log_wallclock) return 0.0;
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
        .count();
  };

  RunSummary summary;
  FlowPolicy policy = pretrain_policy(cfg);
  save_policy(dir, 0, policy);

  CsvWriter metrics(dir / "metrics.csv", {"update", "mean_reward", "success_rate", "clip_frac",
                                          "kl", "grad_norm", "wallclock_ms"});
  CsvWriter rm_csv(dir / "rm_diagnostics.csv", {"update", "precision", "recall", "fpr",
                                                "rm_success_rate", "true_success_rate"});
  CsvWriter eval_csv(dir / "eval.csv", {"update", "success_rate"});
  if (cfg.updates == 0) return summary;

  const GroundTruthBackend truth(cfg.env);
  EvalConfig ec;
  ec.episodes = cfg.eval_episodes;
  ec.seed = cfg.eval_seed;
  ec.rollout = cfg.rollout_config();
  auto evaluate = [&](std::size_t update) {
    const double s = evaluate_success(policy, truth, cfg.env, ec, cfg.workers);
    summary.evals.emplace_back(update, s);
    eval_csv.row({std::to_string(update), format_double(s)});
    if (log) *log << "eval update " << update << " success " << format_double(s) << "\n";
    return s;
  };
  summary.initial_success = evaluate(0);

  std::unique_ptr<Backend> backend;
  if (cfg.backend == BackendKind::WorldModel) {
    WmTrainReport report;
    auto model = fit_world_model(cfg, policy, &report);
    write_checkpoint(dir / "world_model.prwm", "PRWM", model->params());
    CsvWriter wm_csv(dir / "wm_training.csv", {"epoch", "train_loss", "validation_loss"});
    for (std::size_t e = 0; e < report.train_loss.size(); ++e) {
      wm_csv.row({std::to_string(e), format_double(report.train_loss[e]),
                  format_double(report.validation_loss[e])});
    }
    if (log) {
      *log << "world model best validation loss " << format_double(report.best_validation_loss)
           << " at epoch " << report.best_epoch << "\n";
    }
    summary.world_model = report;
    backend = std::make_unique<WorldModelBackend>(std::move(model));
  } else {
    backend = std::make_unique<GroundTruthBackend>(cfg.env);
  }

  RewardScorer scorer = cfg.reward;
  scorer.seed = derive_seed(stage_seed(cfg, SeedStage::Reward), {cfg.reward.seed});
  RlTrainer trainer(policy, *backend, cfg.env, scorer, cfg.rl_config(stage_seed(cfg, SeedStage::Rl)));
  const TrajectoryHeader header{
      static_cast<std::uint32_t>(cfg.groups * cfg.group_size),
      static_cast<std::uint32_t>(cfg.max_steps),
      static_cast<std::uint32_t>(cfg.flow_steps),
      static_cast<std::uint32_t>(cfg.chunk_len),
      static_cast<std::uint32_t>(kActionDim),
      static_cast<std::uint32_t>(cfg.history_len),
      static_cast<std::uint32_t>(cfg.frames_per_chunk)};

  double last_eval = summary.initial_success;
  for (std::size_t u = 0; u < cfg.updates; ++u) {
    const std::size_t done = u + 1;
    const UpdateMetrics m = trainer.step(u);
    summary.updates.push_back(m);
    metrics.row({std::to_string(done), format_double(m.mean_reward),
                 format_double(m.success_rate), format_double(m.clip_frac), format_double(m.kl),
                 format_double(m.grad_norm), format_double(elapsed_ms())});
    rm_csv.row({std::to_string(done), optional_cell(m.rm.precision), optional_cell(m.rm.recall),
                optional_cell(m.rm.fpr), format_double(m.rm_success_rate),
                format_double(m.success_rate)});
    if (log) {
      *log << "update " << done << " reward " << format_double(m.mean_reward) << " kl "
           << format_double(m.kl) << "\n";
    }
    if (cfg.trajectory_interval > 0 && done % cfg.trajectory_interval == 0) {
      TrajectoryFile file;
      file.header = header;
      const auto& records = trainer.last_records();
      for (std::size_t i = 0; i < records.size(); ++i) {
        file.episodes.push_back(
            episode_from_rollout(records[i], trainer.last_rewards()[i], policy, header));
      }
      std::filesystem::create_directories(dir / "trajectories");
      write_trajectory_file(dir / "trajectories" / numbered("update", done, ".prtj"), file);
    }
    if (cfg.checkpoint_interval > 0 && done % cfg.checkpoint_interval == 0) {
      save_policy(dir, done, policy);
    }
    if ((cfg.eval_interval > 0 && done % cfg.eval_interval == 0) || done == cfg.updates) {
      last_eval = evaluate(done);
    }
  }
  if (cfg.checkpoint_interval == 0 || cfg.updates % cfg.checkpoint_interval != 0) {
    save_policy(dir, cfg.updates, policy);
  }
  summary.final_success = last_eval;
  return summary;
}

}  // namespace wmrl
