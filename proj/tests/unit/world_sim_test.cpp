#include <cmath>

#include "doctest.h"
#include "support.hpp"
#include "wmrl/env.hpp"
#include "wmrl/error.hpp"
#include "wmrl/rollout.hpp"
#include "wmrl/world_model.hpp"

using namespace wmrl;

namespace {

EnvState sample_state() {
  EnvState s;
  s.gripper = Vec3(0.3, 0.3, 0.2);
  s.g = 1.0;
  s.object = Vec3(0.6, 0.6, 0.0);
  s.goal = Vec2(0.2, 0.8);
  s.goal_radius = 0.1;
  return s;
}

FlowPolicy rollout_policy(std::uint64_t seed) {
  PolicyConfig pc;
  pc.obs_dim = kObservationDim;
  pc.chunk_len = 2;
  pc.hidden = 16;
  pc.init_scale = 0.2;
  return FlowPolicy(pc, NoiseSchedule::linear_ramp(0.16, 0.04, 5, 4), seed);
}

// Drives the environment with the scripted expert, ignoring the policy chunk.
class ScriptedBackend final : public Backend {
 public:
  explicit ScriptedBackend(EnvConfig env) : env_(env) {}
  std::vector<EnvState> predict(const EnvState& state, const ActionChunk& chunk,
                                const History&) const override {
    std::vector<EnvState> out;
    EnvState cur = state;
    for (std::size_t c = 0; c < chunk.length(); ++c) {
      cur = env_step(cur, scripted_expert(cur, env_), env_);
      out.push_back(cur);
    }
    return out;
  }
  const EnvConfig& env() const override { return env_; }

 private:
  EnvConfig env_;
};

std::array<double, kDynamicDim> dyn(const EnvState& s) { return dynamic_vector(s); }

}  // namespace

TEST_SUITE("world_sim") {
  TEST_CASE("env_step examples") {
    const EnvConfig cfg;
    const EnvState s = sample_state();
    DeltaAction hold;
    hold.g = s.g;
    EnvState moved = env_step(s, hold, cfg);
    CHECK(moved.step == s.step + 1);
    moved.step = s.step;
    CHECK(moved == s);

    EnvState at = s;
    at.gripper = s.object;
    DeltaAction close;
    close.g = 0.2;
    CHECK(env_step(at, close, cfg).attached);

    EnvState carry = at;
    carry.attached = true;
    carry.g = 0.2;
    for (int i = 0; i < 20 && (carry.object.head<2>() - carry.goal).norm() > 0.01; ++i) {
      DeltaAction a;
      a.g = 0.2;
      a.dp.head<2>() = carry.goal - carry.gripper.head<2>();
      carry = env_step(carry, a, cfg);
      CHECK_FALSE(carry.success);
    }
    DeltaAction release;
    release.g = 1.0;
    carry = env_step(carry, release, cfg);
    CHECK(carry.success);
    Rng rng(3);
    for (int i = 0; i < 50; ++i) {
      DeltaAction a;
      a.dp = Vec3(rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2));
      a.g = rng.uniform(0.0, 1.0);
      carry = env_step(carry, a, cfg);
      CHECK(carry.success);
    }
  }

  TEST_CASE("moves are clipped per axis") {
    const EnvConfig cfg;
    DeltaAction a;
    a.dp = Vec3(0.5, -0.5, 0.01);
    const EnvState n = env_step(sample_state(), a, cfg);
    CHECK(n.gripper.x() == doctest::Approx(0.4));
    CHECK(n.gripper.y() == doctest::Approx(0.2));
    CHECK(n.gripper.z() == doctest::Approx(0.21));
  }

  TEST_CASE("rasterize_state") {
    const EnvConfig cfg;
    const EnvState s = sample_state();
    CHECK(rasterize_state(s, cfg) == rasterize_state(s, cfg));

    const Image base = rasterize_state(s, cfg);
    EnvState shifted = s;
    shifted.object.x() += 2.0 / (cfg.canvas - 1);
    const Image moved = rasterize_state(shifted, cfg);
    const Vec2 px = workspace_to_pixel(s.object.head<2>(), cfg);
    const int r0 = round_half_up(px.y());
    const int c0 = round_half_up(px.x());
    for (int r = r0 - 2; r <= r0 + 2; ++r) {
      for (int c = c0 - 2; c <= c0 + 2; ++c) {
        for (int ch = 0; ch < 3; ++ch) CHECK(moved.at(r, c + 2, ch) == base.at(r, c, ch));
      }
    }

    // Gripper, object and goal are all drawn with distinct colours.
    const Vec2 gp = workspace_to_pixel(s.gripper.head<2>(), cfg);
    const Vec2 gl = workspace_to_pixel(s.goal, cfg);
    const int ring_c = round_half_up(gl.x() + s.goal_radius * (cfg.canvas - 1));
    const Vec3 grip(base.at(round_half_up(gp.y()), round_half_up(gp.x()), 0),
                    base.at(round_half_up(gp.y()), round_half_up(gp.x()), 1),
                    base.at(round_half_up(gp.y()), round_half_up(gp.x()), 2));
    const Vec3 obj(base.at(r0, c0, 0), base.at(r0, c0, 1), base.at(r0, c0, 2));
    const int gr = round_half_up(gl.y());
    const Vec3 goal(base.at(gr, ring_c, 0), base.at(gr, ring_c, 1), base.at(gr, ring_c, 2));
    CHECK(grip != obj);
    CHECK(obj != goal);
    CHECK(grip != goal);
    CHECK(goal == Vec3(0, 0, 1));

    RasterStats stats;
    EnvState out = s;
    out.gripper.x() = 1.5;
    (void)rasterize_state(out, cfg, &stats);
    CHECK(stats.out_of_bounds == 1);
  }

  TEST_CASE("history buffer law") {
    Rng rng(5);
    for (std::size_t th : {1u, 3u, 6u}) {
      HistoryBuffer<int> buf(-1, th);
      std::vector<int> all(th, -1);
      for (int n = 0; n < 20; ++n) {
        const int x = static_cast<int>(rng.uniform(0, 1000));
        buf.push(x);
        all.push_back(x);
        REQUIRE(buf.size() == th);
        const std::vector<int> want(all.end() - static_cast<long>(th), all.end());
        CHECK(buf.items() == want);
      }
    }
    CHECK_THROWS_AS(HistoryBuffer<int>(0, 0), Error);
  }

  TEST_CASE("one rollout iteration fills the buffer as [x0, x1, x2]") {
    const FlowPolicy pol = rollout_policy(1);
    const GroundTruthBackend gt{EnvConfig{}};
    RolloutConfig rc;
    rc.history_len = 3;
    rc.frames_per_chunk = 2;
    rc.max_steps = 1;
    const EnvState x0 = sample_state();
    const RolloutRecord rec = closed_loop_rollout(pol, gt, x0, rc, 7);
    REQUIRE(rec.length() == 1);
    const auto items = rec.history.items();
    REQUIRE(items.size() == 3);
    CHECK(items[0].state == x0);
    CHECK(items[1].state == rec.steps[0].next_states[0]);
    CHECK(items[2].state == rec.steps[0].next_states[1]);
  }

  TEST_CASE("S_max = 0 gives an empty record") {
    const FlowPolicy pol = rollout_policy(1);
    const GroundTruthBackend gt{EnvConfig{}};
    RolloutConfig rc;
    rc.max_steps = 0;
    const EnvState x0 = sample_state();
    const RolloutRecord rec = closed_loop_rollout(pol, gt, x0, rc, 7);
    CHECK(rec.length() == 0);
    CHECK(rec.history.size() == rc.history_len);
    for (const HistoryFrame& f : rec.history) CHECK(f.state == x0);
  }

  TEST_CASE("perfect world model matches the ground truth") {
    const FlowPolicy pol = rollout_policy(4);
    const EnvConfig env;
    const GroundTruthBackend gt{env};
    const WorldModelBackend perfect = WorldModelBackend::perfect(env);
    RolloutConfig rc;
    rc.max_steps = 12;
    rc.render = true;
    Rng rng(8);
    for (int i = 0; i < 5; ++i) {
      const EnvState x0 = sample_initial_state(env, rng);
      const RolloutRecord a = closed_loop_rollout(pol, gt, x0, rc, 100 + i);
      const RolloutRecord b = closed_loop_rollout(pol, perfect, x0, rc, 100 + i);
      REQUIRE(a.length() == b.length());
      for (std::size_t s = 0; s < a.length(); ++s) {
        CHECK(a.steps[s].next_states == b.steps[s].next_states);
        CHECK(a.steps[s].sampled.iterates == b.steps[s].sampled.iterates);
        CHECK(a.steps[s].frames == b.steps[s].frames);
      }
      CHECK(a.history.items() == b.history.items());
    }
  }

  TEST_CASE("scripted policy succeeds before the horizon") {
    const FlowPolicy pol = rollout_policy(2);
    const EnvConfig env;
    const ScriptedBackend backend(env);
    RolloutConfig rc;
    rc.max_steps = 40;
    Rng rng(12);
    for (int i = 0; i < 10; ++i) {
      const RolloutRecord rec =
          closed_loop_rollout(pol, backend, sample_initial_state(env, rng), rc, i);
      CHECK(rec.success());
      CHECK(rec.length() < rc.max_steps);
    }
  }

  TEST_CASE("world model conditioning") {
    WorldModelConfig cfg;
    const WorldModel model(cfg, 3);
    const EnvState s = sample_state();
    History hist(HistoryFrame{s, {}}, cfg.history_len);
    Rng rng(6);
    ActionChunk chunk(cfg.chunk_len);
    for (double& v : chunk.row(0)) v = rng.uniform(-0.05, 0.05);
    for (double& v : chunk.row(1)) v = rng.uniform(-0.05, 0.05);

    const auto no_frames = model.embed_conditioning(chunk, nullptr, hist);
    for (double v : no_frames.f_af) CHECK(v == 0.0);

    const auto frames = render_chunk_action_frames(s, chunk, cfg.env);
    const auto with_frames = model.embed_conditioning(chunk, &frames, hist);
    CHECK(with_frames.f_sa == no_frames.f_sa);
    CHECK(with_frames.f_af != no_frames.f_af);

    std::vector<std::array<double, kDynamicDim>> constant(cfg.history_len, dyn(s));
    const auto pooled = model.pool_history(constant);
    REQUIRE(pooled.size() == model.pooled_history_dim());
    for (std::size_t i = 0; i < pooled.size(); ++i) CHECK(pooled[i] == doctest::Approx(dyn(s)[i % kDynamicDim]).epsilon(1e-15));

    ActionChunk other = chunk;
    other(1, 3) += 0.01;
    CHECK(model.embed_conditioning(other, nullptr, hist).f_sa != no_frames.f_sa);
  }

  TEST_CASE("untrained model freezes the state and is deterministic") {
    WorldModelConfig cfg;
    const WorldModel model(cfg, 9);
    const EnvState s = sample_state();
    const History hist(HistoryFrame{s, {}}, cfg.history_len);
    ActionChunk chunk(cfg.chunk_len);
    chunk(0, 0) = 0.05;
    chunk(1, 2) = -0.03;
    const auto frames = render_chunk_action_frames(s, chunk, cfg.env);
    const auto next = model.step(s, chunk, &frames, hist);
    REQUIRE(next.size() == cfg.chunk_len);
    for (const EnvState& n : next) CHECK(dyn(n) == dyn(s));
    CHECK(model.step(s, chunk, &frames, hist) == next);
  }

  TEST_CASE("world-model training") {
    WorldModelConfig cfg;
    cfg.use_action_frames = false;
    cfg.hidden = 32;
    Rng rng(10);
    auto make = [&](auto target) {
      std::vector<WmSample> data;
      for (int i = 0; i < 200; ++i) {
        WmSample w;
        w.state = sample_state();
        w.state.gripper = Vec3(rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8), rng.uniform(0.1, 0.3));
        w.chunk = ActionChunk(cfg.chunk_len);
        for (std::size_t c = 0; c < cfg.chunk_len; ++c) {
          for (std::size_t d = 0; d < 3; ++d) w.chunk(c, d) = rng.uniform(-0.1, 0.1);
          w.chunk(c, 6) = 1.0;
        }
        w.history.assign(cfg.history_len, dyn(w.state));
        auto cur = dyn(w.state);
        for (std::size_t c = 0; c < cfg.chunk_len; ++c) {
          target(cur, w.chunk, c);
          w.next.push_back(cur);
        }
        data.push_back(std::move(w));
      }
      return data;
    };
    WmTrainConfig train;
    train.batch_size = 16;
    train.lr = 3e-3;
    train.seed = 1;

    SUBCASE("zero-delta targets") {
      const auto data = make([](auto&, const ActionChunk&, std::size_t) {});
      train.epochs = 20;
      WmTrainReport report;
      const WorldModel m = train_world_model(data, cfg, train, &report);
      CHECK(report.best_validation_loss < 1e-6);
      CHECK(evaluate_world_model(m, data) < 1e-6);
    }
    SUBCASE("linear dynamics") {
      auto linear = [](auto& cur, const ActionChunk& ch, std::size_t c) {
        for (std::size_t d = 0; d < 3; ++d) cur[d] += 2.0 * ch(c, d);
      };
      const auto data = make(linear);
      const auto held_out = make(linear);
      train.epochs = 200;
      WmTrainReport report;
      const WorldModel m = train_world_model(data, cfg, train, &report);
      CHECK(evaluate_world_model(m, held_out) < 1e-3);
      for (std::size_t e = 0; e < report.validation_loss.size(); ++e) {
        CHECK(report.validation_loss[e] >= report.best_validation_loss);
      }
    }
    SUBCASE("label noise does not generalize") {
      Rng noise(44);
      auto random = [&noise](auto& cur, const ActionChunk&, std::size_t) {
        for (std::size_t d = 0; d < 3; ++d) cur[d] += noise.uniform(-0.2, 0.2);
      };
      const auto data = make(random);
      const auto held_out = make(random);
      train.epochs = 60;
      const WorldModel m = train_world_model(data, cfg, train);
      // Summed over 2 slots x 3 dims of uniform(-0.2, 0.2) noise.
      const double target_var = 6.0 * 0.4 * 0.4 / 12.0;
      CHECK(evaluate_world_model(m, held_out) > 0.8 * target_var);
    }
    CHECK_THROWS_AS(train_world_model({}, cfg, train), Error);
  }
}
