#include <string>

#include "doctest.h"
#include "wmrl/config.hpp"
#include "wmrl/error.hpp"

using namespace wmrl;

namespace {

std::string parse_error(const std::string& text) {
  try {
    (void)parse_config(text);
  } catch (const Error& e) {
    CHECK(e.code() == Errc::ConfigParse);
    return e.what();
  }
  FAIL("expected ConfigParse");
  return {};
}

}  // namespace

TEST_SUITE("config") {
  TEST_CASE("parses sections, comments and lists") {
    const RunConfig c = parse_config(
        "# comment\n"
        "run.seed = 7\n"
        "run.backend = world_model\n"
        "policy.sigma_table = 0.3, 0.2,0.1\n"
        "rl.optimizer = sgd  # trailing\n"
        "flowscale.enabled = false\n"
        "reward.kind = corrupted\n"
        "reward.recall = 0.7\n"
        "reward.fpr = 0.2\n");
    CHECK(c.seed == 7);
    CHECK(c.backend == BackendKind::WorldModel);
    CHECK(c.sigma_table == std::vector<double>{0.3, 0.2, 0.1});
    CHECK(c.optimizer == OptimizerKind::Sgd);
    CHECK_FALSE(c.flowscale_enabled);
    CHECK(c.reward.kind == RewardScorer::Kind::Corrupted);
    CHECK(c.reward.recall == 0.7);
  }

  TEST_CASE("errors carry line numbers") {
    CHECK(parse_error("run.seed = 1\nrun.nope = 2\n").find("line 2") != std::string::npos);
    CHECK(parse_error("run.seed = 1\nrun.seed = 2\n").find("line 2") != std::string::npos);
    CHECK(parse_error("\n\nrun.seed 3\n").find("line 3") != std::string::npos);
    CHECK(parse_error("seed = 3\n").find("line 1") != std::string::npos);
    CHECK(parse_error("run.updates = -4\n").find("line 1") != std::string::npos);
    CHECK(parse_error("clip.beta = abc\n").find("line 1") != std::string::npos);
    CHECK_FALSE(parse_error("rollout.frames_per_chunk = 3\n").empty());
    CHECK_FALSE(parse_error("flowscale.alpha = 1.5\n").empty());
  }

  TEST_CASE("canonical text round trips") {
    RunConfig c;
    c.seed = 123;
    c.sigma_table = {0.16, 0.13, 0.1};
    c.clip.beta = 0.1 + 0.2;
    c.backend = BackendKind::WorldModel;
    c.reward = RewardScorer::corrupted(0.7, 0.2, 9);
    const std::string text = to_text(c);
    const RunConfig back = parse_config(text);
    CHECK(to_text(back) == text);
    CHECK(back.clip.beta == c.clip.beta);
    CHECK(back.sigma_table == c.sigma_table);
  }

  TEST_CASE("overrides") {
    RunConfig c;
    apply_override(c, "rl.lr=0.005");
    CHECK(c.lr == 0.005);
    apply_override(c, "run.updates = 3");
    CHECK(c.updates == 3);
    CHECK_THROWS_AS(apply_override(c, "rl.nothing=1"), Error);
    CHECK_THROWS_AS(apply_override(c, "no-equals"), Error);
  }

  TEST_CASE("shipped configs load") {
    for (const char* name : {"default.cfg", "world_model.cfg", "smoke.cfg"}) {
      CAPTURE(name);
      CHECK_NOTHROW((void)load_config(std::filesystem::path(WMRL_CONFIG_DIR) / name));
    }
  }
}
