#include <fstream>

#include "doctest.h"
#include "support.hpp"
#include "wmrl/error.hpp"
#include "wmrl/io.hpp"

using namespace wmrl;
namespace fs = std::filesystem;

namespace {

TrajectoryFile random_file(Rng& rng) {
  TrajectoryFile f;
  f.header = {3, 4, 2, 2, 7, 6, 2};
  const std::size_t S = 4, K = 2, CH = 2, D = 7, C = 2;
  for (std::uint32_t b = 0; b < f.header.batch; ++b) {
    TrajectoryEpisode ep;
    ep.length = 1 + b;
    ep.reward = static_cast<float>(b % 2);
    auto fill = [&](std::vector<float>& v, std::size_t n) {
      v.resize(n);
      for (float& x : v) x = static_cast<float>(rng.normal());
    };
    fill(ep.mask, S * CH);
    fill(ep.actions, S * CH * D);
    fill(ep.old_logp, S * K * CH * D);
    fill(ep.ref_logp, S * K * CH * D);
    fill(ep.std, S * K);
    fill(ep.states, (S * C + 1) * kStateRecordDim);
    f.episodes.push_back(ep);
  }
  return f;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_SUITE("io") {
  TEST_CASE("trajectory file round trip") {
    Rng rng(1);
    const auto dir = testing::scratch_dir("io_traj");
    const TrajectoryFile f = random_file(rng);
    write_trajectory_file(dir / "a.prtj", f);
    CHECK(read_trajectory_file(dir / "a.prtj") == f);
  }

  TEST_CASE("malformed trajectory files are rejected") {
    Rng rng(2);
    const auto dir = testing::scratch_dir("io_bad");
    write_trajectory_file(dir / "good.prtj", random_file(rng));
    const std::string bytes = slurp(dir / "good.prtj");

    auto expect_malformed = [&](const std::string& content) {
      std::ofstream(dir / "bad.prtj", std::ios::binary) << content;
      try {
        (void)read_trajectory_file(dir / "bad.prtj");
        FAIL("expected MalformedFile");
      } catch (const Error& e) {
        CHECK(e.code() == Errc::MalformedFile);
      }
    };
    expect_malformed(bytes.substr(0, bytes.size() - 1));
    expect_malformed(bytes + "x");
    expect_malformed("PRTJ2" + bytes.substr(5));
    expect_malformed(bytes.substr(0, 10));

    try {
      (void)read_trajectory_file(dir / "missing.prtj");
      FAIL("expected Io");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::Io);
    }
  }

  TEST_CASE("state encoding") {
    EnvState s;
    s.gripper = Vec3(0.25, 0.5, 0.125);
    s.g = 0.75;
    s.object = Vec3(0.5, 0.25, 0.0);
    s.attached = true;
    s.goal = Vec2(0.5, 0.75);
    s.goal_radius = 0.125;
    s.step = 3;
    s.success = true;
    CHECK(decode_state(encode_state(s), 3) == s);
  }

  TEST_CASE("checkpoints") {
    const auto dir = testing::scratch_dir("io_ckpt");
    Rng rng(3);
    const auto params = testing::normal_vector(rng, 100);
    write_checkpoint(dir / "p.prck", "PRCK", params);
    const auto back = read_checkpoint(dir / "p.prck", "PRCK");
    REQUIRE(back.size() == params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      CHECK(back[i] == static_cast<double>(static_cast<float>(params[i])));
    }
    CHECK_THROWS_AS(read_checkpoint(dir / "p.prck", "PRWM"), Error);
  }

  TEST_CASE("csv and svg") {
    const auto dir = testing::scratch_dir("io_csv");
    {
      CsvWriter w(dir / "m.csv", {"update", "reward", "label"});
      w.row({"0", "0.5", "a"});
      w.row({"1", "0.75", "b"});
      CHECK_THROWS_AS(w.row({"2"}), Error);
    }
    const CsvTable t = read_csv(dir / "m.csv");
    CHECK(t.columns == std::vector<std::string>{"update", "reward", "label"});
    REQUIRE(t.rows.size() == 2);
    CHECK(t.rows[1][1] == "0.75");
    CHECK(write_svg_plot(t, dir / "m.svg", "metrics") == 2);
    const std::string svg = slurp(dir / "m.svg");
    std::size_t count = 0;
    for (auto pos = svg.find("<polyline"); pos != std::string::npos;
         pos = svg.find("<polyline", pos + 1)) {
      ++count;
    }
    CHECK(count == 2);

    std::ofstream(dir / "ragged.csv") << "a,b\n1\n";
    CHECK_THROWS_AS(read_csv(dir / "ragged.csv"), Error);
    CHECK(format_double(0.1) == "0.1");
  }

  TEST_CASE("png sequences") {
    const auto dir = testing::scratch_dir("io_png");
    Rng rng(5);
    std::vector<Image> frames;
    for (int t = 0; t < 3; ++t) {
      Image img(16, 20, 3);
      for (double& v : img.data) v = static_cast<double>(quantize_u8(rng.uniform())) / 255.0;
      frames.push_back(img);
    }
    write_png_sequence(frames, dir / "seq");
    CHECK(fs::exists(dir / "seq" / "frame_00002.png"));
    const auto back = read_png_sequence(dir / "seq");
    REQUIRE(back.size() == 3);
    for (int t = 0; t < 3; ++t) CHECK(quantize(back[t]) == quantize(frames[t]));
    CHECK_THROWS_AS(read_png_sequence(dir / "nope"), Error);
  }
}
