#include <cmath>

#include "doctest.h"
#include "support.hpp"
#include "wmrl/error.hpp"
#include "wmrl/rl_core.hpp"

using namespace wmrl;

namespace {

TrajectoryBatch random_batch(Rng& rng, std::size_t b, std::size_t s, std::size_t k,
                             std::size_t ch, std::size_t d, double spread = 0.1) {
  TrajectoryBatch batch = TrajectoryBatch::zeros(b, s, k, ch, d);
  for (std::size_t i = 0; i < batch.logp_elem.size(); ++i) {
    const double base = rng.normal();
    batch.old_logp_elem.flat()[i] = base;
    batch.logp_elem.flat()[i] = base + spread * rng.normal();
    batch.ref_logp_elem.flat()[i] = base + spread * rng.normal();
  }
  for (double& v : batch.std.flat()) v = rng.uniform(0.05, 0.5);
  for (std::size_t bi = 0; bi < b; ++bi) {
    const std::size_t len = 1 + static_cast<std::size_t>(rng.uniform(0.0, static_cast<double>(s)));
    for (std::size_t si = 0; si < s; ++si) {
      for (std::size_t c = 0; c < ch; ++c) batch.mask(bi, si, c) = si < len ? 1.0 : 0.0;
    }
    batch.rewards[bi] = rng.uniform(0.0, 1.0) < 0.5 ? 1.0 : 0.0;
    batch.groups[bi] = bi / 2;
  }
  return batch;
}

Tensor random_advantages(Rng& rng, const TrajectoryBatch& batch) {
  std::vector<double> normed(batch.batch());
  for (double& v : normed) v = rng.normal();
  return broadcast_advantages(normed, batch.mask);
}

// Straight-line FA-GRPO: one ratio per (b,s,c,d) from K-summed log-probs.
double reference_loss(const TrajectoryBatch& batch, const Tensor& adv, const ClipConfig& clip) {
  double policy = 0.0, kl = 0.0;
  std::size_t n = 0;
  for (std::size_t b = 0; b < batch.batch(); ++b) {
    for (std::size_t s = 0; s < batch.outer_steps(); ++s) {
      for (std::size_t c = 0; c < batch.chunk_len(); ++c) {
        if (batch.mask(b, s, c) == 0.0) continue;
        for (std::size_t d = 0; d < batch.action_dim(); ++d) {
          double lp = 0.0, old = 0.0;
          for (std::size_t k = 0; k < batch.flow_steps(); ++k) {
            lp += batch.logp_elem(b, s, k, c, d);
            old += batch.old_logp_elem(b, s, k, c, d);
            kl += batch.logp_elem(b, s, k, c, d) - batch.ref_logp_elem(b, s, k, c, d);
            ++n;
          }
          const double r = std::exp(lp - old);
          const double a = adv(b, s, c);
          const double rc = std::min(std::max(r, 1.0 - clip.eps_low), 1.0 + clip.eps_high);
          policy -= std::min(r * a, rc * a);
        }
      }
    }
  }
  return policy + clip.beta * (n > 0 ? kl / static_cast<double>(n) : 0.0);
}

}  // namespace

TEST_SUITE("rl_core") {
  TEST_CASE("group_normalize") {
    const auto out = group_normalize({1, 0, 1, 0}, {0, 0, 0, 0}, 0.0);
    CHECK(out == std::vector<double>{1, -1, 1, -1});
    for (double v : group_normalize({0.3, 0.3, 0.3}, {0, 0, 0}, 1e-8)) CHECK(v == 0.0);

    Rng rng(4);
    std::vector<double> r(24);
    std::vector<std::size_t> g(24);
    for (std::size_t i = 0; i < r.size(); ++i) {
      r[i] = static_cast<double>(static_cast<int>(rng.uniform(0, 8)));
      g[i] = i % 3;
    }
    auto shifted = r;
    for (double& v : shifted) v += 5.0;
    CHECK(group_normalize(shifted, g, 1e-8) == group_normalize(r, g, 1e-8));

    const auto n = group_normalize(r, g, 1e-8);
    for (std::size_t grp = 0; grp < 3; ++grp) {
      double sum = 0.0, sq = 0.0;
      std::size_t cnt = 0;
      for (std::size_t i = 0; i < n.size(); ++i) {
        if (g[i] != grp) continue;
        sum += n[i];
        sq += n[i] * n[i];
        ++cnt;
      }
      CHECK(std::abs(sum / cnt) < 1e-10);
      CHECK(std::abs(std::sqrt(sq / cnt) - 1.0) < 1e-6);
    }

    try {
      (void)group_normalize({1, 0}, {0, 2}, 0.0);
      FAIL("expected EmptyGroup");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::EmptyGroup);
    }
  }

  TEST_CASE("broadcast_advantages") {
    Tensor mask({2, 3, 2});
    for (std::size_t s = 0; s < 3; ++s) {
      for (std::size_t c = 0; c < 2; ++c) {
        mask(0, s, c) = 1.0;
        mask(1, s, c) = s < 2 ? 1.0 : 0.0;
      }
    }
    const Tensor a = broadcast_advantages({0.7, -1.5}, mask);
    for (std::size_t s = 0; s < 3; ++s) {
      for (std::size_t c = 0; c < 2; ++c) {
        CHECK(a(0, s, c) == 0.7);
        CHECK(a(1, s, c) == (s < 2 ? -1.5 : 0.0));
      }
    }
    CHECK_THROWS_AS(broadcast_advantages({1.0}, mask), Error);
  }

  TEST_CASE("action_ratios") {
    Rng rng(2);
    TrajectoryBatch batch = random_batch(rng, 2, 3, 4, 2, 3);
    batch.logp_elem = batch.old_logp_elem;
    const RatioResult unit = action_ratios(batch);
    for (double r : unit.ratios.flat()) CHECK(r == 1.0);

    batch.logp_elem(1, 2, 0, 1, 2) += std::log(2.0) / 2;
    batch.logp_elem(1, 2, 3, 1, 2) += std::log(2.0) / 2;
    const RatioResult rr = action_ratios(batch);
    CHECK(rr.ratios(1, 2, 1, 2) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(rr.ratios(1, 2, 1, 1) == 1.0);

    batch.logp_elem(0, 0, 0, 0, 0) += 100.0;
    const RatioResult big = action_ratios(batch);
    CHECK(big.clamped == 1);
    CHECK(big.ratios(0, 0, 0, 0) == doctest::Approx(std::exp(80.0)));

    batch.logp_elem(0, 0, 0, 0, 1) = std::nan("");
    try {
      (void)action_ratios(batch);
      FAIL("expected NonFiniteValue");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::NonFiniteValue);
    }
  }

  TEST_CASE("flowscale_weights examples") {
    FlowScaleConfig cfg;
    cfg.eps = 0.0;
    Tensor std({1, 1, 2});
    std(0, 0, 0) = 1.0;
    std(0, 0, 1) = 0.5;
    Tensor premix;
    const Tensor w = flowscale_weights(std, cfg, &premix);
    CHECK(premix(0, 0, 0) == doctest::Approx(4.0 / 3.0).epsilon(1e-14));
    CHECK(premix(0, 0, 1) == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
    CHECK(w(0, 0, 0) == doctest::Approx(1.3).epsilon(1e-14));
    CHECK(w(0, 0, 1) == doctest::Approx(0.7).epsilon(1e-14));

    Tensor flat({2, 3, 4}, 0.3);
    for (double a : {0.0, 0.1, 0.7}) {
      cfg.alpha = a;
      const Tensor uniform = flowscale_weights(flat, cfg);
      for (double v : uniform.flat()) CHECK(v == 1.0);
    }
    cfg.alpha = 1.0;
    const Tensor mixed = flowscale_weights(std, cfg);
    for (double v : mixed.flat()) CHECK(v == 1.0);

    Tensor bad({1, 2}, 0.5);
    bad(0, 1) = 0.0;
    try {
      (void)flowscale_weights(bad, FlowScaleConfig{});
      FAIL("expected NonPositiveStd");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::NonPositiveStd);
    }
  }

  TEST_CASE("flowscale weight invariants") {
    Rng rng(7);
    FlowScaleConfig cfg;
    cfg.w_min = 1e-6;
    cfg.w_max = 1e6;
    Tensor std({10, 5, 6});
    for (double& v : std.flat()) v = rng.uniform(0.01, 2.0);
    Tensor premix;
    const Tensor w = flowscale_weights(std, cfg, &premix);
    for (std::size_t b = 0; b < 10; ++b) {
      for (std::size_t s = 0; s < 5; ++s) {
        double mean = 0.0;
        for (std::size_t k = 0; k < 6; ++k) mean += w(b, s, k);
        CHECK(std::abs(mean / 6.0 - 1.0) < 1e-12);
        for (std::size_t i = 0; i < 6; ++i) {
          for (std::size_t j = 0; j < 6; ++j) {
            if (std(b, s, i) <= std(b, s, j)) CHECK(premix(b, s, i) <= premix(b, s, j));
          }
        }
      }
    }
    const FlowScaleConfig tight;
    const Tensor clipped = flowscale_weights(std, tight);
    for (double v : clipped.flat()) {
      CHECK(v >= tight.w_min);
      CHECK(v <= tight.w_max);
    }
  }

  TEST_CASE("clip objective") {
    const ClipConfig clip;
    CHECK(clip_objective(1.5, 1.0, clip) == doctest::Approx(1.2).epsilon(1e-15));
    CHECK(clip_objective(0.5, -1.0, clip) == doctest::Approx(-0.8).epsilon(1e-15));
    CHECK(clip_objective_dr(1.5, 1.0, clip) == 0.0);
    CHECK(clip_objective_dr(0.5, -1.0, clip) == 0.0);
    CHECK(clip_objective_dr(1.1, 1.0, clip) == 1.0);
    CHECK(clip_objective_dr(0.9, -1.0, clip) == -1.0);
  }

  TEST_CASE("unit ratios reduce to REINFORCE") {
    Rng rng(3);
    TrajectoryBatch batch = random_batch(rng, 4, 3, 2, 2, 3);
    batch.logp_elem = batch.old_logp_elem;
    const Tensor adv = random_advantages(rng, batch);
    ClipConfig clip;
    clip.beta = 0.0;
    const LossResult res = fa_grpo_loss(batch, adv, nullptr, clip);
    double want = 0.0;
    for (std::size_t b = 0; b < 4; ++b) {
      for (std::size_t s = 0; s < 3; ++s) {
        for (std::size_t c = 0; c < 2; ++c) want -= 3.0 * batch.mask(b, s, c) * adv(b, s, c);
      }
    }
    CHECK(res.loss == doctest::Approx(want).epsilon(1e-13));
    for (std::size_t b = 0; b < 4; ++b) {
      for (std::size_t s = 0; s < 3; ++s) {
        for (std::size_t k = 0; k < 2; ++k) {
          for (std::size_t c = 0; c < 2; ++c) {
            for (std::size_t d = 0; d < 3; ++d) {
              CHECK(res.grad_logp(b, s, k, c, d) == -batch.mask(b, s, c) * adv(b, s, c));
            }
          }
        }
      }
    }
  }

  TEST_CASE("matches the straight-line reference") {
    Rng rng(12);
    for (int trial = 0; trial < 10; ++trial) {
      const TrajectoryBatch batch = random_batch(rng, 6, 4, 3, 2, 7, 0.2);
      const Tensor adv = random_advantages(rng, batch);
      const ClipConfig clip;
      const LossResult res = fa_grpo_loss(batch, adv, nullptr, clip);
      CHECK(res.loss == doctest::Approx(reference_loss(batch, adv, clip)).epsilon(1e-12));
    }
  }

  TEST_CASE("masked perturbations leave the loss bit-identical") {
    Rng rng(13);
    const TrajectoryBatch batch = random_batch(rng, 6, 5, 3, 2, 7, 0.2);
    const Tensor adv = random_advantages(rng, batch);
    const Tensor w = flowscale_weights(batch.std, FlowScaleConfig{});
    const LossResult base = fa_grpo_loss(batch, adv, &w, ClipConfig{});
    TrajectoryBatch pert = batch;
    std::size_t touched = 0;
    for (std::size_t b = 0; b < 6; ++b) {
      for (std::size_t s = 0; s < 5; ++s) {
        for (std::size_t c = 0; c < 2; ++c) {
          if (batch.mask(b, s, c) != 0.0) continue;
          for (std::size_t k = 0; k < 3; ++k) {
            for (std::size_t d = 0; d < 7; ++d) {
              pert.logp_elem(b, s, k, c, d) += rng.normal();
              pert.old_logp_elem(b, s, k, c, d) -= rng.normal();
              pert.ref_logp_elem(b, s, k, c, d) += 3.0;
              ++touched;
            }
          }
        }
      }
    }
    REQUIRE(touched > 0);
    const LossResult after = fa_grpo_loss(pert, adv, &w, ClipConfig{});
    CHECK(after.loss == base.loss);
    CHECK(after.grad_logp == base.grad_logp);
  }

  TEST_CASE("K = 1 FA-GRPO equals per-step ratios; K > 1 differs") {
    Rng rng(14);
    const TrajectoryBatch one = random_batch(rng, 4, 3, 1, 2, 7, 0.3);
    const Tensor adv1 = random_advantages(rng, one);
    const LossResult fa = fa_grpo_loss(one, adv1, nullptr, ClipConfig{});
    const LossResult fg = flow_grpo_loss(one, adv1, ClipConfig{});
    CHECK(fa.loss == fg.loss);
    CHECK(fa.grad_logp == fg.grad_logp);
    CHECK(action_ratios(one).ratios.size() == one.logp_elem.size());

    for (int trial = 0; trial < 5; ++trial) {
      const TrajectoryBatch many = random_batch(rng, 4, 3, 4, 2, 7, 0.3);
      const Tensor adv = random_advantages(rng, many);
      CHECK(fa_grpo_loss(many, adv, nullptr, ClipConfig{}).loss !=
            flow_grpo_loss(many, adv, ClipConfig{}).loss);
    }
  }

  TEST_CASE("weight placements give the same gradient") {
    Rng rng(15);
    for (int trial = 0; trial < 5; ++trial) {
      const TrajectoryBatch batch = random_batch(rng, 4, 3, 4, 2, 7, 0.3);
      const Tensor adv = random_advantages(rng, batch);
      const Tensor w = flowscale_weights(batch.std, FlowScaleConfig{});
      const LossResult a = fa_grpo_loss(batch, adv, &w, ClipConfig{}, WeightPlacement::Advantage);
      const LossResult l = fa_grpo_loss(batch, adv, &w, ClipConfig{}, WeightPlacement::LogProb);
      for (std::size_t i = 0; i < a.grad_logp.size(); ++i) {
        CHECK(a.grad_logp.flat()[i] == doctest::Approx(l.grad_logp.flat()[i]).epsilon(1e-14));
      }
    }
  }

  TEST_CASE("std is a stop-gradient input") {
    Rng rng(16);
    const TrajectoryBatch batch = random_batch(rng, 4, 3, 4, 2, 7, 0.2);
    const Tensor adv = random_advantages(rng, batch);
    const Tensor w = flowscale_weights(batch.std, FlowScaleConfig{});
    const double base = fa_grpo_loss(batch, adv, &w, ClipConfig{}).loss;
    for (std::size_t i = 0; i < batch.std.size(); i += 7) {
      TrajectoryBatch pert = batch;
      pert.std.flat()[i] *= 1.5;
      const Tensor pw = flowscale_weights(pert.std, FlowScaleConfig{});
      CHECK(fa_grpo_loss(pert, adv, &pw, ClipConfig{}).loss == base);
    }
  }

  TEST_CASE("surrogate agrees with the loss at the anchor") {
    Rng rng(17);
    const TrajectoryBatch batch = random_batch(rng, 3, 3, 4, 2, 7, 0.2);
    const Tensor adv = random_advantages(rng, batch);
    const Tensor w = flowscale_weights(batch.std, FlowScaleConfig{});
    const double s = fa_grpo_surrogate(batch, adv, &w, batch.logp_elem, ClipConfig{});
    CHECK(s == doctest::Approx(fa_grpo_loss(batch, adv, &w, ClipConfig{}).loss).epsilon(1e-13));
  }

  TEST_CASE("batch validation") {
    TrajectoryBatch batch = TrajectoryBatch::zeros(1, 3, 2, 1, 7);
    batch.mask(0, 0, 0) = 0.0;
    batch.mask(0, 1, 0) = 1.0;
    CHECK_THROWS_AS(batch.validate(), Error);
    Rng rng(1);
    const TrajectoryBatch ok = random_batch(rng, 2, 3, 2, 2, 7);
    CHECK_THROWS_AS(fa_grpo_loss(ok, Tensor({2, 3, 1}), nullptr, ClipConfig{}), Error);
  }
}
