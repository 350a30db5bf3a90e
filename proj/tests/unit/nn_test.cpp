#include <cmath>

#include "doctest.h"
#include "support.hpp"
#include "wmrl/nn.hpp"

using namespace wmrl;

TEST_SUITE("nn") {
  TEST_CASE("mlp backward matches central differences") {
    const Mlp net({5, 8, 8, 3});
    std::vector<double> params(net.num_params());
    Rng rng(11);
    net.init(params, rng, 0.5);
    const auto x = testing::normal_vector(rng, 5);
    const auto dy = testing::normal_vector(rng, 3);

    auto objective = [&](std::span<const double> p, std::span<const double> in) {
      std::vector<double> y(3);
      net.forward(p, in, y);
      double s = 0.0;
      for (std::size_t i = 0; i < 3; ++i) s += dy[i] * y[i];
      return s;
    };

    Mlp::Cache cache;
    std::vector<double> y(3), grad(net.num_params(), 0.0), grad_x(5, 0.0);
    net.forward(params, x, y, &cache);
    net.backward(params, cache, dy, grad, grad_x);

    const double h = 1e-6;
    double worst = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto p = params;
      p[i] += h;
      const double up = objective(p, x);
      p[i] -= 2 * h;
      const double down = objective(p, x);
      const double fd = (up - down) / (2 * h);
      worst = std::max(worst, std::abs(fd - grad[i]) / std::max(1e-6, std::abs(fd) + std::abs(grad[i])));
    }
    CHECK(worst < 1e-6);
    for (std::size_t i = 0; i < x.size(); ++i) {
      auto xp = x;
      xp[i] += h;
      const double up = objective(params, xp);
      xp[i] -= 2 * h;
      const double fd = (up - objective(params, xp)) / (2 * h);
      CHECK(grad_x[i] == doctest::Approx(fd).epsilon(1e-6));
    }
  }

  TEST_CASE("backward accumulates") {
    const Mlp net({2, 4, 1});
    std::vector<double> params(net.num_params());
    Rng rng(2);
    net.init(params, rng, 0.3);
    Mlp::Cache cache;
    std::vector<double> y(1), x{0.3, -0.2}, dy{1.0};
    net.forward(params, x, y, &cache);
    std::vector<double> once(net.num_params(), 0.0), twice(net.num_params(), 0.0);
    net.backward(params, cache, dy, once);
    net.backward(params, cache, dy, twice);
    net.backward(params, cache, dy, twice);
    for (std::size_t i = 0; i < once.size(); ++i) CHECK(twice[i] == 2.0 * once[i]);
  }

  TEST_CASE("zero output layer gives a zero map") {
    const Mlp net({3, 6, 2});
    std::vector<double> params(net.num_params());
    Rng rng(4);
    net.init(params, rng, 0.1, true);
    std::vector<double> y(2, 1.0);
    net.forward(params, std::vector<double>{1.0, -2.0, 0.5}, y);
    CHECK(y[0] == 0.0);
    CHECK(y[1] == 0.0);
  }

  TEST_CASE("adam and sgd descend a quadratic") {
    std::vector<double> a{3.0, -2.0}, b{3.0, -2.0};
    Adam adam(2, 0.1);
    Sgd sgd(2, 0.1, 0.5);
    for (int i = 0; i < 300; ++i) {
      std::vector<double> ga{2 * a[0], 2 * a[1]}, gb{2 * b[0], 2 * b[1]};
      adam.step(a, ga);
      sgd.step(b, gb);
    }
    CHECK(std::abs(a[0]) < 1e-2);
    CHECK(std::abs(a[1]) < 1e-2);
    CHECK(std::abs(b[0]) < 1e-6);
    CHECK(std::abs(b[1]) < 1e-6);
  }
}
