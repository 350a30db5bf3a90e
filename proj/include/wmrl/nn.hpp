#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "wmrl/rng.hpp"

namespace wmrl {

// Fully connected network with tanh hidden layers and a linear output layer.
// Parameters live in a caller-owned flat vector so several snapshots of the
// same architecture (current / behaviour / reference) can share one Mlp.
// Layout per layer: W (out x in, row-major) then b (out).
class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(std::vector<std::size_t> layer_sizes);

  [[nodiscard]] std::size_t num_params() const noexcept { return num_params_; }
  [[nodiscard]] std::size_t input_dim() const { return sizes_.front(); }
  [[nodiscard]] std::size_t output_dim() const { return sizes_.back(); }
  [[nodiscard]] const std::vector<std::size_t>& layer_sizes() const noexcept { return sizes_; }

  // Uniform(-scale, scale) weights and biases; the output layer is zeroed
  // when zero_output is set.
  void init(std::span<double> params, Rng& rng, double scale, bool zero_output = false) const;

  struct Cache {
    std::vector<std::vector<double>> act;  // act[0] = input, act[l] = layer l output
  };

  void forward(std::span<const double> params, std::span<const double> x, std::span<double> y,
               Cache* cache = nullptr) const;

  // Accumulates dL/dparams into grad (+=). grad_x, when non-empty, receives
  // dL/dx (overwritten).
  void backward(std::span<const double> params, const Cache& cache, std::span<const double> dy,
                std::span<double> grad, std::span<double> grad_x = {}) const;

 private:
  std::vector<std::size_t> sizes_;
  std::vector<std::size_t> offsets_;  // start of W for each layer
  std::size_t num_params_ = 0;
};

class Adam {
 public:
  Adam() = default;
  Adam(std::size_t n, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(n, 0.0), v_(n, 0.0) {}

  void step(std::span<double> params, std::span<const double> grad);
  void set_lr(double lr) noexcept { lr_ = lr; }

 private:
  double lr_ = 1e-3, beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  long t_ = 0;
  std::vector<double> m_, v_;
};

class Sgd {
 public:
  Sgd() = default;
  Sgd(std::size_t n, double lr, double momentum = 0.0) : lr_(lr), momentum_(momentum), vel_(n, 0.0) {}

  void step(std::span<double> params, std::span<const double> grad);

 private:
  double lr_ = 1e-3, momentum_ = 0.0;
  std::vector<double> vel_;
};

}  // namespace wmrl
