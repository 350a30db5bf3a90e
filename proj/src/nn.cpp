#include "wmrl/nn.hpp"

#include <algorithm>
#include <cmath>

#include "wmrl/error.hpp"

namespace wmrl {

Mlp::Mlp(std::vector<std::size_t> layer_sizes) : sizes_(std::move(layer_sizes)) {
  if (sizes_.size() < 2) throw Error(Errc::InvalidArgument, "an MLP needs at least two layer sizes");
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    offsets_.push_back(off);
    off += sizes_[l] * sizes_[l + 1] + sizes_[l + 1];
  }
  num_params_ = off;
}

void Mlp::init(std::span<double> params, Rng& rng, double scale, bool zero_output) const {
  if (params.size() != num_params_) throw Error(Errc::ShapeMismatch, "parameter vector size");
  for (double& p : params) p = rng.uniform(-scale, scale);
  if (zero_output) {
    const std::size_t last = offsets_.back();
    std::fill(params.begin() + static_cast<std::ptrdiff_t>(last), params.end(), 0.0);
  }
}

void Mlp::forward(std::span<const double> params, std::span<const double> x, std::span<double> y,
                  Cache* cache) const {
  if (x.size() != sizes_.front() || y.size() != sizes_.back()) {
    throw Error(Errc::ShapeMismatch, "mlp forward input/output size");
  }
  const std::size_t n_layers = sizes_.size() - 1;
  Cache local;
  Cache& c = cache ? *cache : local;
  c.act.resize(sizes_.size());
  c.act[0].assign(x.begin(), x.end());
  for (std::size_t l = 0; l < n_layers; ++l) {
    const std::size_t in = sizes_[l];
    const std::size_t out = sizes_[l + 1];
    const double* w = params.data() + offsets_[l];
    const double* b = w + in * out;
    const std::vector<double>& a = c.act[l];
    std::vector<double>& z = c.act[l + 1];
    z.resize(out);
    const bool hidden = l + 1 < n_layers;
    for (std::size_t o = 0; o < out; ++o) {
      double s = b[o];
      const double* wr = w + o * in;
      for (std::size_t i = 0; i < in; ++i) s += wr[i] * a[i];
      z[o] = hidden ? std::tanh(s) : s;
    }
  }
  std::copy(c.act.back().begin(), c.act.back().end(), y.begin());
}

void Mlp::backward(std::span<const double> params, const Cache& cache, std::span<const double> dy,
                   std::span<double> grad, std::span<double> grad_x) const {
  if (grad.size() != num_params_ || dy.size() != sizes_.back()) {
    throw Error(Errc::ShapeMismatch, "mlp backward sizes");
  }
  const std::size_t n_layers = sizes_.size() - 1;
  std::vector<double> delta(dy.begin(), dy.end());
  std::vector<double> prev;
  for (std::size_t l = n_layers; l-- > 0;) {
    const std::size_t in = sizes_[l];
    const std::size_t out = sizes_[l + 1];
    const double* w = params.data() + offsets_[l];
    double* gw = grad.data() + offsets_[l];
    double* gb = gw + in * out;
    const std::vector<double>& a = cache.act[l];
    for (std::size_t o = 0; o < out; ++o) {
      const double d = delta[o];
      if (d == 0.0) continue;
      gb[o] += d;
      double* gwr = gw + o * in;
      for (std::size_t i = 0; i < in; ++i) gwr[i] += d * a[i];
    }
    const bool need_input_grad = l > 0 || !grad_x.empty();
    if (!need_input_grad) break;
    prev.assign(in, 0.0);
    for (std::size_t o = 0; o < out; ++o) {
      const double d = delta[o];
      if (d == 0.0) continue;
      const double* wr = w + o * in;
      for (std::size_t i = 0; i < in; ++i) prev[i] += wr[i] * d;
    }
    if (l > 0) {
      // a = tanh(z): da/dz = 1 - a^2
      for (std::size_t i = 0; i < in; ++i) prev[i] *= 1.0 - a[i] * a[i];
    }
    delta.swap(prev);
  }
  if (!grad_x.empty()) {
    if (grad_x.size() != sizes_.front()) throw Error(Errc::ShapeMismatch, "grad_x size");
    std::copy(delta.begin(), delta.end(), grad_x.begin());
  }
}

void Adam::step(std::span<double> params, std::span<const double> grad) {
  if (params.size() != m_.size() || grad.size() != m_.size()) {
    throw Error(Errc::ShapeMismatch, "adam state size");
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
    params[i] -= lr_ * (m_[i] / bc1) / (std::sqrt(v_[i] / bc2) + eps_);
  }
}

void Sgd::step(std::span<double> params, std::span<const double> grad) {
  if (params.size() != vel_.size() || grad.size() != vel_.size()) {
    throw Error(Errc::ShapeMismatch, "sgd state size");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    vel_[i] = momentum_ * vel_[i] + grad[i];
    params[i] -= lr_ * vel_[i];
  }
}

}  // namespace wmrl
