#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "wmrl/error.hpp"

namespace wmrl {

// Dense row-major N-d array of doubles. Used for the [B,S,K,CH,D] family
// and other small fixed-shape buffers.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0)
      : shape_(std::move(shape)) {
    data_.assign(count(shape_), fill);
    compute_strides();
  }

  Tensor(std::initializer_list<std::size_t> shape, double fill = 0.0)
      : Tensor(std::vector<std::size_t>(shape), fill) {}

  static Tensor from_data(std::vector<std::size_t> shape,
                          std::vector<double> data) {
    if (count(shape) != data.size()) {
      throw Error(Errc::ShapeMismatch, "data size does not match shape");
    }
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = std::move(data);
    t.compute_strides();
    return t;
  }

  [[nodiscard]] const std::vector<std::size_t>& shape() const noexcept {
    return shape_;
  }
  [[nodiscard]] std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  [[nodiscard]] std::size_t rank() const noexcept { return shape_.size(); }
  [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }

  [[nodiscard]] std::span<double> flat() noexcept { return data_; }
  [[nodiscard]] std::span<const double> flat() const noexcept { return data_; }
  [[nodiscard]] std::vector<double>& vec() noexcept { return data_; }
  [[nodiscard]] const std::vector<double>& vec() const noexcept { return data_; }

  template <typename... Idx>
  [[nodiscard]] double& operator()(Idx... idx) {
    return data_[offset(idx...)];
  }
  template <typename... Idx>
  [[nodiscard]] double operator()(Idx... idx) const {
    return data_[offset(idx...)];
  }

  // Contiguous view of the trailing dimensions below a fixed leading prefix.
  template <typename... Idx>
  [[nodiscard]] std::span<double> slice(Idx... lead) {
    constexpr std::size_t n = sizeof...(Idx);
    const std::array<std::size_t, n> ix{static_cast<std::size_t>(lead)...};
    std::size_t off = 0;
    for (std::size_t i = 0; i < n; ++i) off += ix[i] * strides_[i];
    return std::span<double>(data_).subspan(off, n == 0 ? data_.size() : strides_[n - 1]);
  }
  template <typename... Idx>
  [[nodiscard]] std::span<const double> slice(Idx... lead) const {
    constexpr std::size_t n = sizeof...(Idx);
    const std::array<std::size_t, n> ix{static_cast<std::size_t>(lead)...};
    std::size_t off = 0;
    for (std::size_t i = 0; i < n; ++i) off += ix[i] * strides_[i];
    return std::span<const double>(data_).subspan(off, n == 0 ? data_.size() : strides_[n - 1]);
  }

  [[nodiscard]] bool same_shape(const Tensor& other) const noexcept {
    return shape_ == other.shape_;
  }

  [[nodiscard]] std::string shape_string() const {
    std::string s = "[";
    for (std::size_t i = 0; i < shape_.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(shape_[i]);
    }
    return s + "]";
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  bool operator==(const Tensor&) const = default;

 private:
  static std::size_t count(const std::vector<std::size_t>& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                           std::multiplies<>());
  }

  void compute_strides() {
    strides_.assign(shape_.size(), 1);
    for (std::size_t i = shape_.size(); i-- > 1;) {
      strides_[i - 1] = strides_[i] * shape_[i];
    }
  }

  template <typename... Idx>
  [[nodiscard]] std::size_t offset(Idx... idx) const {
    const std::array<std::size_t, sizeof...(Idx)> ix{static_cast<std::size_t>(idx)...};
    std::size_t off = 0;
    for (std::size_t i = 0; i < ix.size(); ++i) off += ix[i] * strides_[i];
    return off;
  }

  std::vector<std::size_t> shape_;
  std::vector<std::size_t> strides_;
  std::vector<double> data_;
};

}  // namespace wmrl
