#pragma once

#include <cstddef>
#include <deque>
#include <span>
#include <vector>

#include "wmrl/error.hpp"

namespace wmrl {

// Fixed-length window over the most recent frames. After init() the length
// is always exactly capacity(): the buffer starts as capacity copies of the
// first frame and every push drops the oldest entries.
template <typename T>
class HistoryBuffer {
 public:
  HistoryBuffer() = default;
  HistoryBuffer(const T& x0, std::size_t capacity) { init(x0, capacity); }

  void init(const T& x0, std::size_t capacity) {
    if (capacity < 1) throw Error(Errc::InvalidArgument, "history length must be >= 1");
    capacity_ = capacity;
    items_.assign(capacity, x0);
  }

  void push(const T& x) {
    items_.push_back(x);
    while (items_.size() > capacity_) items_.pop_front();
  }

  void push_all(std::span<const T> xs) {
    for (const T& x : xs) push(x);
  }

  [[nodiscard]] std::size_t capacity() const noexcept { return capacity_; }
  [[nodiscard]] std::size_t size() const noexcept { return items_.size(); }
  [[nodiscard]] const T& operator[](std::size_t i) const { return items_[i]; }
  [[nodiscard]] const T& back() const { return items_.back(); }
  [[nodiscard]] std::vector<T> items() const { return {items_.begin(), items_.end()}; }

  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }

 private:
  std::size_t capacity_ = 0;
  std::deque<T> items_;
};

}  // namespace wmrl
