#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <vector>

#include "oefsmc/rng.hpp"

namespace oefsmc {

// Seeded mini-batch order over n rows.
class BatchStream {
 public:
  BatchStream(std::size_t n, std::size_t batch, std::uint64_t seed)
      : n_(n), batch_(std::max<std::size_t>(1, batch)), rng_(seed), order_(n) {
    std::iota(order_.begin(), order_.end(), 0);
    pos_ = n_;
  }

  // One shuffled pass split into consecutive batches (last may be short).
  std::vector<std::vector<std::size_t>> epoch() {
    rng_.shuffle(order_);
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t i = 0; i < n_; i += batch_) {
      out.emplace_back(order_.begin() + static_cast<std::ptrdiff_t>(i),
                       order_.begin() + static_cast<std::ptrdiff_t>(std::min(n_, i + batch_)));
    }
    return out;
  }

  // Next min(batch, n) rows of an endless reshuffled cycle.
  std::vector<std::size_t> next() {
    std::vector<std::size_t> out;
    const std::size_t want = std::min(batch_, n_);
    while (out.size() < want) {
      if (pos_ == n_) {
        rng_.shuffle(order_);
        pos_ = 0;
      }
      out.push_back(order_[pos_++]);
    }
    return out;
  }

  std::size_t steps_per_epoch() const { return (n_ + batch_ - 1) / batch_; }

 private:
  std::size_t n_;
  std::size_t batch_;
  Rng rng_;
  std::vector<std::size_t> order_;
  std::size_t pos_;
};

}  // namespace oefsmc
