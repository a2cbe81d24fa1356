#pragma once

#include <cstddef>
#include <vector>

#include "lmo/error.hpp"
#include "lmo/rl/network.hpp"
#include "lmo/rng.hpp"

namespace lmo::rl {

// Fixed-capacity ring buffer of transitions with uniform sampling.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity_ == 0) throw validation_error("replay capacity must be positive");
    storage_.reserve(capacity_);
  }

  std::size_t size() const { return storage_.size(); }
  std::size_t capacity() const { return capacity_; }

  void push(Transition t) {
    if (storage_.size() < capacity_) {
      storage_.push_back(std::move(t));
    } else {
      storage_[write_] = std::move(t);
    }
    write_ = (write_ + 1) % capacity_;
  }

  std::vector<Transition> sample(std::size_t n, Rng& rng) const {
    if (storage_.empty()) throw validation_error("sampling from empty replay buffer");
    std::vector<Transition> batch;
    batch.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
      batch.push_back(storage_[rng.uniform_index(storage_.size())]);
    return batch;
  }

 private:
  std::size_t capacity_;
  std::size_t write_{0};
  std::vector<Transition> storage_;
};

}  // namespace lmo::rl
