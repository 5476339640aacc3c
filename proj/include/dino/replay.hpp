#pragma once

#include <algorithm>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "dino/env.hpp"
#include "dino/errors.hpp"
#include "dino/prng.hpp"
#include "dino/raster.hpp"

namespace dino::replay {

struct Transition {
  raster::Observation obs;
  sim::Action action = sim::Action::Noop;
  float reward = 0;
  raster::Observation next_obs;
  bool terminal = false;
  // Greedy action in next_obs; only meaningful when !terminal.
  std::optional<sim::Action> next_action;
};

// Fixed-capacity FIFO ring. Once full, each push overwrites the oldest record.
template <class T>
class RingMemory {
 public:
  explicit RingMemory(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw ConfigError("replay capacity must be positive");
    slots_.reserve(std::min<std::size_t>(capacity, 1 << 16));
  }

  void push(T item) {
    if (slots_.size() < capacity_) {
      slots_.push_back(std::move(item));
    } else {
      slots_[cursor_] = std::move(item);
    }
    cursor_ = (cursor_ + 1) % capacity_;
  }

  std::size_t size() const { return slots_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool full() const { return slots_.size() == capacity_; }

  // i-th record counting from the oldest still stored.
  const T& at(std::size_t i) const {
    const std::size_t oldest = full() ? cursor_ : 0;
    return slots_[(oldest + i) % slots_.size()];
  }

  // batch_size logical indices drawn with replacement as prng_next mod size,
  // in draw order.
  std::vector<std::size_t> sample_indices(std::size_t batch_size, Prng& prng) const {
    if (size() < batch_size || size() == 0) {
      throw InsufficientData("replay holds " + std::to_string(size()) + " records, batch needs " +
                             std::to_string(batch_size));
    }
    std::vector<std::size_t> idx(batch_size);
    for (auto& i : idx) i = static_cast<std::size_t>(prng.next() % size());
    return idx;
  }

  std::vector<T> sample(std::size_t batch_size, Prng& prng) const {
    std::vector<T> out;
    out.reserve(batch_size);
    for (auto i : sample_indices(batch_size, prng)) out.push_back(at(i));
    return out;
  }

  void clear() {
    slots_.clear();
    cursor_ = 0;
  }

 private:
  std::size_t capacity_;
  std::vector<T> slots_;
  std::size_t cursor_ = 0;  // next slot to write
};

using ReplayBuffer = RingMemory<Transition>;

}  // namespace dino::replay
