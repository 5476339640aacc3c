#pragma once

#include <cstdint>
#include <utility>

namespace dino {

inline constexpr std::uint64_t kSplitMixGamma = 0x9E3779B97F4A7C15ULL;

// One SplitMix64 draw. Returns {value, next_state}.
constexpr std::pair<std::uint64_t, std::uint64_t> prng_next(std::uint64_t state) noexcept {
  state += kSplitMixGamma;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return {z ^ (z >> 31), state};
}

// Stateful wrapper around prng_next. All randomness in the project flows
// through one of these so runs replay bit-for-bit from a seed.
class Prng {
 public:
  constexpr explicit Prng(std::uint64_t state = 0) noexcept : state_(state) {}

  constexpr std::uint64_t next() noexcept {
    auto [value, next_state] = prng_next(state_);
    state_ = next_state;
    return value;
  }

  // value / 2^64, truncated to the 53 bits a double holds so the result
  // stays strictly below 1.
  double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  constexpr std::uint64_t state() const noexcept { return state_; }
  constexpr void set_state(std::uint64_t s) noexcept { state_ = s; }

  friend constexpr bool operator==(const Prng&, const Prng&) = default;

 private:
  std::uint64_t state_;
};

}  // namespace dino
