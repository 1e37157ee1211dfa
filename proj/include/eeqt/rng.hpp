#pragma once

#include <cstdint>

namespace eeqt {

/// SplitMix64 output finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * UINT64_C(0xBF58476D1CE4E5B9);
  z = (z ^ (z >> 27)) * UINT64_C(0x94D049BB133111EB);
  return z ^ (z >> 31);
}

/// Seed of the i-th child stream of `master`.
///
/// The child seed is the (i+1)-th output of a SplitMix64 generator started at
/// `master`, so it can be computed in O(1) for any index and does not depend
/// on the order in which streams are requested.
constexpr std::uint64_t split_seed(std::uint64_t master, std::uint64_t index) noexcept {
  return mix64(master + UINT64_C(0x9E3779B97F4A7C15) * (index + 1));
}

/// xoshiro256** seeded through SplitMix64. One instance per trajectory.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed) noexcept {
    std::uint64_t s = seed;
    for (auto& w : state_) {
      s += UINT64_C(0x9E3779B97F4A7C15);
      w = mix64(s);
    }
  }

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return ~result_type{0}; }

  result_type operator()() noexcept {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  /// Uniform on [0, 1).
  double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  /// Uniform on (0, 1].
  double uniform_open_closed() noexcept { return 1.0 - uniform(); }

 private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
    return (x << k) | (x >> (64 - k));
  }

  std::uint64_t state_[4];
};

}  // namespace eeqt
