#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace ebt {

/// xoshiro256** pseudo-random generator (Blackman & Vigna), seeded through
/// splitmix64. Both algorithms are fully specified over uint64 arithmetic,
/// so sequences are bit-identical on every platform and the four-word state
/// can be serialized into checkpoints directly.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) {
    std::uint64_t x = seed;
    for (auto& word : state_) word = splitmix64(x);
  }

  std::uint64_t next_u64() {
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

  std::uint32_t next_u32() { return static_cast<std::uint32_t>(next_u64() >> 32); }

  /// Uniform in [0,1) with 24 (float) or 53 (double) mantissa bits.
  float uniform_float() { return static_cast<float>(next_u64() >> 40) * 0x1.0p-24f; }
  double uniform_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  template <typename T>
  T uniform(T lo, T hi) {
    if constexpr (sizeof(T) == sizeof(double)) {
      return lo + (hi - lo) * static_cast<T>(uniform_double());
    } else {
      return lo + (hi - lo) * static_cast<T>(uniform_float());
    }
  }

  /// Bounded draw in [0,n) via the multiply-shift reduction. The modulo bias
  /// is below 2^-32 and irrelevant for shuffling; what matters is that the
  /// mapping is deterministic.
  std::uint32_t next_below(std::uint32_t n) {
    return static_cast<std::uint32_t>((static_cast<std::uint64_t>(next_u32()) * n) >> 32);
  }

  /// Fisher-Yates shuffle with a fixed draw order.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = next_below(static_cast<std::uint32_t>(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  std::array<std::uint64_t, 4> state() const { return state_; }
  void set_state(const std::array<std::uint64_t, 4>& s) { state_ = s; }

  /// Derives an independent stream from (seed, tags...); used for per-epoch
  /// shuffle orders so a resumed run replays the identical batch sequence.
  static Rng derive(std::uint64_t seed, std::uint64_t tag_a, std::uint64_t tag_b = 0) {
    std::uint64_t x = seed;
    std::uint64_t mixed = splitmix64(x) ^ (tag_a * 0x9e3779b97f4a7c15ull);
    mixed = splitmix64(mixed) ^ (tag_b * 0xbf58476d1ce4e5b9ull);
    return Rng(splitmix64(mixed));
  }

 private:
  static std::uint64_t splitmix64(std::uint64_t& x) {
    x += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  std::array<std::uint64_t, 4> state_{};
};

}  // namespace ebt
