#pragma once

#include <cstdint>

namespace wasmshade {

/// Deterministic 64-bit generator (xoshiro256** seeded via splitmix64).
/// std::mt19937 + std::uniform_int_distribution are not pinned down by the
/// standard, and traces must replay bit-exactly on any platform, so we carry
/// our own generator and our own bounded sampling.
class Rng {
 public:
  explicit Rng(uint64_t seed) {
    uint64_t x = seed;
    for (auto& word : s_) word = splitmix64(x);
  }

  /// Next raw 64 random bits.
  uint64_t next() {
    uint64_t result = rotl(s_[1] * 5, 7) * 9;
    uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  /// Uniform in [0, bound). bound must be >= 1. Rejection sampling, so the
  /// result is exactly uniform and identical everywhere.
  uint64_t below(uint64_t bound) {
    uint64_t threshold = (0 - bound) % bound;  // 2^64 mod bound
    for (;;) {
      uint64_t r = next();
      if (r >= threshold) return r % bound;
    }
  }

  /// Uniform in [lo, hi], inclusive on both ends.
  int64_t range(int64_t lo, int64_t hi) {
    return lo + static_cast<int64_t>(
                    below(static_cast<uint64_t>(hi - lo) + 1));
  }

 private:
  static uint64_t splitmix64(uint64_t& x) {
    uint64_t z = (x += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }
  static uint64_t rotl(uint64_t v, int k) { return (v << k) | (v >> (64 - k)); }

  uint64_t s_[4];
};

}  // namespace wasmshade
