// Copyright Contributors to the lumikit Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>

namespace lumikit {

// Counter-based generator built on the splitmix64 finalizer. A stream is fully
// determined by (seed, stream): draw k of stream s is hash(seed, s, k), so
// per-pixel streams can be derived independently of thread scheduling.
class Rng {
 public:
  explicit Rng(uint64_t seed, uint64_t stream = 0)
      : base_(mix(seed ^ 0x9e3779b97f4a7c15ull) ^ mix(stream * 0xbf58476d1ce4e5b9ull + 1)) {}

  uint64_t next_u64() {
    uint64_t z = base_ + counter_ * 0x9e3779b97f4a7c15ull;
    ++counter_;
    return mix(z);
  }

  uint32_t next_u32() { return static_cast<uint32_t>(next_u64() >> 32); }

  // Uniform in [0,1), 53-bit resolution.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in the open interval (0,1); safe inside log().
  double next_open() { return (static_cast<double>(next_u64() >> 12) + 0.5) * 0x1.0p-52; }

  // Uniform integer in [0, n).
  uint64_t next_below(uint64_t n) { return next_u64() % n; }

  template <typename T>
  T uniform() {
    return static_cast<T>(next_double());
  }

  template <typename T>
  T uniform(T lo, T hi) {
    return lo + (hi - lo) * static_cast<T>(next_double());
  }

 private:
  static uint64_t mix(uint64_t z) {
    z ^= z >> 30;
    z *= 0xbf58476d1ce4e5b9ull;
    z ^= z >> 27;
    z *= 0x94d049bb133111ebull;
    z ^= z >> 31;
    return z;
  }

  uint64_t base_ = 0;
  uint64_t counter_ = 0;
};

}  // namespace lumikit
