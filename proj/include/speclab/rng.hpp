// Copyright 2026 The speclab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>

namespace speclab {

// Finalizer from the splitmix64 generator. Used only to mix seeds.
constexpr uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Counter-based stream derivation: statistically independent child seeds for
// parallel tasks. Results depend only on (master, stream), never on worker
// scheduling, so parallel runs reproduce serial ones exactly.
constexpr uint64_t derive_seed(uint64_t master, uint64_t stream) {
  return splitmix64(splitmix64(master) ^ (0x9e3779b97f4a7c15ULL * (stream + 1)));
}

constexpr uint64_t derive_seed(uint64_t master, uint64_t a, uint64_t b) {
  return derive_seed(derive_seed(master, a), b);
}

constexpr uint64_t derive_seed(uint64_t master, uint64_t a, uint64_t b, uint64_t c) {
  return derive_seed(derive_seed(master, a, b), c);
}

// Seeded random stream. Owned by exactly one caller at a time.
class RngStream {
 public:
  explicit RngStream(uint64_t seed) : gen_(splitmix64(seed)) {}

  uint64_t next_u64() { return gen_(); }

  // Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n). Requires n >= 1.
  size_t uniform_index(size_t n) {
    return static_cast<size_t>((static_cast<__uint128_t>(gen_()) * n) >> 64);
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace speclab
