// SPDX-FileCopyrightText: 2026 flexvox contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>

namespace flexvox {

// Counter-free splitmix64 generator. Every stochastic draw in the project
// (weight init, shuffling, interpolation coefficients, subsampling) goes
// through this so that runs are byte-reproducible across compilers and
// thread counts.
class Prng {
 public:
  explicit Prng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller; one fresh pair per call, second value
  // discarded to keep the draw count independent of call history.
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  // Uniform integer in [0, n).
  uint64_t below(uint64_t n) { return n == 0 ? 0 : next_u64() % n; }

 private:
  uint64_t state_;
};

// Stable mixing for deriving per-purpose sub-seeds from a master seed.
inline uint64_t mix_seed(uint64_t seed, uint64_t salt) {
  Prng p(seed ^ (salt * 0x9e3779b97f4a7c15ull));
  return p.next_u64();
}

inline uint64_t mix_seed(uint64_t seed, uint64_t salt_a, uint64_t salt_b) {
  return mix_seed(mix_seed(seed, salt_a), salt_b);
}

// FNV-1a over arbitrary bytes; used for spec hashes in checkpoints.
inline uint64_t fnv1a64(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace flexvox
