// SPDX-FileCopyrightText: 2026 flexvox contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "flexvox/tensor.hpp"

namespace flexvox {

inline constexpr int kForceBins = 2;
inline constexpr int kLocationBins = 7;
inline constexpr int kMaterialBins = 2;
inline constexpr int kConditionLength = kForceBins + kLocationBins + kMaterialBins;  // 11

// A binned (force, location, material) condition.
struct Condition {
  int force_bin = 0;     // [0, 2)
  int location_bin = 0;  // [0, 7)
  int material_bin = 0;  // [0, 2)

  void validate() const;  // throws std::invalid_argument on out-of-range bins
  bool operator==(const Condition&) const = default;
};

// Flat one-hot layout [force(2) | location(7) | material(2)]; three ones.
std::vector<float> encode_vector(const Condition& c);

// Inverse of encode_vector. Rejects vectors that are not exactly one-hot
// per field segment, naming the offending segment.
Condition decode_vector(const std::vector<float>& v);

// Spatial form for the discriminator: 11 channels of s^3 constants, channel
// i all-ones iff vector bit i is 1. Shape [11, s, s, s].
Tensor encode_block_masks(const Condition& c, int64_t s);

// The 28 valid conditions in (force, location, material) lexicographic order.
std::vector<Condition> all_conditions();

}  // namespace flexvox
