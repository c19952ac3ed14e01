// SPDX-FileCopyrightText: 2026 flexvox contributors
// SPDX-License-Identifier: Apache-2.0

#include "flexvox/condition.hpp"

#include <stdexcept>
#include <string>

namespace flexvox {

namespace {

void check_bin(int value, int width, const char* name) {
  if (value < 0 || value >= width)
    throw std::invalid_argument(std::string("Condition: ") + name + " bin " +
                                std::to_string(value) + " outside [0," + std::to_string(width) +
                                ")");
}

// Exactly one 1 (and otherwise 0) in v[start, start+width); returns its offset.
int segment_hot(const std::vector<float>& v, int start, int width, const char* name) {
  int hot = -1;
  for (int i = 0; i < width; ++i) {
    const float x = v[static_cast<size_t>(start + i)];
    if (x == 1.0f) {
      if (hot >= 0)
        throw std::invalid_argument(std::string("decode_vector: multiple ones in ") + name +
                                    " segment");
      hot = i;
    } else if (x != 0.0f) {
      throw std::invalid_argument(std::string("decode_vector: non-binary value in ") + name +
                                  " segment");
    }
  }
  if (hot < 0)
    throw std::invalid_argument(std::string("decode_vector: no one set in ") + name +
                                " segment");
  return hot;
}

}  // namespace

void Condition::validate() const {
  check_bin(force_bin, kForceBins, "force");
  check_bin(location_bin, kLocationBins, "location");
  check_bin(material_bin, kMaterialBins, "material");
}

std::vector<float> encode_vector(const Condition& c) {
  c.validate();
  std::vector<float> v(static_cast<size_t>(kConditionLength), 0.0f);
  v[static_cast<size_t>(c.force_bin)] = 1.0f;
  v[static_cast<size_t>(kForceBins + c.location_bin)] = 1.0f;
  v[static_cast<size_t>(kForceBins + kLocationBins + c.material_bin)] = 1.0f;
  return v;
}

Condition decode_vector(const std::vector<float>& v) {
  if (v.size() != static_cast<size_t>(kConditionLength))
    throw std::invalid_argument("decode_vector: expected length " +
                                std::to_string(kConditionLength) + ", got " +
                                std::to_string(v.size()));
  Condition c;
  c.force_bin = segment_hot(v, 0, kForceBins, "force");
  c.location_bin = segment_hot(v, kForceBins, kLocationBins, "location");
  c.material_bin = segment_hot(v, kForceBins + kLocationBins, kMaterialBins, "material");
  return c;
}

Tensor encode_block_masks(const Condition& c, int64_t s) {
  if (s < 1) throw std::invalid_argument("encode_block_masks: spatial size must be positive");
  std::vector<float> bits = encode_vector(c);
  Tensor out({kConditionLength, s, s, s});
  const int64_t vol = s * s * s;
  for (int64_t ch = 0; ch < kConditionLength; ++ch) {
    const float v = bits[static_cast<size_t>(ch)];
    float* p = out.data() + ch * vol;
    for (int64_t i = 0; i < vol; ++i) p[i] = v;
  }
  return out;
}

std::vector<Condition> all_conditions() {
  std::vector<Condition> out;
  out.reserve(static_cast<size_t>(kForceBins * kLocationBins * kMaterialBins));
  for (int f = 0; f < kForceBins; ++f)
    for (int l = 0; l < kLocationBins; ++l)
      for (int m = 0; m < kMaterialBins; ++m) out.push_back(Condition{f, l, m});
  return out;
}

}  // namespace flexvox
