// SPDX-FileCopyrightText: 2026 flexvox contributors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>
#include <stdexcept>
#include <vector>

#include "flexvox/condition.hpp"

using namespace flexvox;

TEST_CASE("layout constants") {
  CHECK(kForceBins == 2);
  CHECK(kLocationBins == 7);
  CHECK(kMaterialBins == 2);
  CHECK(kConditionLength == 11);
}

TEST_CASE("encode places one hot bit per segment") {
  // (0,0,0): first slot of every segment.
  const std::vector<float> a = encode_vector(Condition{0, 0, 0});
  REQUIRE(a.size() == 11);
  for (size_t i = 0; i < a.size(); ++i) {
    const bool want = i == 0 || i == 2 || i == 9;
    CHECK(a[i] == (want ? 1.0f : 0.0f));
  }

  // (1,3,0): ones at 1, 2+3=5, 9.
  const std::vector<float> b = encode_vector(Condition{1, 3, 0});
  for (size_t i = 0; i < b.size(); ++i) {
    const bool want = i == 1 || i == 5 || i == 9;
    CHECK(b[i] == (want ? 1.0f : 0.0f));
  }
}

TEST_CASE("every encoding has exactly three ones") {
  for (const Condition& c : all_conditions()) {
    const std::vector<float> v = encode_vector(c);
    float sum = 0.0f;
    for (float x : v) {
      CHECK((x == 0.0f || x == 1.0f));
      sum += x;
    }
    CHECK(sum == 3.0f);
  }
}

TEST_CASE("decode inverts encode for all 28 conditions") {
  const std::vector<Condition> all = all_conditions();
  REQUIRE(all.size() == 28);
  for (const Condition& c : all) CHECK(decode_vector(encode_vector(c)) == c);
}

TEST_CASE("the 28 encodings are distinct") {
  std::set<std::vector<float>> seen;
  for (const Condition& c : all_conditions()) seen.insert(encode_vector(c));
  CHECK(seen.size() == 28);
}

TEST_CASE("all_conditions enumerates in lexicographic order") {
  const std::vector<Condition> all = all_conditions();
  CHECK(all.front() == Condition{0, 0, 0});
  CHECK(all[1] == Condition{0, 0, 1});
  CHECK(all[2] == Condition{0, 1, 0});
  CHECK(all.back() == Condition{1, 6, 1});
}

TEST_CASE("condition validation rejects out-of-range bins") {
  CHECK_THROWS_AS((Condition{-1, 0, 0}).validate(), std::invalid_argument);
  CHECK_THROWS_AS((Condition{2, 0, 0}).validate(), std::invalid_argument);
  CHECK_THROWS_AS((Condition{0, 7, 0}).validate(), std::invalid_argument);
  CHECK_THROWS_AS((Condition{0, 0, 2}).validate(), std::invalid_argument);
  CHECK_THROWS_WITH_AS(encode_vector(Condition{0, 9, 0}),
                       doctest::Contains("location"), std::invalid_argument);
}

TEST_CASE("decode rejects malformed vectors naming the segment") {
  CHECK_THROWS_WITH_AS(decode_vector(std::vector<float>(10, 0.0f)),
                       doctest::Contains("decode_vector"), std::invalid_argument);

  // All-zero: the force segment is the first to come up empty.
  CHECK_THROWS_WITH_AS(decode_vector(std::vector<float>(11, 0.0f)),
                       doctest::Contains("force"), std::invalid_argument);

  std::vector<float> two_force(11, 0.0f);
  two_force[0] = two_force[1] = 1.0f;
  two_force[2] = two_force[9] = 1.0f;
  CHECK_THROWS_WITH_AS(decode_vector(two_force), doctest::Contains("force"),
                       std::invalid_argument);

  std::vector<float> no_material = encode_vector(Condition{0, 0, 0});
  no_material[9] = 0.0f;
  CHECK_THROWS_WITH_AS(decode_vector(no_material), doctest::Contains("material"),
                       std::invalid_argument);

  std::vector<float> soft = encode_vector(Condition{1, 2, 1});
  soft[4] = 0.5f;  // non-binary entry in the location segment
  CHECK_THROWS_WITH_AS(decode_vector(soft), doctest::Contains("location"),
                       std::invalid_argument);
}

TEST_CASE("block masks broadcast the vector over constant channels") {
  const int64_t s = 8;
  const Condition c{0, 0, 0};
  const Tensor m = encode_block_masks(c, s);
  REQUIRE(m.rank() == 4);
  CHECK(m.dim(0) == 11);
  CHECK(m.dim(1) == s);
  CHECK(m.dim(2) == s);
  CHECK(m.dim(3) == s);

  const std::vector<float> v = encode_vector(c);
  const int64_t vol = s * s * s;
  double total = 0.0;
  for (int64_t ch = 0; ch < 11; ++ch) {
    double sum = 0.0;
    for (int64_t t = 0; t < vol; ++t) {
      const float x = m.data()[ch * vol + t];
      CHECK((x == 0.0f || x == 1.0f));
      sum += x;
    }
    // Each channel is constant: all ones iff the vector bit is set.
    CHECK(sum == (v[static_cast<size_t>(ch)] == 1.0f ? static_cast<double>(vol) : 0.0));
    total += sum;
  }
  CHECK(total == 3.0 * static_cast<double>(vol));  // mean over channels = 3/11

  CHECK_THROWS_AS(encode_block_masks(c, 0), std::invalid_argument);
}

TEST_CASE("block masks are injective over the 28 conditions") {
  std::set<std::vector<float>> seen;
  for (const Condition& c : all_conditions()) {
    const Tensor m = encode_block_masks(c, 4);
    seen.insert(std::vector<float>(m.data(), m.data() + m.numel()));
  }
  CHECK(seen.size() == 28);
}
