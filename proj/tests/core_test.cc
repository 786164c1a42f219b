/*
 * Copyright 2026 The CamForge Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "camforge/core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "gmock/gmock.h"
#include "gtest/gtest.h"
#include "test_util.hpp"

namespace camforge {
namespace {

using ::testing::ElementsAre;
using ::testing::ElementsAreArray;

std::vector<double> Values(const ActivationMap& m) {
  return {m.values().begin(), m.values().end()};
}

TEST(ActivationMap, RejectsBadShape) {
  EXPECT_THROW(ActivationMap(0, 3, {}), Error);
  EXPECT_THROW(ActivationMap(2, 2, {1, 2, 3}), Error);
}

TEST(Normalize, AffineMinMax) {
  const ActivationMap m(2, 2, {0, 2, 4, 8});
  EXPECT_THAT(Values(Normalize(m)), ElementsAre(0.0, 0.25, 0.5, 1.0));
}

TEST(Normalize, ConstantMapBecomesZero) {
  const ActivationMap m(2, 2, {5, 5, 5, 5});
  EXPECT_THAT(Values(Normalize(m)), ElementsAre(0.0, 0.0, 0.0, 0.0));
}

TEST(Normalize, RandomMapSpansUnitInterval) {
  std::mt19937_64 rng(11);
  const auto m = testing::RandomMap(8, 8, rng, -3.0, 7.0);
  const auto n = Normalize(m);
  // Straight scan for min/max, independent of the implementation.
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (std::size_t i = 0; i < n.size(); ++i) {
    lo = std::min(lo, n[i]);
    hi = std::max(hi, n[i]);
  }
  EXPECT_EQ(lo, 0.0);
  EXPECT_EQ(hi, 1.0);
}

TEST(Normalize, Idempotent) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    const auto once = Normalize(testing::RandomMap(6, 9, rng, -1.0, 1.0));
    const auto twice = Normalize(once);
    for (std::size_t i = 0; i < once.size(); ++i) {
      EXPECT_DOUBLE_EQ(once[i], twice[i]);
    }
  }
}

TEST(Normalize, RejectsNonFinite) {
  const ActivationMap m(1, 2, {1.0, std::numeric_limits<double>::quiet_NaN()});
  try {
    Normalize(m);
    FAIL() << "expected NonFiniteInput";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNonFiniteInput);
  }
}

TEST(IsValid, Predicate) {
  EXPECT_FALSE(IsValid(
      ActivationMap(1, 2, {0.5, std::numeric_limits<double>::quiet_NaN()})));
  EXPECT_FALSE(IsValid(
      ActivationMap(1, 2, {0.5, std::numeric_limits<double>::infinity()})));
  EXPECT_FALSE(IsValid(ActivationMap::Zeros(4, 4)));
  EXPECT_TRUE(IsValid(ActivationMap(2, 2, {0.0, 0.3, 1.0, 0.7}, "GradCAM")));
}

TEST(FilterValid, DropsInvalidMaps) {
  const std::vector<ActivationMap> maps = {
      ActivationMap(1, 2, {0.0, 1.0}, "a"), ActivationMap::Zeros(1, 2, "z"),
      ActivationMap(1, 2, {1.0, 0.0}, "b")};
  const auto kept = FilterValid(maps);
  ASSERT_EQ(kept.size(), 2u);
  EXPECT_EQ(kept[0].label(), "a");
  EXPECT_EQ(kept[1].label(), "b");
}

TEST(TopKMask, TwoLargestOfFour) {
  const ActivationMap m(2, 2, {0.9, 0.1, 0.5, 0.2});
  EXPECT_THAT(TopKMask(m, 50),
              ElementsAre(PixelIndex{0, 0}, PixelIndex{1, 0}));
}

TEST(TopKMask, FullRetention) {
  std::mt19937_64 rng(3);
  const auto m = testing::RandomMap(5, 7, rng);
  EXPECT_EQ(TopKMask(m, 100).size(), 35u);
}

TEST(TopKMask, MatchesSortOracle) {
  std::mt19937_64 rng(4);
  const auto m = testing::RandomMap(16, 16, rng);
  const auto mask = TopKMask(m, 15);
  ASSERT_EQ(mask.size(), 39u);  // ceil(0.15 * 256) = ceil(38.4)
  std::vector<std::size_t> flat;
  for (const auto& p : mask) flat.push_back(p.row * 16 + p.col);
  EXPECT_THAT(flat, ElementsAreArray(testing::BruteTopK(Values(m), 15)));
}

TEST(TopKMask, TiesBreakByRowMajorIndex) {
  const ActivationMap m(2, 3, {0.5, 0.5, 0.5, 0.5, 0.5, 0.5});
  EXPECT_THAT(TopKMask(m, 50), ElementsAre(PixelIndex{0, 0}, PixelIndex{0, 1},
                                           PixelIndex{0, 2}));
}

TEST(TopKMask, RejectsBadK) {
  const ActivationMap m(1, 2, {0.0, 1.0});
  for (const double k : {0.0, -5.0, 100.5, std::nan("")}) {
    try {
      TopKMask(m, k);
      FAIL() << "k=" << k;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kInvalidK);
    }
  }
}

TEST(TopKMask, SizeAndMonotonicityProperties) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> dim(1, 20);
  std::uniform_int_distribution<int> level(0, 3);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t h = dim(rng), w = dim(rng);
    // Quantized values so ties are common; constant maps included.
    std::vector<double> v(h * w);
    const bool constant = trial % 10 == 0;
    for (auto& x : v) x = constant ? 0.25 : level(rng) / 3.0;
    const ActivationMap m(h, w, v);
    std::vector<PixelIndex> previous;
    for (int k = 1; k <= 100; k += 7) {
      const auto mask = TopKMask(m, k);
      const auto expected = static_cast<std::size_t>(
          std::ceil(k * static_cast<double>(h * w) / 100.0));
      EXPECT_EQ(mask.size(), std::max<std::size_t>(expected, 1));
      EXPECT_TRUE(std::includes(mask.begin(), mask.end(), previous.begin(),
                                previous.end()));
      previous = mask;
    }
  }
}

TEST(RetainedCount, ExactForIntegerPercentages) {
  EXPECT_EQ(RetainedCount(30, 100), 30u);
  EXPECT_EQ(RetainedCount(15, 256), 39u);
  EXPECT_EQ(RetainedCount(19, 224 * 224), 9534u);
  EXPECT_EQ(RetainedCount(0.001, 10), 1u);
}

TEST(RankPixels, MirroredTailForLeastRelevant) {
  const std::vector<double> v = {0.2, 0.9, 0.2, 0.2, 0.5};
  // Most to least: 1 (0.9), 4 (0.5), then the 0.2 ties in index order.
  EXPECT_THAT(RankPixels(v), ElementsAre(1, 4, 0, 2, 3));
}

}  // namespace
}  // namespace camforge
