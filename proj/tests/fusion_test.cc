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

#include "camforge/fusion.hpp"

#include <cmath>
#include <random>
#include <vector>

#include "gmock/gmock.h"
#include "gtest/gtest.h"
#include "test_util.hpp"

namespace camforge {
namespace {

using ::testing::DoubleNear;
using ::testing::ElementsAre;
using ::testing::Pointwise;

std::vector<double> Values(const ActivationMap& m) {
  return {m.values().begin(), m.values().end()};
}

// Scalar reference: min-max each map, weighted double loop, min-max result.
std::vector<double> ReferenceWeighted(const std::vector<ActivationMap>& maps,
                                      const std::vector<double>& w) {
  const std::size_t n = maps.front().size();
  std::vector<double> acc(n, 0.0);
  double wsum = 0.0;
  for (std::size_t m = 0; m < maps.size(); ++m) {
    double lo = maps[m][0], hi = maps[m][0];
    for (std::size_t i = 0; i < n; ++i) {
      lo = std::min(lo, maps[m][i]);
      hi = std::max(hi, maps[m][i]);
    }
    for (std::size_t i = 0; i < n; ++i) {
      acc[i] += w[m] * (hi > lo ? (maps[m][i] - lo) / (hi - lo) : 0.0);
    }
    wsum += w[m];
  }
  double lo = 1e300, hi = -1e300;
  for (auto& v : acc) {
    v /= wsum;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  for (auto& v : acc) v = hi > lo ? (v - lo) / (hi - lo) : 0.0;
  return acc;
}

TEST(FuseAverage, IdenticalMapsGiveNormalizedInput) {
  const ActivationMap m(2, 3, {3, 1, 4, 1, 5, 9});
  const std::vector<ActivationMap> maps = {m, m, m};
  EXPECT_THAT(Values(FuseAverage(maps)),
              Pointwise(DoubleNear(1e-15), Values(Normalize(m))));
}

TEST(FuseAverage, ComplementaryMapsCollapseToZero) {
  const std::vector<ActivationMap> maps = {ActivationMap(1, 2, {1, 0}),
                                           ActivationMap(1, 2, {0, 1})};
  EXPECT_THAT(Values(FuseAverage(maps)), ElementsAre(0.0, 0.0));
}

TEST(FuseAverage, MatchesScalarLoop) {
  std::mt19937_64 rng(21);
  std::vector<ActivationMap> maps;
  for (int i = 0; i < 5; ++i) maps.push_back(testing::RandomMap(8, 8, rng, -2, 3));
  EXPECT_THAT(Values(FuseAverage(maps)),
              Pointwise(DoubleNear(1e-6),
                        ReferenceWeighted(maps, {1, 1, 1, 1, 1})));
}

TEST(FuseAverage, Errors) {
  EXPECT_THROW(FuseAverage(std::vector<ActivationMap>{}), Error);
  const std::vector<ActivationMap> mixed = {ActivationMap(1, 2, {0, 1}),
                                            ActivationMap(2, 1, {0, 1})};
  try {
    FuseAverage(mixed);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDimensionMismatch);
  }
}

TEST(FuseAverage, FilterInvariance) {
  std::mt19937_64 rng(22);
  std::vector<ActivationMap> maps;
  for (int i = 0; i < 3; ++i) maps.push_back(testing::RandomMap(6, 6, rng));
  auto with_zero = maps;
  with_zero.push_back(ActivationMap::Zeros(6, 6, "broken"));
  EXPECT_EQ(Values(FuseAverage(FilterValid(with_zero))),
            Values(FuseAverage(maps)));
}

TEST(TransformWeights, SoftmaxOfEqualScoresIsUniform) {
  const auto w = TransformWeights(std::vector<double>{0.1, 0.1, 0.1},
                                  WeightTransform::kSoftmax);
  EXPECT_THAT(w.weights, Pointwise(DoubleNear(1e-15),
                                   std::vector<double>{1 / 3.0, 1 / 3.0, 1 / 3.0}));
  EXPECT_FALSE(w.degenerate);
}

TEST(TransformWeights, MinMaxEndpoints) {
  const auto w =
      TransformWeights(std::vector<double>{1, 0}, WeightTransform::kMinMax);
  EXPECT_THAT(w.weights, ElementsAre(1.0, 0.0));
}

TEST(TransformWeights, MinMaxOfEqualScoresIsUniform) {
  const auto w = TransformWeights(std::vector<double>{-0.2, -0.2},
                                  WeightTransform::kMinMax);
  EXPECT_THAT(w.weights, ElementsAre(1.0, 1.0));
}

TEST(TransformWeights, SoftmaxAmplificationReachesTen) {
  EXPECT_EQ(SoftmaxAmplification(std::vector<double>{0.172, -0.101}), 100.0);
  EXPECT_EQ(SoftmaxAmplification(std::vector<double>{1.0}), 10.0);
  EXPECT_EQ(SoftmaxAmplification(std::vector<double>{0.0, 0.0}), 1.0);
  EXPECT_EQ(SoftmaxAmplification(std::vector<double>{12.0}), 1.0);
  // Amplification keeps the score order.
  const auto w = TransformWeights(std::vector<double>{0.3, 0.1, 0.2},
                                  WeightTransform::kSoftmax);
  EXPECT_GT(w.weights[0], w.weights[2]);
  EXPECT_GT(w.weights[2], w.weights[1]);
}

TEST(TransformWeights, RawNegativeScoresFallBackToUniform) {
  const auto w = TransformWeights(std::vector<double>{-0.1, -0.3},
                                  WeightTransform::kRaw);
  EXPECT_TRUE(w.degenerate);
  EXPECT_THAT(w.weights, ElementsAre(1.0, 1.0));
  const auto clipped = TransformWeights(std::vector<double>{0.2, -0.3},
                                        WeightTransform::kRaw);
  EXPECT_FALSE(clipped.degenerate);
  EXPECT_THAT(clipped.weights, ElementsAre(0.2, 0.0));
}

TEST(FuseWeighted, MinMaxEndpointSelectsFirstMap) {
  std::mt19937_64 rng(23);
  const std::vector<ActivationMap> maps = {testing::RandomMap(4, 4, rng),
                                           testing::RandomMap(4, 4, rng)};
  const auto fused = FuseWeighted(maps, std::vector<double>{1, 0},
                                  WeightTransform::kMinMax);
  EXPECT_THAT(Values(fused.map),
              Pointwise(DoubleNear(1e-15), Values(Normalize(maps[0]))));
}

TEST(FuseWeighted, ExponentialMatchesScalarReference) {
  std::mt19937_64 rng(24);
  std::vector<ActivationMap> maps;
  for (int i = 0; i < 3; ++i) maps.push_back(testing::RandomMap(8, 8, rng));
  const std::vector<double> scores = {0.2, -0.1, 0.05};
  std::vector<double> w;
  double z = 0.0;
  for (const double s : scores) z += std::exp(s);
  for (const double s : scores) w.push_back(std::exp(s) / z);
  const auto fused =
      FuseWeighted(maps, scores, WeightTransform::kExponential);
  EXPECT_THAT(fused.weights.weights, Pointwise(DoubleNear(1e-15), w));
  EXPECT_THAT(Values(fused.map),
              Pointwise(DoubleNear(1e-9), ReferenceWeighted(maps, w)));
}

TEST(FuseWeighted, UniformWeightsEqualAverage) {
  std::mt19937_64 rng(25);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<ActivationMap> maps;
    for (int i = 0; i < 4; ++i) maps.push_back(testing::RandomMap(7, 5, rng));
    const std::vector<double> equal(4, 0.123);
    for (const auto t : {WeightTransform::kSoftmax,
                         WeightTransform::kExponential,
                         WeightTransform::kMinMax, WeightTransform::kRaw}) {
      EXPECT_THAT(Values(FuseWeighted(maps, equal, t).map),
                  Pointwise(DoubleNear(1e-9), Values(FuseAverage(maps))));
    }
  }
}

TEST(FuseWeighted, SizeMismatchIsAnError) {
  const std::vector<ActivationMap> maps = {ActivationMap(1, 2, {0, 1})};
  EXPECT_THROW(FuseWeighted(maps, std::vector<double>{1, 2},
                            WeightTransform::kRaw),
               Error);
}

TEST(FuseConsensus, SingleMapFullRetentionIsNormalizedInput) {
  const ActivationMap m(2, 2, {2, 4, 6, 10});
  const std::vector<ActivationMap> maps = {m};
  const auto c = FuseConsensus(maps, 100);
  EXPECT_EQ(Values(c.map), Values(Normalize(m)));
  EXPECT_EQ(c.retained_count(), 4u);
}

TEST(FuseConsensus, UnanimousMaximumSurvives) {
  const std::vector<ActivationMap> maps = {ActivationMap(2, 2, {1, 0, 0, 0}),
                                           ActivationMap(2, 2, {1, 0, 0, 0.5})};
  const auto c = FuseConsensus(maps, 25);
  EXPECT_THAT(Values(c.map), ElementsAre(2.0, 0.0, 0.0, 0.0));
  EXPECT_EQ(c.threshold_value, 2.0);
}

TEST(FuseConsensus, RetainedSetMatchesSortOracle) {
  std::mt19937_64 rng(26);
  std::vector<ActivationMap> maps;
  for (int i = 0; i < 4; ++i) maps.push_back(testing::RandomMap(16, 16, rng, 0, 5));
  // Oracle: normalize, sum, brute-force top-k.
  std::vector<double> sum(256, 0.0);
  for (const auto& m : maps) {
    double lo = 1e300, hi = -1e300;
    for (std::size_t i = 0; i < 256; ++i) {
      lo = std::min(lo, m[i]);
      hi = std::max(hi, m[i]);
    }
    for (std::size_t i = 0; i < 256; ++i) sum[i] += (m[i] - lo) / (hi - lo);
  }
  const auto keep = testing::BruteTopK(sum, 30);
  const auto c = FuseConsensus(maps, 30);
  std::vector<std::size_t> got;
  for (std::size_t i = 0; i < 256; ++i) {
    if (c.retained[i]) got.push_back(i);
  }
  EXPECT_EQ(got, keep);
  for (std::size_t i = 0; i < 256; ++i) {
    if (c.retained[i]) {
      EXPECT_NEAR(c.map[i], sum[i], 1e-12);
      EXPECT_GE(c.map[i], c.threshold_value);
    } else {
      EXPECT_EQ(c.map[i], 0.0);
    }
  }
}

TEST(FuseConsensus, RetainedCountForEveryK) {
  std::mt19937_64 rng(27);
  std::vector<ActivationMap> maps;
  for (int i = 0; i < 3; ++i) maps.push_back(testing::RandomMap(13, 11, rng));
  for (int k = 1; k <= 100; ++k) {
    const auto c = FuseConsensus(maps, k);
    const auto expected = static_cast<std::size_t>(
        std::ceil(k * 143.0 / 100.0));
    EXPECT_EQ(c.retained_count(), expected) << "k=" << k;
    std::size_t zeros_outside = 0;
    for (std::size_t i = 0; i < c.map.size(); ++i) {
      if (!c.retained[i] && c.map[i] == 0.0) ++zeros_outside;
    }
    EXPECT_EQ(zeros_outside, 143 - expected);
  }
}

TEST(FuseConsensus, InvalidK) {
  const std::vector<ActivationMap> maps = {ActivationMap(1, 2, {0, 1})};
  try {
    FuseConsensus(maps, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInvalidK);
  }
  EXPECT_THROW(FuseConsensus(std::vector<ActivationMap>{}, 10), Error);
}

TEST(ThresholdSingle, FullRetentionIsIdentity) {
  std::mt19937_64 rng(28);
  const auto m = testing::RandomMap(5, 5, rng);
  EXPECT_EQ(Values(ThresholdSingle(m, 100).map), Values(m));
}

TEST(ThresholdSingle, KeepsTwoLargest) {
  const ActivationMap m(2, 2, {0.9, 0.1, 0.5, 0.2});
  EXPECT_THAT(Values(ThresholdSingle(m, 50).map),
              ElementsAre(0.9, 0.0, 0.5, 0.0));
}

TEST(ThresholdSingle, MatchesSortOracle) {
  std::mt19937_64 rng(29);
  const auto m = testing::RandomMap(8, 8, rng);
  const auto keep = testing::BruteTopK(Values(m), 15);
  const auto t = ThresholdSingle(m, 15);
  std::vector<double> expected(64, 0.0);
  for (const auto i : keep) expected[i] = m[i];
  EXPECT_EQ(Values(t.map), expected);
}

TEST(RandomCam, DeterministicAndInRange) {
  const auto a = RandomCam(224, 224, 99);
  const auto b = RandomCam(224, 224, 99);
  EXPECT_EQ(Values(a), Values(b));
  for (const double v : a.values()) {
    EXPECT_GE(v, -1.0);
    EXPECT_LE(v, 1.0);
  }
  EXPECT_NE(Values(a), Values(RandomCam(224, 224, 100)));
}

TEST(RandomCam, MeanNearZero) {
  double total = 0.0;
  std::size_t count = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto map = RandomCam(224, 224, seed);
    for (const double v : map.values()) {
      total += v;
      ++count;
    }
  }
  EXPECT_NEAR(total / count, 0.0, 0.02);
}

}  // namespace
}  // namespace camforge
