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

// Ensemble fusion of component activation maps: plain average, score-weighted
// average and consensus top-k thresholding of the summed maps.

#ifndef CAMFORGE_FUSION_HPP_
#define CAMFORGE_FUSION_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "camforge/core.hpp"

namespace camforge {

enum class WeightTransform {
  kRaw,          // scores as weights, negatives clipped to zero
  kMinMax,       // (s - min) / (max - min)
  kSoftmax,      // power-of-ten amplification to magnitude >= 10, then softmax
  kExponential,  // exp(s) / sum exp(s)
};

inline std::string_view WeightTransformName(WeightTransform t) {
  switch (t) {
    case WeightTransform::kRaw: return "raw";
    case WeightTransform::kMinMax: return "minmax";
    case WeightTransform::kSoftmax: return "softmax";
    case WeightTransform::kExponential: return "exponential";
  }
  return "raw";
}

inline std::optional<WeightTransform> ParseWeightTransform(std::string_view s) {
  if (s == "raw") return WeightTransform::kRaw;
  if (s == "minmax" || s == "min-max") return WeightTransform::kMinMax;
  if (s == "softmax") return WeightTransform::kSoftmax;
  if (s == "exponential" || s == "exp") return WeightTransform::kExponential;
  return std::nullopt;
}

struct FusionWeights {
  std::vector<double> weights;
  WeightTransform transform = WeightTransform::kRaw;
  // Set when the transform produced no usable weights (all zero) and uniform
  // weights were substituted.
  bool degenerate = false;
};

namespace fusion_internal {

inline std::vector<double> Softmax(std::span<const double> x) {
  const double peak = *std::max_element(x.begin(), x.end());
  std::vector<double> out(x.size());
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = std::exp(x[i] - peak);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

inline std::vector<ActivationMap> NormalizeAll(
    std::span<const ActivationMap> maps) {
  CheckSameShape(maps);
  std::vector<ActivationMap> out;
  out.reserve(maps.size());
  for (const auto& m : maps) out.push_back(Normalize(m));
  return out;
}

}  // namespace fusion_internal

// Scale factor applied to scores before the softmax transform: the smallest
// power of ten lifting max|s| to at least 10. Returns 1 when no scaling is
// needed or the scores are all zero.
inline double SoftmaxAmplification(std::span<const double> scores) {
  double peak = 0.0;
  for (const double s : scores) peak = std::max(peak, std::abs(s));
  if (peak == 0.0 || peak >= 10.0) return 1.0;
  return std::pow(10.0, std::ceil(std::log10(10.0 / peak)));
}

inline FusionWeights TransformWeights(std::span<const double> scores,
                                      WeightTransform transform) {
  if (scores.empty()) {
    throw Error(ErrorCode::kEmptyInput, "no scores to transform");
  }
  for (const double s : scores) {
    if (!std::isfinite(s)) {
      throw Error(ErrorCode::kNonFiniteInput, "score is NaN/Inf");
    }
  }
  FusionWeights result;
  result.transform = transform;
  auto& w = result.weights;
  switch (transform) {
    case WeightTransform::kRaw:
      for (const double s : scores) w.push_back(std::max(s, 0.0));
      break;
    case WeightTransform::kMinMax: {
      const auto [lo, hi] = std::minmax_element(scores.begin(), scores.end());
      if (*hi == *lo) {
        w.assign(scores.size(), 1.0);
      } else {
        for (const double s : scores) w.push_back((s - *lo) / (*hi - *lo));
      }
      break;
    }
    case WeightTransform::kSoftmax: {
      const double scale = SoftmaxAmplification(scores);
      std::vector<double> amplified;
      for (const double s : scores) amplified.push_back(s * scale);
      w = fusion_internal::Softmax(amplified);
      break;
    }
    case WeightTransform::kExponential:
      w = fusion_internal::Softmax(scores);
      break;
  }
  double total = 0.0;
  for (const double v : w) total += v;
  if (!(total > 0.0)) {
    w.assign(scores.size(), 1.0);
    result.degenerate = true;
  }
  return result;
}

// Elementwise mean of the normalized maps, re-normalized.
inline ActivationMap FuseAverage(std::span<const ActivationMap> maps) {
  const auto normalized = fusion_internal::NormalizeAll(maps);
  std::vector<double> sum(normalized.front().size(), 0.0);
  for (const auto& m : normalized) {
    const auto v = m.values();
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += v[i];
  }
  const double n = static_cast<double>(normalized.size());
  for (double& v : sum) v /= n;
  return Normalize(ActivationMap(normalized.front().height(),
                                 normalized.front().width(), std::move(sum),
                                 "MetaCAM-average"));
}

struct WeightedFusion {
  ActivationMap map;
  FusionWeights weights;
};

inline WeightedFusion FuseWeighted(std::span<const ActivationMap> maps,
                                   std::span<const double> road_scores,
                                   WeightTransform transform) {
  if (maps.empty()) throw Error(ErrorCode::kEmptyInput, "no maps to fuse");
  if (maps.size() != road_scores.size()) {
    throw Error(ErrorCode::kInvalidArgument,
                std::to_string(maps.size()) + " maps but " +
                    std::to_string(road_scores.size()) + " scores");
  }
  const auto normalized = fusion_internal::NormalizeAll(maps);
  FusionWeights weights = TransformWeights(road_scores, transform);
  double total = 0.0;
  for (const double w : weights.weights) total += w;
  std::vector<double> acc(normalized.front().size(), 0.0);
  for (std::size_t n = 0; n < normalized.size(); ++n) {
    const double w = weights.weights[n];
    const auto v = normalized[n].values();
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += w * v[i];
  }
  for (double& v : acc) v /= total;
  ActivationMap fused(normalized.front().height(), normalized.front().width(),
                      std::move(acc), "MetaCAM-weighted");
  return {Normalize(fused), std::move(weights)};
}

// A thresholded map: pixels in the retained set keep their value from
// `base`, every other pixel is exactly zero.
struct ConsensusMap {
  ActivationMap map;
  ActivationMap base;
  double k_percent = 100.0;
  double threshold_value = 0.0;  // smallest retained base value
  std::vector<std::uint8_t> retained;

  std::size_t retained_count() const {
    return static_cast<std::size_t>(
        std::count(retained.begin(), retained.end(), std::uint8_t{1}));
  }
};

// Keeps the top k% of `base` (ties by ascending row-major index), zeroes the
// rest. `base` is used as given.
inline ConsensusMap ApplyTopK(const ActivationMap& base, double k_percent,
                              std::string label) {
  const std::size_t count = RetainedCount(k_percent, base.size());
  const auto keep = TopIndices(base.values(), count);
  ConsensusMap out{base, base, k_percent, 0.0,
                   std::vector<std::uint8_t>(base.size(), 0)};
  std::vector<double> values(base.size(), 0.0);
  double threshold = base[keep.front()];
  for (const std::size_t i : keep) {
    out.retained[i] = 1;
    values[i] = base[i];
    threshold = std::min(threshold, base[i]);
  }
  out.map = ActivationMap(base.height(), base.width(), std::move(values),
                          std::move(label));
  out.threshold_value = threshold;
  return out;
}

// Sums the normalized maps and keeps the top k% of the sum.
inline ConsensusMap FuseConsensus(std::span<const ActivationMap> maps,
                                  double k_percent) {
  CheckPercent(k_percent);
  const auto normalized = fusion_internal::NormalizeAll(maps);
  std::vector<double> sum(normalized.front().size(), 0.0);
  for (const auto& m : normalized) {
    const auto v = m.values();
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += v[i];
  }
  const ActivationMap base(normalized.front().height(),
                           normalized.front().width(), std::move(sum),
                           "MetaCAM-sum");
  return ApplyTopK(base, k_percent, "MetaCAM");
}

// Thresholds one map as given (no re-normalization).
inline ConsensusMap ThresholdSingle(const ActivationMap& map,
                                    double k_percent) {
  if (!AllFinite(map.values())) {
    throw Error(ErrorCode::kNonFiniteInput,
                "map '" + map.label() + "' contains NaN/Inf");
  }
  return ApplyTopK(map, k_percent, map.label());
}

// Control map with values drawn uniformly from [-1, 1]. Normalize before use,
// like any other component.
inline ActivationMap RandomCam(std::size_t height, std::size_t width,
                               std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uniform(-1.0, 1.0);
  std::vector<double> values(height * width);
  for (double& v : values) v = uniform(rng);
  return ActivationMap(height, width, std::move(values), "RandomCAM");
}

}  // namespace camforge

#endif  // CAMFORGE_FUSION_HPP_
