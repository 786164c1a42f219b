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

// Remove-and-debias (ROAD) faithfulness scoring.
//
// For each percentile p the p% most relevant pixels (MRP) and, separately, the
// p% least relevant pixels (LRP) of a map are imputed away and the model is
// re-queried. The combined score is
//
//     mean over p of (C_LRP(p) - C_MRP(p)) / 2,
//
// positive when removing what the map calls important hurts the model more
// than removing what it calls unimportant.

#ifndef CAMFORGE_ROAD_HPP_
#define CAMFORGE_ROAD_HPP_

#include <algorithm>
#include <bit>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <vector>

#include "camforge/core.hpp"
#include "camforge/imputation.hpp"
#include "camforge/oracle.hpp"
#include "camforge/parallel.hpp"
#include "camforge/random.hpp"

namespace camforge {

enum class PerturbationMode { kMostRelevant, kLeastRelevant };

struct RoadOptions {
  std::vector<double> percentiles{20.0, 40.0, 60.0, 80.0};
  ImputationConfig imputation;
  std::size_t workers = 1;  // concurrent oracle queries per score
};

struct RoadScore {
  std::vector<double> percentiles;
  std::vector<double> lrp_confidence;
  std::vector<double> mrp_confidence;
  double combined = 0.0;
};

// Noise stream used at one percentile. Shared by the MRP and LRP runs so both
// see the same noise field.
inline std::uint64_t PercentileSeed(std::uint64_t seed, double percentile) {
  return DeriveSeed(seed, std::bit_cast<std::uint64_t>(percentile));
}

inline double ClassConfidence(const ModelOracle& oracle,
                              const ImageTensor& image, std::size_t class_id) {
  if (class_id >= oracle.class_count()) {
    throw Error(ErrorCode::kClassOutOfRange,
                "class " + std::to_string(class_id) + " but oracle has " +
                    std::to_string(oracle.class_count()) + " classes");
  }
  const auto probabilities = oracle.Predict(image);
  if (probabilities.size() != oracle.class_count()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "oracle returned " + std::to_string(probabilities.size()) +
                    " probabilities");
  }
  return probabilities[class_id];
}

// Pixels perturbed at `percentile`: a prefix of `ranking` (most to least
// relevant, see RankPixels) for MRP, the matching suffix for LRP.
inline std::span<const std::size_t> RelevanceMask(
    std::span<const std::size_t> ranking, double percentile,
    PerturbationMode mode) {
  if (!(percentile > 0.0 && percentile < 100.0)) {
    throw Error(ErrorCode::kInvalidArgument,
                "percentile must lie in (0, 100), got " +
                    std::to_string(percentile));
  }
  const std::size_t count = RetainedCount(percentile, ranking.size());
  return mode == PerturbationMode::kMostRelevant ? ranking.first(count)
                                                 : ranking.last(count);
}

inline double PerturbAndScore(const ImageTensor& image,
                              std::span<const std::size_t> ranking,
                              std::size_t class_id, const ModelOracle& oracle,
                              double percentile, PerturbationMode mode,
                              const ImputationConfig& config,
                              std::uint64_t seed) {
  if (ranking.size() != image.pixel_count()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "ranking covers " + std::to_string(ranking.size()) +
                    " pixels, image has " +
                    std::to_string(image.pixel_count()));
  }
  if (class_id >= oracle.class_count()) {
    throw Error(ErrorCode::kClassOutOfRange,
                "class " + std::to_string(class_id) + " but oracle has " +
                    std::to_string(oracle.class_count()) + " classes");
  }
  const auto masked = RelevanceMask(ranking, percentile, mode);
  const ImageTensor perturbed = Impute(image, masked, config, seed);
  return ClassConfidence(oracle, perturbed, class_id);
}

// Memo of oracle confidences keyed by (noise seed, perturbed pixel set).
// Valid only for one image, class, oracle and imputation config.
class ConfidenceCache {
 public:
  std::optional<double> Find(std::uint64_t seed,
                             std::span<const std::size_t> masked,
                             std::size_t pixels) const {
    const auto key = Key(seed, masked, pixels);
    std::lock_guard lock(mutex_);
    const auto it = entries_.find(key);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
  }

  void Store(std::uint64_t seed, std::span<const std::size_t> masked,
             std::size_t pixels, double confidence) {
    auto key = Key(seed, masked, pixels);
    std::lock_guard lock(mutex_);
    entries_.emplace(std::move(key), confidence);
  }

  std::size_t size() const {
    std::lock_guard lock(mutex_);
    return entries_.size();
  }

 private:
  static std::vector<std::uint64_t> Key(std::uint64_t seed,
                                        std::span<const std::size_t> masked,
                                        std::size_t pixels) {
    std::vector<std::uint64_t> key(1 + (pixels + 63) / 64, 0);
    key[0] = seed;
    for (const std::size_t p : masked) key[1 + p / 64] |= 1ULL << (p % 64);
    return key;
  }

  mutable std::mutex mutex_;
  std::map<std::vector<std::uint64_t>, double> entries_;
};

inline double PerturbAndScore(const ImageTensor& image,
                              std::span<const std::size_t> ranking,
                              std::size_t class_id, const ModelOracle& oracle,
                              double percentile, PerturbationMode mode,
                              const ImputationConfig& config,
                              std::uint64_t seed, ConfidenceCache& cache) {
  if (ranking.size() != image.pixel_count()) {
    return PerturbAndScore(image, ranking, class_id, oracle, percentile, mode,
                           config, seed);
  }
  const auto masked = RelevanceMask(ranking, percentile, mode);
  if (const auto hit = cache.Find(seed, masked, ranking.size())) return *hit;
  const double c = PerturbAndScore(image, ranking, class_id, oracle,
                                   percentile, mode, config, seed);
  cache.Store(seed, masked, ranking.size(), c);
  return c;
}

inline void CheckMapMatchesImage(const ActivationMap& map,
                                 const ImageTensor& image) {
  if (map.height() != image.height() || map.width() != image.width()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "map '" + map.label() + "' is " + std::to_string(map.height()) +
                    "x" + std::to_string(map.width()) + ", image is " +
                    std::to_string(image.height()) + "x" +
                    std::to_string(image.width()));
  }
}

inline double PerturbAndScore(const ImageTensor& image,
                              const ActivationMap& map, std::size_t class_id,
                              const ModelOracle& oracle, double percentile,
                              PerturbationMode mode,
                              const ImputationConfig& config,
                              std::uint64_t seed) {
  CheckMapMatchesImage(map, image);
  const auto ranking = RankPixels(map.values());
  return PerturbAndScore(image, ranking, class_id, oracle, percentile, mode,
                         config, seed);
}

inline RoadScore ComputeRoadScore(const ImageTensor& image,
                                  std::span<const std::size_t> ranking,
                                  std::size_t class_id,
                                  const ModelOracle& oracle,
                                  const RoadOptions& options,
                                  std::uint64_t seed,
                                  ConfidenceCache* cache = nullptr) {
  const auto& percentiles = options.percentiles;
  if (percentiles.empty()) {
    throw Error(ErrorCode::kEmptyInput, "no ROAD percentiles given");
  }
  RoadScore score;
  score.percentiles = percentiles;
  score.lrp_confidence.assign(percentiles.size(), 0.0);
  score.mrp_confidence.assign(percentiles.size(), 0.0);
  // Job 2i is MRP at percentile i, job 2i+1 is LRP.
  ParallelFor(2 * percentiles.size(), options.workers, [&](std::size_t job) {
    const std::size_t i = job / 2;
    const bool most = job % 2 == 0;
    const auto mode = most ? PerturbationMode::kMostRelevant
                           : PerturbationMode::kLeastRelevant;
    const auto noise_seed = PercentileSeed(seed, percentiles[i]);
    const double c =
        cache ? PerturbAndScore(image, ranking, class_id, oracle,
                                percentiles[i], mode, options.imputation,
                                noise_seed, *cache)
              : PerturbAndScore(image, ranking, class_id, oracle,
                                percentiles[i], mode, options.imputation,
                                noise_seed);
    (most ? score.mrp_confidence : score.lrp_confidence)[i] = c;
  });
  double total = 0.0;
  for (std::size_t i = 0; i < percentiles.size(); ++i) {
    total += (score.lrp_confidence[i] - score.mrp_confidence[i]) / 2.0;
  }
  score.combined = total / static_cast<double>(percentiles.size());
  return score;
}

inline RoadScore ComputeRoadScore(const ImageTensor& image,
                                  const ActivationMap& map,
                                  std::size_t class_id,
                                  const ModelOracle& oracle,
                                  const RoadOptions& options,
                                  std::uint64_t seed,
                                  ConfidenceCache* cache = nullptr) {
  CheckMapMatchesImage(map, image);
  const auto ranking = RankPixels(map.values());
  return ComputeRoadScore(image, ranking, class_id, oracle, options, seed,
                          cache);
}

}  // namespace camforge

#endif  // CAMFORGE_ROAD_HPP_
