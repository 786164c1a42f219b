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

// Adaptive thresholding: exhaustive search over top-k retention levels for
// the one that maximizes the ROAD score.

#ifndef CAMFORGE_ADAPTIVE_HPP_
#define CAMFORGE_ADAPTIVE_HPP_

#include <cstdint>
#include <span>
#include <vector>

#include "camforge/core.hpp"
#include "camforge/fusion.hpp"
#include "camforge/parallel.hpp"
#include "camforge/road.hpp"

namespace camforge {

struct ThresholdSweep {
  std::vector<double> k_values;
  std::vector<RoadScore> scores;
  double best_k = 0.0;
  double best_score = 0.0;
  std::size_t best_index = 0;

  double combined(std::size_t i) const { return scores[i].combined; }
};

// Integer grid first..last inclusive.
inline std::vector<double> IntegerGrid(int first, int last, int step = 1) {
  std::vector<double> grid;
  for (int k = first; k <= last; k += step) grid.push_back(k);
  return grid;
}

inline std::vector<double> DefaultKGrid() { return IntegerGrid(15, 45); }
inline std::vector<double> FullKGrid() { return IntegerGrid(1, 100); }

// Picks the maximum combined score; ties go to the smallest k.
inline void SelectBest(ThresholdSweep& sweep) {
  if (sweep.scores.empty()) {
    throw Error(ErrorCode::kEmptyInput, "empty threshold sweep");
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < sweep.scores.size(); ++i) {
    const double s = sweep.scores[i].combined;
    const double b = sweep.scores[best].combined;
    if (s > b || (s == b && sweep.k_values[i] < sweep.k_values[best])) {
      best = i;
    }
  }
  sweep.best_index = best;
  sweep.best_k = sweep.k_values[best];
  sweep.best_score = sweep.scores[best].combined;
}

struct AdaptiveResult {
  ConsensusMap map;  // at best_k
  ThresholdSweep sweep;
};

namespace adaptive_internal {

template <typename MakeMap>
AdaptiveResult Sweep(std::span<const double> k_grid, const ImageTensor& image,
                     std::size_t class_id, const ModelOracle& oracle,
                     const RoadOptions& options, std::uint64_t seed,
                     std::size_t workers, MakeMap&& make_map) {
  if (k_grid.empty()) {
    throw Error(ErrorCode::kEmptyInput, "empty k grid");
  }
  for (const double k : k_grid) CheckPercent(k);
  ThresholdSweep sweep;
  sweep.k_values.assign(k_grid.begin(), k_grid.end());
  sweep.scores.resize(k_grid.size());
  // Every k shares `seed`, so the per-k scores are a paired comparison.
  ConfidenceCache cache;
  ParallelFor(k_grid.size(), workers, [&](std::size_t i) {
    const ConsensusMap thresholded = make_map(k_grid[i]);
    sweep.scores[i] = ComputeRoadScore(image, thresholded.map, class_id,
                                       oracle, options, seed, &cache);
  });
  SelectBest(sweep);
  return {make_map(sweep.best_k), std::move(sweep)};
}

}  // namespace adaptive_internal

// Consensus MetaCAM at every k of the grid, scored by ROAD.
inline AdaptiveResult AdaptiveThreshold(std::span<const ActivationMap> maps,
                                        const ImageTensor& image,
                                        std::size_t class_id,
                                        const ModelOracle& oracle,
                                        std::span<const double> k_grid,
                                        const RoadOptions& options,
                                        std::uint64_t seed,
                                        std::size_t workers = 1) {
  CheckSameShape(maps);
  CheckMapMatchesImage(maps.front(), image);
  // Normalize once; FuseConsensus is idempotent on normalized input.
  std::vector<ActivationMap> normalized;
  for (const auto& m : maps) normalized.push_back(Normalize(m));
  return adaptive_internal::Sweep(
      k_grid, image, class_id, oracle, options, seed, workers,
      [&](double k) { return FuseConsensus(normalized, k); });
}

// Same search for one component map (thresholded as given).
inline AdaptiveResult AdaptiveThresholdSingle(const ActivationMap& map,
                                              const ImageTensor& image,
                                              std::size_t class_id,
                                              const ModelOracle& oracle,
                                              std::span<const double> k_grid,
                                              const RoadOptions& options,
                                              std::uint64_t seed,
                                              std::size_t workers = 1) {
  CheckMapMatchesImage(map, image);
  return adaptive_internal::Sweep(
      k_grid, image, class_id, oracle, options, seed, workers,
      [&](double k) { return ThresholdSingle(map, k); });
}

}  // namespace camforge

#endif  // CAMFORGE_ADAPTIVE_HPP_
