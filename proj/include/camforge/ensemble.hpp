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

// Inclusion/exclusion campaigns over CAM groups.
//
// With n groups there are 2^n subsets. Each non-empty subset is one
// experiment: the consensus MetaCAM of all maps in the included groups,
// adaptively thresholded. The empty subset is kept as a placeholder so the
// lattice has its formal 2^n entries, but it is never executed.

#ifndef CAMFORGE_ENSEMBLE_HPP_
#define CAMFORGE_ENSEMBLE_HPP_

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "camforge/adaptive.hpp"
#include "camforge/core.hpp"
#include "camforge/fusion.hpp"
#include "camforge/parallel.hpp"
#include "camforge/road.hpp"

namespace camforge {

struct CamGroup {
  std::string code;
  std::vector<std::string> members;
};

inline std::vector<CamGroup> DefaultGroups() {
  return {
      {"A", {"HiResCAM", "GradCAMElementwise"}},
      {"B", {"GradCAM", "GradCAM++"}},
      {"C", {"XGradCAM"}},
      {"D", {"AblationCAM", "ScoreCAM"}},
      {"E", {"LayerCAM"}},
      {"F", {"FullGrad"}},
  };
}

inline constexpr std::size_t kMaxGroups = 16;

// Subset of n groups. Group 0 is the most significant bit, so the textual
// form reads left to right in group order ("100000" = group A only).
class CamSetId {
 public:
  CamSetId() = default;
  CamSetId(std::uint32_t bits, std::size_t group_count)
      : bits_(bits), group_count_(group_count) {
    if (group_count_ == 0 || group_count_ > kMaxGroups) {
      throw Error(ErrorCode::kTooManyGroups,
                  "group count must be in [1, 16], got " +
                      std::to_string(group_count_));
    }
    if (bits_ >> group_count_) {
      throw Error(ErrorCode::kInvalidArgument, "bitmask exceeds group count");
    }
  }

  std::uint32_t bits() const { return bits_; }
  std::size_t group_count() const { return group_count_; }
  bool empty() const { return bits_ == 0; }

  bool Contains(std::size_t group) const {
    return group < group_count_ &&
           ((bits_ >> (group_count_ - 1 - group)) & 1u) != 0;
  }

  std::string ToString() const {
    std::string s(group_count_, '0');
    for (std::size_t g = 0; g < group_count_; ++g) {
      if (Contains(g)) s[g] = '1';
    }
    return s;
  }

  static CamSetId FromString(const std::string& s) {
    std::uint32_t bits = 0;
    for (const char c : s) {
      if (c != '0' && c != '1') {
        throw Error(ErrorCode::kFormat, "bad CAM-set code '" + s + "'");
      }
      bits = (bits << 1) | static_cast<std::uint32_t>(c == '1');
    }
    return CamSetId(bits, s.size());
  }

  auto operator<=>(const CamSetId&) const = default;

 private:
  std::uint32_t bits_ = 0;
  std::size_t group_count_ = 1;
};

inline void CheckGroupCount(std::size_t n) {
  if (n == 0) throw Error(ErrorCode::kEmptyInput, "no CAM groups");
  if (n > kMaxGroups) {
    throw Error(ErrorCode::kTooManyGroups,
                std::to_string(n) + " groups exceeds the limit of 16");
  }
}

// All non-empty subsets in ascending bitmask order.
inline std::vector<CamSetId> EnumerateCamSets(std::size_t group_count) {
  CheckGroupCount(group_count);
  std::vector<CamSetId> sets;
  const std::uint32_t end = 1u << group_count;
  sets.reserve(end - 1);
  for (std::uint32_t bits = 1; bits < end; ++bits) {
    sets.emplace_back(bits, group_count);
  }
  return sets;
}

inline std::vector<CamSetId> EnumerateCamSets(
    std::span<const CamGroup> groups) {
  return EnumerateCamSets(groups.size());
}

// Maps of the included groups, in group then member order.
inline std::vector<std::string> CamSetMembers(std::span<const CamGroup> groups,
                                              const CamSetId& id) {
  std::vector<std::string> members;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    if (id.Contains(g)) {
      members.insert(members.end(), groups[g].members.begin(),
                     groups[g].members.end());
    }
  }
  return members;
}

inline void CheckGroupsDisjoint(std::span<const CamGroup> groups) {
  std::set<std::string> seen_codes;
  std::set<std::string> seen_members;
  for (const auto& g : groups) {
    if (!seen_codes.insert(g.code).second) {
      throw Error(ErrorCode::kInvalidArgument,
                  "duplicate group code '" + g.code + "'");
    }
    if (g.members.empty()) {
      throw Error(ErrorCode::kInvalidArgument,
                  "group '" + g.code + "' has no members");
    }
    for (const auto& m : g.members) {
      if (!seen_members.insert(m).second) {
        throw Error(ErrorCode::kInvalidArgument,
                    "map '" + m + "' appears in more than one group");
      }
    }
  }
}

struct CampaignSpec {
  std::vector<CamGroup> groups;
  std::map<std::string, ActivationMap> maps;  // by label; invalid maps allowed
  ImageTensor image;
  std::size_t class_id = 0;
  std::vector<double> k_grid = DefaultKGrid();
  RoadOptions road;
  std::uint64_t seed = 0;  // imputation noise, shared by every experiment
  std::size_t workers = 1;
};

struct ExperimentResult {
  CamSetId id;
  bool executed = false;
  std::vector<std::string> used_maps;
  std::vector<std::string> skipped_maps;  // failed the validity filter
  std::optional<ThresholdSweep> sweep;
  std::string error;  // set when execution failed

  bool ok() const { return executed && sweep.has_value(); }
};

struct IntervalEstimate {
  std::size_t n = 0;
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation (n - 1)
  double ci_low = 0.0;
  double ci_high = 0.0;
};

// Normal-approximation 95% interval for the mean: mean +/- 1.96 sd / sqrt(n).
inline IntervalEstimate MeanWithInterval(std::span<const double> values) {
  IntervalEstimate est;
  est.n = values.size();
  if (values.empty()) return est;
  double sum = 0.0;
  for (const double v : values) sum += v;
  est.mean = sum / static_cast<double>(est.n);
  if (est.n > 1) {
    double ss = 0.0;
    for (const double v : values) ss += (v - est.mean) * (v - est.mean);
    est.sd = std::sqrt(ss / static_cast<double>(est.n - 1));
  }
  const double half = 1.96 * est.sd / std::sqrt(static_cast<double>(est.n));
  est.ci_low = est.mean - half;
  est.ci_high = est.mean + half;
  return est;
}

struct KStatistics {
  double k = 0.0;
  IntervalEstimate score;
  std::size_t best_count = 0;  // experiments whose best_k is this k
};

struct CampaignResult {
  std::vector<CamGroup> groups;
  std::vector<double> k_grid;
  std::vector<ExperimentResult> experiments;  // index == bitmask, 2^n entries
  std::vector<KStatistics> per_k;
  std::optional<CamSetId> best_id;
  double max_score = 0.0;
  std::size_t failures = 0;

  std::size_t executed_count() const {
    std::size_t n = 0;
    for (const auto& e : experiments) n += e.executed ? 1 : 0;
    return n;
  }
};

inline std::vector<KStatistics> SummarizeByK(
    std::span<const double> k_grid,
    std::span<const ExperimentResult> experiments) {
  std::vector<KStatistics> stats(k_grid.size());
  for (std::size_t i = 0; i < k_grid.size(); ++i) {
    std::vector<double> scores;
    for (const auto& e : experiments) {
      if (!e.ok()) continue;
      scores.push_back(e.sweep->scores[i].combined);
      if (e.sweep->best_index == i) ++stats[i].best_count;
    }
    stats[i].k = k_grid[i];
    stats[i].score = MeanWithInterval(scores);
  }
  return stats;
}

// Finds the maximum best_score over successful experiments (first in bitmask
// order on ties) and fills the per-k statistics.
inline void Aggregate(CampaignResult& result) {
  result.per_k = SummarizeByK(result.k_grid, result.experiments);
  result.best_id.reset();
  result.failures = 0;
  for (const auto& e : result.experiments) {
    if (e.executed && !e.ok()) ++result.failures;
    if (!e.ok()) continue;
    if (!result.best_id || e.sweep->best_score > result.max_score) {
      result.best_id = e.id;
      result.max_score = e.sweep->best_score;
    }
  }
}

// Runs every non-empty subset. Per-experiment failures are recorded in the
// result (and counted in `failures`) rather than aborting the campaign.
inline CampaignResult RunCampaign(const CampaignSpec& spec,
                                  const ModelOracle& oracle) {
  CheckGroupCount(spec.groups.size());
  CheckGroupsDisjoint(spec.groups);
  for (const auto& g : spec.groups) {
    for (const auto& m : g.members) {
      const auto it = spec.maps.find(m);
      if (it == spec.maps.end()) {
        throw Error(ErrorCode::kMissingMap,
                    "group '" + g.code + "' lists map '" + m +
                        "' which is not in the bundle");
      }
      CheckMapMatchesImage(it->second, spec.image);
    }
  }
  if (spec.class_id >= oracle.class_count()) {
    throw Error(ErrorCode::kClassOutOfRange,
                "class " + std::to_string(spec.class_id) + " but oracle has " +
                    std::to_string(oracle.class_count()) + " classes");
  }
  for (const double k : spec.k_grid) CheckPercent(k);
  if (spec.k_grid.empty()) throw Error(ErrorCode::kEmptyInput, "empty k grid");

  const std::size_t n = spec.groups.size();
  CampaignResult result;
  result.groups = spec.groups;
  result.k_grid = spec.k_grid;
  result.experiments.resize(std::size_t{1} << n);
  result.experiments[0].id = CamSetId(0, n);

  const auto sets = EnumerateCamSets(n);
  ParallelFor(sets.size(), spec.workers, [&](std::size_t i) {
    ExperimentResult& out = result.experiments[sets[i].bits()];
    out.id = sets[i];
    out.executed = true;
    try {
      std::vector<ActivationMap> maps;
      for (const auto& label : CamSetMembers(spec.groups, sets[i])) {
        const ActivationMap& m = spec.maps.at(label);
        if (IsValid(m)) {
          maps.push_back(m);
          out.used_maps.push_back(label);
        } else {
          out.skipped_maps.push_back(label);
        }
      }
      if (maps.empty()) {
        throw Error(ErrorCode::kEmptyInput,
                    "every map in this CAM-set failed the validity filter");
      }
      out.sweep = AdaptiveThreshold(maps, spec.image, spec.class_id, oracle,
                                    spec.k_grid, spec.road, spec.seed)
                      .sweep;
    } catch (const std::exception& e) {
      out.error = e.what();
    }
  });
  Aggregate(result);
  return result;
}

// Rebuilds the consensus map of one experiment at its best threshold.
inline ConsensusMap BestConsensusMap(const CampaignSpec& spec,
                                     const ExperimentResult& experiment) {
  if (!experiment.ok()) {
    throw Error(ErrorCode::kInvalidArgument,
                "experiment " + experiment.id.ToString() + " has no sweep");
  }
  std::vector<ActivationMap> maps;
  for (const auto& label : experiment.used_maps) maps.push_back(spec.maps.at(label));
  return FuseConsensus(maps, experiment.sweep->best_k);
}

}  // namespace camforge

#endif  // CAMFORGE_ENSEMBLE_HPP_
