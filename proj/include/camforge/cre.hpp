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

// Cumulative residual effect (CRE) of CAM groups.
//
// For a campaign with median score M, CRE(g) is the sum of (score_e - M) over
// every experiment e that includes group g. Because it is a plain sum of
// residuals, reports from different campaigns over the same groups add up.

#ifndef CAMFORGE_CRE_HPP_
#define CAMFORGE_CRE_HPP_

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "camforge/core.hpp"
#include "camforge/ensemble.hpp"

namespace camforge {

struct CreReport {
  std::vector<std::string> group_codes;
  std::optional<double> median;  // unset for aggregated reports
  std::vector<double> residual;  // per group
  std::vector<std::size_t> inclusion_count;
  std::size_t experiment_count = 0;
  std::size_t campaign_count = 1;
};

// Median; even counts average the two central values.
inline double Median(std::vector<double> values) {
  if (values.empty()) throw Error(ErrorCode::kEmptyInput, "median of nothing");
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + mid, values.end());
  const double upper = values[mid];
  if (values.size() % 2 == 1) return upper;
  const double lower = *std::max_element(values.begin(), values.begin() + mid);
  return (lower + upper) / 2.0;
}

using ScoredCamSet = std::pair<CamSetId, double>;

// An empty CAM-set, if present, enters the median but no group.
inline CreReport ComputeCre(std::span<const ScoredCamSet> results,
                            std::vector<std::string> group_codes) {
  if (results.empty()) {
    throw Error(ErrorCode::kEmptyInput, "no experiment scores");
  }
  const std::size_t n = group_codes.size();
  std::vector<double> scores;
  for (const auto& [id, score] : results) {
    if (!std::isfinite(score)) {
      throw Error(ErrorCode::kNonFiniteInput,
                  "score of " + id.ToString() + " is NaN/Inf");
    }
    if (id.group_count() != n) {
      throw Error(ErrorCode::kGroupTableMismatch,
                  "CAM-set " + id.ToString() + " does not match " +
                      std::to_string(n) + " groups");
    }
    scores.push_back(score);
  }
  CreReport report;
  report.group_codes = std::move(group_codes);
  report.median = Median(scores);
  report.residual.assign(n, 0.0);
  report.inclusion_count.assign(n, 0);
  report.experiment_count = results.size();
  for (const auto& [id, score] : results) {
    const double r = score - *report.median;
    for (std::size_t g = 0; g < n; ++g) {
      if (id.Contains(g)) {
        report.residual[g] += r;
        ++report.inclusion_count[g];
      }
    }
  }
  return report;
}

enum class CreScoreSource {
  kBestScore,  // best_score of each experiment's sweep
  kSweepMean,  // mean combined score over the sweep
};

inline std::vector<ScoredCamSet> CampaignScores(
    const CampaignResult& campaign,
    CreScoreSource source = CreScoreSource::kBestScore) {
  std::vector<ScoredCamSet> out;
  for (const auto& e : campaign.experiments) {
    if (!e.ok()) continue;
    double score = e.sweep->best_score;
    if (source == CreScoreSource::kSweepMean) {
      double sum = 0.0;
      for (const auto& s : e.sweep->scores) sum += s.combined;
      score = sum / static_cast<double>(e.sweep->scores.size());
    }
    out.emplace_back(e.id, score);
  }
  return out;
}

inline CreReport ComputeCre(const CampaignResult& campaign,
                            CreScoreSource source = CreScoreSource::kBestScore) {
  std::vector<std::string> codes;
  for (const auto& g : campaign.groups) codes.push_back(g.code);
  return ComputeCre(CampaignScores(campaign, source), std::move(codes));
}

// Group-wise sum across campaigns over the same group table.
inline CreReport AggregateCre(std::span<const CreReport> reports) {
  if (reports.empty()) {
    throw Error(ErrorCode::kEmptyInput, "no CRE reports to aggregate");
  }
  if (reports.size() == 1) return reports.front();
  CreReport total;
  total.group_codes = reports.front().group_codes;
  total.residual.assign(total.group_codes.size(), 0.0);
  total.inclusion_count.assign(total.group_codes.size(), 0);
  total.campaign_count = 0;
  for (const auto& r : reports) {
    if (r.group_codes != total.group_codes) {
      throw Error(ErrorCode::kGroupTableMismatch,
                  "CRE reports cover different group tables");
    }
    for (std::size_t g = 0; g < total.group_codes.size(); ++g) {
      total.residual[g] += r.residual[g];
      total.inclusion_count[g] += r.inclusion_count[g];
    }
    total.experiment_count += r.experiment_count;
    total.campaign_count += r.campaign_count;
  }
  return total;
}

}  // namespace camforge

#endif  // CAMFORGE_CRE_HPP_
