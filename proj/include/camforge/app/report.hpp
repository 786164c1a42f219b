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

// Machine-readable outputs: JSON reports and CSV tables.
//
// Everything here is a pure function of its inputs (no timestamps, no
// worker counts, no absolute paths), so identical campaigns give
// byte-identical files.

#ifndef CAMFORGE_APP_REPORT_HPP_
#define CAMFORGE_APP_REPORT_HPP_

#include <filesystem>
#include <string>
#include <string_view>

#include "camforge/adaptive.hpp"
#include "camforge/app/bundle.hpp"
#include "camforge/cre.hpp"
#include "camforge/ensemble.hpp"
#include "camforge/road.hpp"

namespace camforge::app {

inline constexpr int kReportSchemaVersion = 1;

Json RoadScoreJson(const RoadScore& score);
Json SweepJson(const ThresholdSweep& sweep);
Json CreJson(const CreReport& report);
Json CampaignReportJson(const CampaignManifest& manifest,
                        const CampaignResult& result, const CreReport& cre);

// One row per executed experiment.
std::string ExperimentsCsv(const CampaignResult& result);
// One row per k: n, mean, sd, CI and best-k count.
std::string KStatsCsv(const CampaignResult& result);
// Signed bars: group, cumulative residual, inclusions.
std::string CreCsv(const CreReport& report);

// Reads a CRE report from cre.json or from a campaign report's "cre" member.
CreReport CreFromJson(const Json& value);

// Serialized JSON with a trailing newline.
std::string Dump(const Json& value);

// Writes through a temporary file and a rename, so readers never see a
// partially written file.
void WriteFileAtomic(const std::filesystem::path& path, std::string_view bytes);

}  // namespace camforge::app

#endif  // CAMFORGE_APP_REPORT_HPP_
