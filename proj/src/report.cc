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

#include "camforge/app/report.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace camforge::app {
namespace {

// Shortest text that reads back to the same double.
std::string Num(double v) {
  char buf[32];
  for (int precision = 15; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof buf, "%.*g", precision, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

std::string Quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (const char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string Join(const std::vector<std::string>& items, char sep) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += sep;
    out += items[i];
  }
  return out;
}

std::string IncludedCodes(const CampaignResult& result, const CamSetId& id) {
  std::vector<std::string> codes;
  for (std::size_t g = 0; g < result.groups.size(); ++g) {
    if (id.Contains(g)) codes.push_back(result.groups[g].code);
  }
  return Join(codes, '+');
}

Json ImputationJson(const ImputationConfig& c) {
  return {{"noise_sigma", c.noise_sigma},
          {"tolerance", c.tolerance},
          {"max_iterations", c.max_iterations},
          {"neighborhood", "4-connected"}};
}

}  // namespace

std::string Dump(const Json& value) { return value.dump(2) + "\n"; }

Json RoadScoreJson(const RoadScore& score) {
  return {{"percentiles", score.percentiles},
          {"lrp", score.lrp_confidence},
          {"mrp", score.mrp_confidence},
          {"combined", score.combined}};
}

Json SweepJson(const ThresholdSweep& sweep) {
  Json scores = Json::array();
  for (std::size_t i = 0; i < sweep.k_values.size(); ++i) {
    Json entry = {{"k", sweep.k_values[i]}};
    entry.update(RoadScoreJson(sweep.scores[i]));
    entry.erase("percentiles");
    scores.push_back(entry);
  }
  return {{"k_values", sweep.k_values},
          {"best_k", sweep.best_k},
          {"best_score", sweep.best_score},
          {"scores", scores}};
}

Json CreJson(const CreReport& report) {
  Json residual = Json::object();
  Json inclusion = Json::object();
  for (std::size_t g = 0; g < report.group_codes.size(); ++g) {
    residual[report.group_codes[g]] = report.residual[g];
    inclusion[report.group_codes[g]] = report.inclusion_count[g];
  }
  return {{"group_codes", report.group_codes},
          {"median", report.median ? Json(*report.median) : Json(nullptr)},
          {"residual", residual},
          {"inclusion_count", inclusion},
          {"experiment_count", report.experiment_count},
          {"campaign_count", report.campaign_count}};
}

CreReport CreFromJson(const Json& value) {
  const Json& v = value.contains("cre") ? value["cre"] : value;
  try {
    CreReport r;
    r.group_codes = v.at("group_codes").get<std::vector<std::string>>();
    if (!v.at("median").is_null()) r.median = v["median"].get<double>();
    for (const auto& code : r.group_codes) {
      r.residual.push_back(v.at("residual").at(code).get<double>());
      r.inclusion_count.push_back(v.at("inclusion_count").at(code).get<std::size_t>());
    }
    r.experiment_count = v.at("experiment_count").get<std::size_t>();
    r.campaign_count = v.at("campaign_count").get<std::size_t>();
    return r;
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::kFormat, std::string("not a CRE report: ") + e.what());
  }
}

Json CampaignReportJson(const CampaignManifest& manifest,
                        const CampaignResult& result, const CreReport& cre) {
  const auto& spec = manifest.spec;
  Json groups = Json::array();
  for (const auto& g : result.groups) {
    Json sources = Json::array();
    for (const auto& m : g.members) sources.push_back(manifest.map_sources.at(m));
    groups.push_back({{"code", g.code}, {"members", g.members}, {"sources", sources}});
  }
  Json experiments = Json::array();
  for (const auto& e : result.experiments) {
    Json row = {{"id", e.id.ToString()},
                {"groups", IncludedCodes(result, e.id)},
                {"executed", e.executed}};
    if (e.executed) {
      row["used_maps"] = e.used_maps;
      row["skipped_maps"] = e.skipped_maps;
      if (e.ok()) {
        row["best_k"] = e.sweep->best_k;
        row["best_score"] = e.sweep->best_score;
        Json scores = Json::array();
        for (const auto& s : e.sweep->scores) scores.push_back(s.combined);
        row["scores"] = scores;
        row["error"] = nullptr;
      } else {
        row["error"] = e.error;
      }
    }
    experiments.push_back(row);
  }
  Json per_k = Json::array();
  for (const auto& s : result.per_k) {
    per_k.push_back({{"k", s.k},
                     {"n", s.score.n},
                     {"mean", s.score.mean},
                     {"sd", s.score.sd},
                     {"ci_low", s.score.ci_low},
                     {"ci_high", s.score.ci_high},
                     {"best_count", s.best_count}});
  }
  Json inclusion = Json::object();
  for (std::size_t g = 0; g < result.groups.size(); ++g) {
    std::size_t count = 0;
    for (const auto& e : result.experiments) count += e.id.Contains(g) ? 1 : 0;
    inclusion[result.groups[g].code] = count;
  }
  Json best = nullptr;
  if (result.best_id) {
    const auto& e = result.experiments[result.best_id->bits()];
    best = {{"id", result.best_id->ToString()},
            {"groups", IncludedCodes(result, *result.best_id)},
            {"best_k", e.sweep->best_k},
            {"score", result.max_score},
            {"maps", e.used_maps}};
  }
  return {
      {"schema_version", kReportSchemaVersion},
      {"image",
       {{"source", manifest.image_source},
        {"channels", spec.image.channels()},
        {"height", spec.image.height()},
        {"width", spec.image.width()}}},
      {"class_id", spec.class_id},
      {"oracle", manifest.oracle.description},
      {"config",
       {{"k_grid", spec.k_grid},
        {"percentiles", spec.road.percentiles},
        {"imputation", ImputationJson(spec.road.imputation)},
        {"seed", spec.seed},
        {"cre_source", manifest.cre_source == CreScoreSource::kBestScore
                           ? "best_score"
                           : "sweep_mean"},
        {"interval", "normal, mean +/- 1.96 sd / sqrt(n)"}}},
      {"groups", groups},
      {"experiment_count", result.experiments.size()},
      {"executed_count", result.executed_count()},
      {"failures", result.failures},
      {"group_inclusion", inclusion},
      {"best", best},
      {"per_k", per_k},
      {"experiments", experiments},
      {"cre", CreJson(cre)},
  };
}

std::string ExperimentsCsv(const CampaignResult& result) {
  std::ostringstream out;
  out << "id,groups,maps,status,best_k,best_score";
  for (const double k : result.k_grid) out << ",k" << Num(k);
  out << "\n";
  for (const auto& e : result.experiments) {
    if (!e.executed) continue;
    out << e.id.ToString() << "," << Quote(IncludedCodes(result, e.id)) << ","
        << Quote(Join(e.used_maps, ';')) << ",";
    if (e.ok()) {
      out << "ok," << Num(e.sweep->best_k) << "," << Num(e.sweep->best_score);
      for (const auto& s : e.sweep->scores) out << "," << Num(s.combined);
    } else {
      out << "failed,,";
      for (std::size_t i = 0; i < result.k_grid.size(); ++i) out << ",";
    }
    out << "\n";
  }
  return out.str();
}

std::string KStatsCsv(const CampaignResult& result) {
  std::ostringstream out;
  out << "k,n,mean,sd,ci_low,ci_high,best_count\n";
  for (const auto& s : result.per_k) {
    out << Num(s.k) << "," << s.score.n << "," << Num(s.score.mean) << ","
        << Num(s.score.sd) << "," << Num(s.score.ci_low) << ","
        << Num(s.score.ci_high) << "," << s.best_count << "\n";
  }
  return out.str();
}

std::string CreCsv(const CreReport& report) {
  std::ostringstream out;
  out << "group,cumulative_residual,inclusions\n";
  for (std::size_t g = 0; g < report.group_codes.size(); ++g) {
    out << Quote(report.group_codes[g]) << "," << Num(report.residual[g]) << ","
        << report.inclusion_count[g] << "\n";
  }
  return out.str();
}

void WriteFileAtomic(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".partial";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIo, "cannot write '" + tmp.string() + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.close();
    if (!out) throw Error(ErrorCode::kIo, "short write to '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw Error(ErrorCode::kIo, "cannot move output into '" + path.string() + "'");
  }
}

}  // namespace camforge::app
