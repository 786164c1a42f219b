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

#include "camforge/app/demo.hpp"

#include <cmath>
#include <random>

#include "camforge/app/bundle.hpp"
#include "camforge/app/report.hpp"
#include "camforge/ensemble.hpp"
#include "camforge/map_io.hpp"
#include "camforge/random.hpp"

namespace camforge::app {
namespace {

namespace fs = std::filesystem;

constexpr double kMean = 0.5, kStd = 0.25;

struct Rect {
  std::size_t r0, r1, c0, c1;
  bool Contains(std::size_t r, std::size_t c) const {
    return r >= r0 && r < r1 && c >= c0 && c < c1;
  }
  double cr() const { return (r0 + r1) / 2.0; }
  double cc() const { return (c0 + c1) / 2.0; }
};

struct Profile {
  const char* label;
  double target, distractor, blur, noise;
};

// target/distractor: blob weights; blur: blob width relative to the object;
// noise: uniform clutter amplitude.
constexpr Profile kProfiles[] = {
    {"HiResCAM", 1.0, 0.25, 0.6, 0.05},
    {"GradCAMElementwise", 1.0, 0.30, 0.7, 0.08},
    {"GradCAM", 0.8, 0.60, 1.0, 0.10},
    {"GradCAM++", 0.9, 0.50, 0.9, 0.10},
    {"XGradCAM", 0.5, 1.00, 1.0, 0.10},
    {"AblationCAM", 0.9, 0.40, 0.8, 0.15},
    {"ScoreCAM", 0.6, 0.90, 0.8, 0.10},
    {"LayerCAM", 1.0, 0.50, 0.5, 0.20},
    {"FullGrad", 0.7, 0.70, 1.4, 0.35},
    {"EigenCAM", 0.4, 1.00, 1.2, 0.10},
};

}  // namespace

std::vector<std::string> DemoMapLabels() {
  std::vector<std::string> labels;
  for (const auto& p : kProfiles) labels.emplace_back(p.label);
  return labels;
}

void WriteDemoBundle(const fs::path& dir, const DemoOptions& options) {
  const std::size_t n = options.size;
  if (n < 16) throw Error(ErrorCode::kInvalidArgument, "demo image side must be >= 16");
  const Rect target{n * 3 / 16, n * 7 / 16, n / 4, n / 2};
  const Rect distractor{n * 9 / 16, n * 15 / 16, n * 5 / 16, n * 15 / 16};
  fs::create_directories(dir / "maps");

  std::mt19937_64 rng(DeriveSeed(options.seed, "image"));
  std::uniform_real_distribution<double> texture(-0.05, 0.05);
  std::vector<float> pixels(3 * n * n);
  for (std::size_t ch = 0; ch < 3; ++ch) {
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t c = 0; c < n; ++c) {
        double raw = 0.1;
        if (target.Contains(r, c)) raw = ch == 0 ? 0.9 : 0.6;
        if (distractor.Contains(r, c)) raw = ch == 2 ? 0.85 : 0.5;
        raw += texture(rng);
        pixels[(ch * n + r) * n + c] = static_cast<float>((raw - kMean) / kStd);
      }
    }
  }
  WriteImage(dir / "image.imgt", ImageTensor(3, n, n, std::move(pixels)));

  Json maps = Json::object();
  for (const auto& p : kProfiles) {
    std::mt19937_64 map_rng(DeriveSeed(options.seed, p.label));
    std::uniform_real_distribution<double> clutter(0.0, p.noise);
    std::vector<double> v(n * n);
    const double st = p.blur * (target.r1 - target.r0);
    const double sd = p.blur * (distractor.r1 - distractor.r0);
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t c = 0; c < n; ++c) {
        const double dt = std::pow(r - target.cr(), 2) + std::pow(c - target.cc(), 2);
        const double dd =
            std::pow(r - distractor.cr(), 2) + std::pow(c - distractor.cc(), 2);
        v[r * n + c] = p.target * std::exp(-dt / (2 * st * st)) +
                       p.distractor * std::exp(-dd / (2 * sd * sd)) + clutter(map_rng);
      }
    }
    const std::string file = std::string("maps/") + p.label + ".camm";
    WriteMap(dir / file, ActivationMap(n, n, std::move(v), p.label));
    maps[p.label] = file;
  }

  const Json oracle = {{"kind", "region"},
                       {"rows", {target.r0, target.r1}},
                       {"cols", {target.c0, target.c1}},
                       {"gain", 2.0},
                       {"bias", 0.0}};
  const Json manifest = {
      {"image", "image.imgt"},
      {"class_id", 0},
      {"oracle", oracle},
      {"maps", maps},
      {"invalid", Json::array()},
      {"model", "synthetic-region"},
      {"preprocessing", {{"mean", {kMean, kMean, kMean}}, {"std", {kStd, kStd, kStd}}}},
  };
  WriteFileAtomic(dir / "manifest.json", Dump(manifest));

  Json groups = Json::object();
  for (const auto& g : DefaultGroups()) groups[g.code] = g.members;
  WriteFileAtomic(dir / "campaign.json",
                  Dump({{"bundle", "."},
                        {"groups", groups},
                        {"k_grid", options.k_grid},
                        {"percentiles", {20, 40, 60, 80}},
                        {"sigma", 0.05},
                        {"seed", options.seed},
                        {"cre_source", "best_score"}}));
  groups["G"] = {"EigenCAM"};
  groups["H"] = {std::string(kRandomCamToken)};
  WriteFileAtomic(dir / "groups_gh.json", Dump({{"groups", groups}}));
}

}  // namespace camforge::app
