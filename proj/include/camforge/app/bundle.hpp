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

// Experiment bundles and campaign manifests.
//
// A bundle is a directory holding manifest.json next to its files:
//
//   {
//     "image": "image.imgt",
//     "class_id": 281,
//     "oracle": "model.onnx",
//     "maps": {"GradCAM": "maps/GradCAM.camm", ...},
//     "invalid": ["ScoreCAM"],
//     "model": "densenet161",
//     "preprocessing": {"mean": [...], "std": [...], ...}
//   }
//
// "oracle" may also be an object: {"kind": "onnx", "path": ...},
// {"kind": "region", "rows": [r0, r1], "cols": [c0, c1], "gain": g,
// "bias": b} or {"kind": "constant", "probabilities": [...]}.
//
// A campaign manifest names the image, class, oracle and a group table of
// map files (or, with "bundle", labels of that bundle's maps):
//
//   {
//     "bundle": "bundle_dir",
//     "groups": {"A": ["HiResCAM", "GradCAMElementwise"], "B": [...]},
//     "k_grid": {"first": 15, "last": 45, "step": 1},
//     "percentiles": [20, 40, 60, 80],
//     "sigma": 0.05,
//     "seed": 7,
//     "workers": 4,
//     "cre_source": "best_score"
//   }
//
// "@RandomCAM" as a group member stands for a RandomCAM drawn from the seed.
// Relative paths resolve against the manifest's directory.

#ifndef CAMFORGE_APP_BUNDLE_HPP_
#define CAMFORGE_APP_BUNDLE_HPP_

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "camforge/core.hpp"
#include "camforge/cre.hpp"
#include "camforge/ensemble.hpp"
#include "camforge/oracle.hpp"
#include "json.hpp"

namespace camforge::app {

// Insertion-ordered, so group tables keep the order they were written in.
using Json = nlohmann::ordered_json;
using OrderedJson = Json;

inline constexpr std::string_view kRandomCamToken = "@RandomCAM";

struct LoadedOracle {
  std::shared_ptr<const ModelOracle> oracle;
  OrderedJson description;  // for reports; paths as written
};

// `spec` is the manifest's "oracle" value. Region oracles need the image size.
LoadedOracle LoadOracle(const Json& spec, const std::filesystem::path& base,
                        std::size_t height, std::size_t width);

struct Bundle {
  std::filesystem::path manifest_path;
  std::string image_source;
  ImageTensor image;
  std::size_t class_id = 0;
  std::vector<std::string> labels;  // manifest order
  std::map<std::string, ActivationMap> maps;
  std::map<std::string, std::string> map_sources;
  std::vector<std::string> invalid;  // marked invalid by the exporter
  std::optional<Json> oracle_spec;
  std::string model;
  Json preprocessing;

  std::filesystem::path root() const { return manifest_path.parent_path(); }
};

// Accepts the bundle directory or its manifest file.
Bundle LoadBundle(const std::filesystem::path& path);

// Throws naming the missing "oracle" field when the bundle has none.
LoadedOracle BundleOracle(const Bundle& bundle);

// Maps usable for fusion: manifest order, exporter-invalid ones dropped.
std::vector<ActivationMap> BundleMaps(const Bundle& bundle,
                                      const std::vector<std::string>& labels);

struct CampaignManifest {
  std::filesystem::path path;
  CampaignSpec spec;
  LoadedOracle oracle;
  std::string image_source;
  std::map<std::string, std::string> map_sources;  // label -> as written
  CreScoreSource cre_source = CreScoreSource::kBestScore;
};

// `groups_override` replaces the manifest's group table; its paths resolve
// against its own directory.
CampaignManifest LoadCampaignManifest(
    const std::filesystem::path& path,
    const std::optional<std::filesystem::path>& groups_override = {});

// "15:45", "15:45:5", "10,20,30" or a single number.
std::vector<double> ParseKGrid(const std::string& text);
std::vector<double> KGridFromJson(const Json& value);

// CAMFORGE_WORKERS when set, else `fallback`.
std::size_t WorkersFromEnvironment(std::size_t fallback);

Json ReadJsonFile(const std::filesystem::path& path);

}  // namespace camforge::app

#endif  // CAMFORGE_APP_BUNDLE_HPP_
