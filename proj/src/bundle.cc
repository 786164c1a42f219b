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

#include "camforge/app/bundle.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "camforge/fusion.hpp"
#include "camforge/map_io.hpp"
#include "camforge/onnx_oracle.hpp"
#include "camforge/random.hpp"

namespace camforge::app {
namespace {

namespace fs = std::filesystem;

[[noreturn]] void Bad(const std::string& where, const std::string& what) {
  throw Error(ErrorCode::kFormat, where + ": " + what);
}

const Json& Field(const Json& obj, const char* name, const std::string& where) {
  if (!obj.is_object()) Bad(where, "expected a JSON object");
  const auto it = obj.find(name);
  if (it == obj.end()) {
    Bad(where, std::string("missing required field '") + name + "'");
  }
  return *it;
}

template <typename T>
T As(const Json& value, const std::string& where, const char* name) {
  try {
    return value.get<T>();
  } catch (const Json::exception&) {
    Bad(where, std::string("field '") + name + "' has the wrong type");
  }
}

fs::path Resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

std::vector<double> Doubles(const Json& value, const std::string& where,
                            const char* name) {
  if (!value.is_array()) Bad(where, std::string("'") + name + "' must be an array");
  return As<std::vector<double>>(value, where, name);
}

ImageTensor LoadImageWithMetadata(const fs::path& path, const Json* prep) {
  std::vector<double> mean, stddev;
  if (prep && prep->is_object()) {
    if (prep->contains("mean")) mean = prep->at("mean").get<std::vector<double>>();
    if (prep->contains("std")) stddev = prep->at("std").get<std::vector<double>>();
  }
  return ReadImage(path, std::move(mean), std::move(stddev));
}

}  // namespace

Json ReadJsonFile(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open '" + path.string() + "'");
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw Error(ErrorCode::kFormat,
                path.string() + ": invalid JSON (" + e.what() + ")");
  }
}

LoadedOracle LoadOracle(const Json& spec, const fs::path& base,
                        std::size_t height, std::size_t width) {
  const std::string where = "oracle";
  LoadedOracle loaded;
  if (spec.is_string()) {
    const std::string path = spec.get<std::string>();
    auto onnx = std::make_shared<OnnxOracle>(OnnxOracle::Load(Resolve(base, path)));
    loaded.description = {{"kind", "onnx"},
                          {"path", path},
                          {"classes", onnx->class_count()}};
    loaded.oracle = std::move(onnx);
    return loaded;
  }
  const std::string kind = As<std::string>(Field(spec, "kind", where), where, "kind");
  if (kind == "onnx") {
    return LoadOracle(Field(spec, "path", where), base, height, width);
  }
  if (kind == "region") {
    const auto rows = As<std::vector<std::size_t>>(Field(spec, "rows", where), where, "rows");
    const auto cols = As<std::vector<std::size_t>>(Field(spec, "cols", where), where, "cols");
    if (rows.size() != 2 || cols.size() != 2) {
      Bad(where, "'rows' and 'cols' must be [begin, end) pairs");
    }
    const double gain = As<double>(Field(spec, "gain", where), where, "gain");
    const double bias = As<double>(Field(spec, "bias", where), where, "bias");
    loaded.oracle = std::make_shared<RegionOracle>(RegionOracle::Rectangle(
        height, width, rows[0], rows[1], cols[0], cols[1], gain, bias));
    loaded.description = {{"kind", "region"}, {"rows", rows}, {"cols", cols},
                          {"gain", gain},     {"bias", bias}, {"classes", 2}};
    return loaded;
  }
  if (kind == "constant") {
    const auto p = Doubles(Field(spec, "probabilities", where), where, "probabilities");
    double total = 0.0;
    for (const double v : p) {
      if (!(v >= 0.0 && v <= 1.0)) Bad(where, "probabilities must lie in [0, 1]");
      total += v;
    }
    if (p.empty() || std::abs(total - 1.0) > 1e-5) {
      Bad(where, "probabilities must sum to 1");
    }
    loaded.oracle = std::make_shared<ConstantOracle>(p);
    loaded.description = {{"kind", "constant"}, {"probabilities", p},
                          {"classes", p.size()}};
    return loaded;
  }
  Bad(where, "unknown oracle kind '" + kind + "'");
}

Bundle LoadBundle(const fs::path& path) {
  Bundle b;
  b.manifest_path = fs::is_directory(path) ? path / "manifest.json" : path;
  const std::string where = b.manifest_path.string();
  const Json m = ReadJsonFile(b.manifest_path);
  if (m.contains("preprocessing")) b.preprocessing = m["preprocessing"];
  if (m.contains("model")) b.model = As<std::string>(m["model"], where, "model");
  b.image_source = As<std::string>(Field(m, "image", where), where, "image");
  b.image = LoadImageWithMetadata(Resolve(b.root(), b.image_source),
                                  b.preprocessing.is_null() ? nullptr : &b.preprocessing);
  const auto class_id = As<long long>(Field(m, "class_id", where), where, "class_id");
  if (class_id < 0) Bad(where, "'class_id' must be non-negative");
  b.class_id = static_cast<std::size_t>(class_id);
  if (m.contains("oracle") && !m["oracle"].is_null()) b.oracle_spec = m["oracle"];
  if (m.contains("invalid")) {
    b.invalid = As<std::vector<std::string>>(m["invalid"], where, "invalid");
  }
  const Json& maps = Field(m, "maps", where);
  if (!maps.is_object()) Bad(where, "'maps' must map labels to CAMM files");
  for (const auto& [label, file] : maps.items()) {
    const auto source = As<std::string>(file, where, "maps");
    b.labels.push_back(label);
    b.map_sources[label] = source;
    if (std::find(b.invalid.begin(), b.invalid.end(), label) != b.invalid.end()) {
      continue;
    }
    auto map = ReadMap(Resolve(b.root(), source)).WithLabel(label);
    CheckMapMatchesImage(map, b.image);
    b.maps.emplace(label, std::move(map));
  }
  return b;
}

LoadedOracle BundleOracle(const Bundle& bundle) {
  if (!bundle.oracle_spec) {
    throw Error(ErrorCode::kInvalidArgument,
                bundle.manifest_path.string() +
                    ": missing required field 'oracle' (model graph path)");
  }
  auto loaded = LoadOracle(*bundle.oracle_spec, bundle.root(),
                           bundle.image.height(), bundle.image.width());
  if (bundle.class_id >= loaded.oracle->class_count()) {
    throw Error(ErrorCode::kClassOutOfRange,
                bundle.manifest_path.string() + ": class_id " +
                    std::to_string(bundle.class_id) + " but the oracle has " +
                    std::to_string(loaded.oracle->class_count()) + " classes");
  }
  return loaded;
}

std::vector<ActivationMap> BundleMaps(const Bundle& bundle,
                                      const std::vector<std::string>& labels) {
  std::vector<ActivationMap> out;
  const auto& wanted = labels.empty() ? bundle.labels : labels;
  for (const auto& label : wanted) {
    const auto it = bundle.maps.find(label);
    if (it != bundle.maps.end()) {
      out.push_back(it->second);
    } else if (std::find(bundle.labels.begin(), bundle.labels.end(), label) ==
               bundle.labels.end()) {
      throw Error(ErrorCode::kMissingMap,
                  "bundle has no map labelled '" + label + "'");
    }
  }
  if (out.empty()) throw Error(ErrorCode::kEmptyInput, "no usable maps selected");
  return out;
}

std::vector<double> ParseKGrid(const std::string& text) {
  auto number = [&](std::string_view s) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
      throw Error(ErrorCode::kInvalidArgument, "bad k grid '" + text + "'");
    }
    return v;
  };
  std::vector<double> grid;
  if (text.find(':') != std::string::npos) {
    std::vector<double> parts;
    std::stringstream ss(text);
    for (std::string part; std::getline(ss, part, ':');) parts.push_back(number(part));
    if (parts.size() < 2 || parts.size() > 3) {
      throw Error(ErrorCode::kInvalidArgument, "bad k grid '" + text + "'");
    }
    const double step = parts.size() == 3 ? parts[2] : 1.0;
    if (!(step > 0.0)) throw Error(ErrorCode::kInvalidArgument, "k grid step must be positive");
    for (std::size_t i = 0;; ++i) {
      const double k = parts[0] + static_cast<double>(i) * step;
      if (k > parts[1] + 1e-9) break;
      grid.push_back(k);
    }
  } else {
    std::stringstream ss(text);
    for (std::string part; std::getline(ss, part, ',');) grid.push_back(number(part));
  }
  if (grid.empty()) throw Error(ErrorCode::kInvalidK, "empty k grid '" + text + "'");
  for (const double k : grid) CheckPercent(k);
  return grid;
}

std::vector<double> KGridFromJson(const Json& value) {
  std::vector<double> grid;
  if (value.is_array()) {
    grid = As<std::vector<double>>(value, "k_grid", "k_grid");
  } else if (value.is_object()) {
    const double first = As<double>(Field(value, "first", "k_grid"), "k_grid", "first");
    const double last = As<double>(Field(value, "last", "k_grid"), "k_grid", "last");
    const double step = value.contains("step") ? As<double>(value["step"], "k_grid", "step") : 1.0;
    std::ostringstream text;
    text.precision(17);
    text << first << ":" << last << ":" << step;
    return ParseKGrid(text.str());
  } else if (value.is_string()) {
    return ParseKGrid(value.get<std::string>());
  } else {
    Bad("k_grid", "expected an array, an object or a string");
  }
  if (grid.empty()) throw Error(ErrorCode::kInvalidK, "empty k grid");
  for (const double k : grid) CheckPercent(k);
  return grid;
}

std::size_t WorkersFromEnvironment(std::size_t fallback) {
  const char* env = std::getenv("CAMFORGE_WORKERS");
  if (env == nullptr || *env == '\0') return fallback;
  std::size_t v = 0;
  const std::string_view s(env);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || v == 0) {
    throw Error(ErrorCode::kInvalidArgument,
                "CAMFORGE_WORKERS must be a positive integer, got '" +
                    std::string(s) + "'");
  }
  return v;
}

namespace {

// Reads the group table; members are bundle labels, the RandomCAM token or
// CAMM paths relative to `base`.
void LoadGroups(const OrderedJson& table, const fs::path& base,
                const std::string& where, const Bundle* bundle,
                CampaignManifest& out) {
  if (!table.is_object() || table.empty()) {
    Bad(where, "'groups' must map group codes to lists of maps");
  }
  auto& spec = out.spec;
  spec.groups.clear();
  for (const auto& [code, members] : table.items()) {
    CamGroup group{code, {}};
    if (!members.is_array()) Bad(where, "group '" + code + "' must be a list");
    for (const auto& entry : members) {
      if (!entry.is_string()) Bad(where, "group '" + code + "' has a non-string member");
      const std::string item = entry.get<std::string>();
      if (item == kRandomCamToken) {
        const std::string label = "RandomCAM";
        spec.maps.insert_or_assign(
            label, RandomCam(spec.image.height(), spec.image.width(),
                             DeriveSeed(spec.seed, "RandomCAM")));
        out.map_sources[label] = item;
        group.members.push_back(label);
      } else if (bundle && bundle->maps.count(item)) {
        spec.maps.insert_or_assign(item, bundle->maps.at(item));
        out.map_sources[item] = bundle->map_sources.at(item);
        group.members.push_back(item);
      } else if (bundle && std::find(bundle->labels.begin(), bundle->labels.end(),
                                     item) != bundle->labels.end()) {
        // Exporter-invalid: an all-zero map, which the validity filter skips.
        spec.maps.insert_or_assign(
            item, ActivationMap::Zeros(spec.image.height(), spec.image.width())
                      .WithLabel(item));
        out.map_sources[item] = bundle->map_sources.at(item);
        group.members.push_back(item);
      } else {
        const fs::path file = Resolve(base, item);
        if (!fs::exists(file)) {
          throw Error(ErrorCode::kMissingMap,
                      where + ": group '" + code + "' lists '" + item +
                          "', which is neither a bundle label nor a file");
        }
        auto map = ReadMap(file);
        const std::string label = map.label();
        CheckMapMatchesImage(map, spec.image);
        if (out.map_sources.count(label) && out.map_sources[label] != item) {
          Bad(where, "two different files share the label '" + label + "'");
        }
        out.map_sources[label] = item;
        spec.maps.insert_or_assign(label, std::move(map));
        group.members.push_back(label);
      }
    }
    spec.groups.push_back(std::move(group));
  }
  CheckGroupCount(spec.groups.size());
  CheckGroupsDisjoint(spec.groups);
}

}  // namespace

CampaignManifest LoadCampaignManifest(
    const fs::path& path, const std::optional<fs::path>& groups_override) {
  CampaignManifest out;
  out.path = path;
  const std::string where = path.string();
  const fs::path base = path.parent_path();
  const Json plain = ReadJsonFile(path);
  auto& spec = out.spec;

  std::optional<Bundle> bundle;
  if (plain.contains("bundle")) {
    bundle = LoadBundle(Resolve(base, As<std::string>(plain["bundle"], where, "bundle")));
  }
  // Image, class and oracle come from the manifest, else from the bundle.
  if (plain.contains("image")) {
    out.image_source = As<std::string>(plain["image"], where, "image");
    spec.image = LoadImageWithMetadata(
        Resolve(base, out.image_source),
        plain.contains("preprocessing") ? &plain["preprocessing"] : nullptr);
  } else if (bundle) {
    out.image_source = bundle->image_source;
    spec.image = bundle->image;
  } else {
    Bad(where, "missing required field 'image'");
  }
  if (plain.contains("class_id")) {
    const auto c = As<long long>(plain["class_id"], where, "class_id");
    if (c < 0) Bad(where, "'class_id' must be non-negative");
    spec.class_id = static_cast<std::size_t>(c);
  } else if (bundle) {
    spec.class_id = bundle->class_id;
  } else {
    Bad(where, "missing required field 'class_id'");
  }
  if (plain.contains("oracle")) {
    out.oracle = LoadOracle(plain["oracle"], base, spec.image.height(),
                            spec.image.width());
  } else if (bundle) {
    out.oracle = BundleOracle(*bundle);
  } else {
    Bad(where, "missing required field 'oracle' (model graph path)");
  }
  if (spec.class_id >= out.oracle.oracle->class_count()) {
    throw Error(ErrorCode::kClassOutOfRange,
                where + ": class_id " + std::to_string(spec.class_id) +
                    " but the oracle has " +
                    std::to_string(out.oracle.oracle->class_count()) + " classes");
  }

  spec.k_grid = plain.contains("k_grid") ? KGridFromJson(plain["k_grid"]) : DefaultKGrid();
  if (plain.contains("percentiles")) {
    spec.road.percentiles = Doubles(plain["percentiles"], where, "percentiles");
    if (spec.road.percentiles.empty()) Bad(where, "'percentiles' is empty");
    for (const double p : spec.road.percentiles) {
      if (!(p > 0.0 && p < 100.0)) Bad(where, "percentiles must lie in (0, 100)");
    }
  }
  if (plain.contains("sigma")) {
    spec.road.imputation.noise_sigma = As<double>(plain["sigma"], where, "sigma");
    if (!(spec.road.imputation.noise_sigma >= 0.0) ||
        !std::isfinite(spec.road.imputation.noise_sigma)) {
      Bad(where, "'sigma' must be finite and non-negative");
    }
  }
  if (plain.contains("tolerance")) {
    spec.road.imputation.tolerance = As<double>(plain["tolerance"], where, "tolerance");
    if (!(spec.road.imputation.tolerance > 0.0)) Bad(where, "'tolerance' must be positive");
  }
  if (plain.contains("seed")) spec.seed = As<std::uint64_t>(plain["seed"], where, "seed");
  std::size_t workers = 1;
  if (plain.contains("workers")) {
    workers = As<std::size_t>(plain["workers"], where, "workers");
    if (workers == 0) Bad(where, "'workers' must be positive");
  }
  spec.workers = WorkersFromEnvironment(workers);
  if (plain.contains("cre_source")) {
    const auto s = As<std::string>(plain["cre_source"], where, "cre_source");
    if (s == "best_score") {
      out.cre_source = CreScoreSource::kBestScore;
    } else if (s == "sweep_mean") {
      out.cre_source = CreScoreSource::kSweepMean;
    } else {
      Bad(where, "'cre_source' must be best_score or sweep_mean");
    }
  }

  if (groups_override) {
    const Json g = ReadJsonFile(*groups_override);
    const OrderedJson& table = g.contains("groups") ? g["groups"] : g;
    LoadGroups(table, groups_override->parent_path(), groups_override->string(),
               bundle ? &*bundle : nullptr, out);
  } else {
    if (!plain.contains("groups")) Bad(where, "missing required field 'groups'");
    LoadGroups(plain["groups"], base, where, bundle ? &*bundle : nullptr, out);
  }
  return out;
}

}  // namespace camforge::app
