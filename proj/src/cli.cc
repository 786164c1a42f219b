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

#include "camforge/app/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <functional>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "camforge/adaptive.hpp"
#include "camforge/app/bundle.hpp"
#include "camforge/app/charts.hpp"
#include "camforge/app/report.hpp"
#include "camforge/cre.hpp"
#include "camforge/ensemble.hpp"
#include "camforge/fusion.hpp"
#include "camforge/map_io.hpp"
#include "camforge/road.hpp"

namespace camforge::app {
namespace {

namespace fs = std::filesystem;

// Failures while reading inputs exit 2; anything after that exits 3.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename F>
auto Input(F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    throw InputError(e.what());
  } catch (const fs::filesystem_error& e) {
    throw InputError(e.what());
  } catch (const Json::exception& e) {
    throw InputError(e.what());
  }
}

std::vector<std::string> SplitList(const std::vector<std::string>& items) {
  std::vector<std::string> out;
  for (const auto& item : items) {
    std::stringstream s(item);
    std::string part;
    while (std::getline(s, part, ',')) {
      if (!part.empty()) out.push_back(part);
    }
  }
  return out;
}

struct RoadFlags {
  std::vector<double> percentiles{20.0, 40.0, 60.0, 80.0};
  double sigma = 0.05;
  std::uint64_t seed = 0;
  std::size_t workers = 0;  // 0: CAMFORGE_WORKERS, else 1

  void Attach(CLI::App* cmd) {
    cmd->add_option("--percentiles", percentiles, "ROAD percentiles")
        ->delimiter(',')
        ->check(CLI::Range(0.0, 100.0));
    cmd->add_option("--sigma", sigma, "imputation noise sigma")
        ->check(CLI::NonNegativeNumber);
    cmd->add_option("--seed", seed, "noise seed");
    cmd->add_option("--workers", workers, "worker threads")
        ->check(CLI::PositiveNumber);
  }

  RoadOptions Options() const {
    RoadOptions o;
    o.percentiles = percentiles;
    for (const double p : percentiles) {
      if (!(p > 0.0 && p < 100.0)) {
        throw InputError("percentiles must lie in (0, 100)");
      }
    }
    o.imputation.noise_sigma = sigma;
    o.workers = Workers();
    return o;
  }

  std::size_t Workers() const {
    return workers > 0 ? workers : Input([] { return WorkersFromEnvironment(1); });
  }
};

// A bundle label, else a CAMM file.
ActivationMap ResolveMap(const Bundle& bundle, const std::string& name) {
  return Input([&] {
    const auto it = bundle.maps.find(name);
    if (it != bundle.maps.end()) return it->second;
    if (std::find(bundle.labels.begin(), bundle.labels.end(), name) !=
        bundle.labels.end()) {
      throw Error(ErrorCode::kInvalidArgument,
                  "map '" + name + "' is marked invalid in the bundle");
    }
    if (!fs::exists(name)) {
      throw Error(ErrorCode::kMissingMap,
                  "'" + name + "' is neither a bundle label nor a file");
    }
    auto map = ReadMap(name);
    CheckMapMatchesImage(map, bundle.image);
    return map;
  });
}

int Fuse(const std::string& bundle_path, const std::string& mode, double k,
         const std::vector<std::string>& map_args, const std::string& transform,
         const std::vector<double>& scores, const std::string& out_path,
         const RoadFlags& road, std::ostream& out) {
  const Bundle bundle = Input([&] { return LoadBundle(bundle_path); });
  const auto labels = SplitList(map_args);
  const auto maps = Input([&] { return BundleMaps(bundle, labels); });
  std::vector<std::string> used;
  for (const auto& m : maps) used.push_back(m.label());
  const auto options = road.Options();
  std::optional<LoadedOracle> oracle;
  if (bundle.oracle_spec) oracle = Input([&] { return BundleOracle(bundle); });

  Json report = {{"mode", mode}, {"maps", used}};
  ActivationMap fused;
  if (mode == "consensus") {
    const auto c = FuseConsensus(maps, k);
    fused = c.map;
    report["k"] = k;
    report["retained"] = c.retained_count();
  } else if (mode == "average") {
    fused = FuseAverage(maps);
  } else {
    const auto t = ParseWeightTransform(transform);
    if (!t) throw InputError("unknown weight transform '" + transform + "'");
    std::vector<double> weights_from = scores;
    if (weights_from.empty()) {
      if (!oracle) {
        throw InputError(bundle.manifest_path.string() +
                         ": weighted fusion needs --scores or the 'oracle' field");
      }
      for (const auto& m : maps) {
        weights_from.push_back(ComputeRoadScore(bundle.image, m, bundle.class_id,
                                                *oracle->oracle, options, road.seed)
                                   .combined);
      }
    } else if (weights_from.size() != maps.size()) {
      throw InputError(std::to_string(maps.size()) + " maps but " +
                       std::to_string(weights_from.size()) + " scores");
    }
    const auto w = FuseWeighted(maps, weights_from, *t);
    fused = w.map;
    report["transform"] = std::string(WeightTransformName(*t));
    report["scores"] = weights_from;
    report["weights"] = w.weights.weights;
    report["degenerate_weights"] = w.weights.degenerate;
  }
  WriteMap(out_path, fused);
  report["out"] = out_path;
  if (oracle) {
    report["road"] = RoadScoreJson(ComputeRoadScore(
        bundle.image, fused, bundle.class_id, *oracle->oracle, options, road.seed));
  }
  out << Dump(report);
  return kExitOk;
}

int Road(const std::string& bundle_path, const std::string& map_name,
         const RoadFlags& road, std::ostream& out) {
  const Bundle bundle = Input([&] { return LoadBundle(bundle_path); });
  const auto oracle = Input([&] { return BundleOracle(bundle); });
  const ActivationMap map = ResolveMap(bundle, map_name);
  const auto options = road.Options();
  out << Dump(RoadScoreJson(ComputeRoadScore(bundle.image, map, bundle.class_id,
                                             *oracle.oracle, options, road.seed)));
  return kExitOk;
}

int Sweep(const std::string& bundle_path, const std::string& grid_text,
          const std::vector<std::string>& map_args, const std::string& single,
          const std::string& out_path, const std::string& map_out,
          const RoadFlags& road, std::ostream& out) {
  const Bundle bundle = Input([&] { return LoadBundle(bundle_path); });
  const auto oracle = Input([&] { return BundleOracle(bundle); });
  const auto grid = Input([&] { return ParseKGrid(grid_text); });
  auto options = road.Options();
  const std::size_t workers = options.workers;
  options.workers = 1;
  AdaptiveResult result;
  Json report;
  if (!single.empty()) {
    const ActivationMap map = ResolveMap(bundle, single);
    result = AdaptiveThresholdSingle(map, bundle.image, bundle.class_id,
                                     *oracle.oracle, grid, options, road.seed,
                                     workers);
    report["maps"] = {map.label()};
  } else {
    const auto maps = Input([&] { return BundleMaps(bundle, SplitList(map_args)); });
    result = AdaptiveThreshold(maps, bundle.image, bundle.class_id,
                               *oracle.oracle, grid, options, road.seed, workers);
    std::vector<std::string> used;
    for (const auto& m : maps) used.push_back(m.label());
    report["maps"] = used;
  }
  report["sweep"] = SweepJson(result.sweep);
  if (!map_out.empty()) WriteMap(map_out, result.map.map);
  if (!out_path.empty()) WriteFileAtomic(out_path, Dump(report));
  out << Dump(report);
  return kExitOk;
}

void WriteCharts(const fs::path& dir, const CampaignManifest& manifest,
                 const CampaignResult& result, const CreReport& cre) {
  fs::create_directories(dir);
  WriteFileAtomic(dir / "road_vs_k.svg", RoadVsKSvg(result));
  WriteFileAtomic(dir / "best_k_histogram.svg", BestKHistogramSvg(result));
  WriteFileAtomic(dir / "cre.svg", CreBarsSvg(cre));
  if (result.best_id) {
    const auto& best = result.experiments[result.best_id->bits()];
    const auto meta = BestConsensusMap(manifest.spec, best);
    WritePng(dir / "best_metacam.png", Overlay(manifest.spec.image, meta.map));
    std::vector<RgbImage> tiles{DisplayImage(manifest.spec.image)};
    for (const auto& label : best.used_maps) {
      tiles.push_back(Overlay(manifest.spec.image, manifest.spec.maps.at(label)));
    }
    tiles.push_back(Overlay(manifest.spec.image, meta.map));
    WritePng(dir / "best_side_by_side.png", SideBySide(tiles));
  }
}

int Campaign(const std::string& manifest_path, const std::string& out_dir,
             const std::string& groups_path, std::size_t workers,
             const std::string& charts_dir, bool no_charts, std::ostream& out,
             std::ostream& err) {
  auto manifest = Input([&] {
    return LoadCampaignManifest(
        manifest_path, groups_path.empty() ? std::nullopt
                                           : std::optional<fs::path>(groups_path));
  });
  if (workers > 0) manifest.spec.workers = workers;
  Input([&] { fs::create_directories(out_dir); });
  const fs::path dir(out_dir);

  const CampaignResult result = RunCampaign(manifest.spec, *manifest.oracle.oracle);
  if (!result.best_id) {
    err << "camforge: every experiment failed\n";
  }
  const auto scores = CampaignScores(result, manifest.cre_source);
  std::vector<std::string> codes;
  for (const auto& g : result.groups) codes.push_back(g.code);
  const CreReport cre = scores.empty() ? CreReport{codes, std::nullopt,
                                                   std::vector<double>(codes.size(), 0.0),
                                                   std::vector<std::size_t>(codes.size(), 0),
                                                   0, 1}
                                       : ComputeCre(scores, codes);

  // Single writer: every output goes out from this thread, JSON and CSV
  // first, charts last.
  WriteFileAtomic(dir / "report.json", Dump(CampaignReportJson(manifest, result, cre)));
  WriteFileAtomic(dir / "experiments.csv", ExperimentsCsv(result));
  WriteFileAtomic(dir / "k_stats.csv", KStatsCsv(result));
  WriteFileAtomic(dir / "cre.json", Dump(CreJson(cre)));
  WriteFileAtomic(dir / "cre.csv", CreCsv(cre));
  if (result.best_id) {
    const auto& best = result.experiments[result.best_id->bits()];
    WriteMap(dir / "best_metacam.camm", BestConsensusMap(manifest.spec, best).map);
  }

  int status = kExitOk;
  if (!no_charts) {
    try {
      WriteCharts(charts_dir.empty() ? dir / "charts" : fs::path(charts_dir),
                  manifest, result, cre);
    } catch (const std::exception& e) {
      err << "camforge: chart output failed (" << e.what()
          << "); JSON and CSV outputs are complete\n";
      status = kExitCompute;
    }
  }

  Json summary = {{"experiments", result.experiments.size()},
                  {"executed", result.executed_count()},
                  {"failures", result.failures},
                  {"out", out_dir}};
  if (result.best_id) {
    summary["best"] = result.best_id->ToString();
    summary["score"] = result.max_score;
  }
  out << Dump(summary);
  if (result.failures > 0 || !result.best_id) {
    err << "camforge: " << result.failures
        << " experiment(s) failed; partial results written to " << out_dir << "\n";
    return kExitCompute;
  }
  return status;
}

int Cre(const std::vector<std::string>& reports, const std::string& out_path,
        const std::string& csv_path, std::ostream& out) {
  std::vector<CreReport> parsed;
  for (const auto& r : reports) {
    parsed.push_back(Input([&] {
      try {
        return CreFromJson(ReadJsonFile(r));
      } catch (const Error& e) {
        throw Error(e.code(), r + ": " + e.message());
      }
    }));
  }
  const CreReport total = Input([&] { return AggregateCre(parsed); });
  const std::string json = Dump(CreJson(total));
  if (!out_path.empty()) WriteFileAtomic(out_path, json);
  if (!csv_path.empty()) WriteFileAtomic(csv_path, CreCsv(total));
  out << json;
  return kExitOk;
}

int Render(const std::string& bundle_path, const std::vector<std::string>& map_args,
           const std::vector<std::string>& extra, const std::string& out_path,
           double alpha, std::ostream& out) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw InputError("--alpha must lie in [0, 1]");
  const Bundle bundle = Input([&] { return LoadBundle(bundle_path); });
  std::vector<ActivationMap> maps;
  const auto labels = SplitList(map_args);
  if (!labels.empty() || extra.empty()) {
    maps = Input([&] { return BundleMaps(bundle, labels); });
  }
  for (const auto& file : extra) maps.push_back(ResolveMap(bundle, file));
  std::vector<RgbImage> tiles{DisplayImage(bundle.image)};
  Json order = Json::array({"image"});
  for (const auto& m : maps) {
    tiles.push_back(Overlay(bundle.image, m, alpha));
    order.push_back(m.label());
  }
  WritePng(out_path, SideBySide(tiles));
  out << Dump({{"out", out_path}, {"tiles", order}});
  return kExitOk;
}

}  // namespace

int RunCli(const std::vector<std::string>& args, std::ostream& out,
           std::ostream& err) {
  CLI::App app{"camforge: consensus CAM fusion, ROAD scoring and ensemble campaigns",
               "camforge"};
  app.require_subcommand(1);
  std::function<int()> action;

  RoadFlags fuse_road;
  std::string fuse_bundle, fuse_mode = "consensus", fuse_transform = "softmax",
                           fuse_out;
  double fuse_k = 20.0;
  std::vector<std::string> fuse_maps;
  std::vector<double> fuse_scores;
  auto* fuse = app.add_subcommand("fuse", "fuse a bundle's maps into a MetaCAM");
  fuse->add_option("--bundle", fuse_bundle, "bundle directory or manifest")->required();
  fuse->add_option("--mode", fuse_mode, "fusion mode")
      ->check(CLI::IsMember({"consensus", "average", "weighted"}));
  fuse->add_option("--k", fuse_k, "top-k percent kept (consensus)")
      ->check(CLI::Range(0.0, 100.0));
  fuse->add_option("--maps", fuse_maps, "map labels (default: all valid)")->delimiter(',');
  fuse->add_option("--transform", fuse_transform,
                   "weight transform: raw, minmax, softmax, exponential");
  fuse->add_option("--scores", fuse_scores, "per-map ROAD scores (weighted)")
      ->delimiter(',');
  fuse->add_option("--out", fuse_out, "output CAMM file")->required();
  fuse_road.Attach(fuse);
  fuse->callback([&] {
    action = [&] {
      return Fuse(fuse_bundle, fuse_mode, fuse_k, fuse_maps, fuse_transform,
                  fuse_scores, fuse_out, fuse_road, out);
    };
  });

  RoadFlags road_flags;
  std::string road_bundle, road_map;
  auto* road = app.add_subcommand("road", "ROAD score of one map");
  road->add_option("--bundle", road_bundle, "bundle directory or manifest")->required();
  road->add_option("--map", road_map, "bundle label or CAMM file")->required();
  road_flags.Attach(road);
  road->callback([&] {
    action = [&] { return Road(road_bundle, road_map, road_flags, out); };
  });

  RoadFlags sweep_road;
  std::string sweep_bundle, sweep_grid = "15:45", sweep_single, sweep_out,
                            sweep_map_out;
  std::vector<std::string> sweep_maps;
  auto* sweep = app.add_subcommand("sweep", "adaptive top-k threshold search");
  sweep->add_option("--bundle", sweep_bundle, "bundle directory or manifest")->required();
  sweep->add_option("--k-grid", sweep_grid, "first:last[:step] or a,b,c");
  sweep->add_option("--maps", sweep_maps, "map labels to fuse")->delimiter(',');
  sweep->add_option("--single", sweep_single, "sweep one map instead of a MetaCAM");
  sweep->add_option("--out", sweep_out, "write the sweep JSON here");
  sweep->add_option("--write-map", sweep_map_out, "write the best-k map (CAMM)");
  sweep_road.Attach(sweep);
  sweep->callback([&] {
    action = [&] {
      return Sweep(sweep_bundle, sweep_grid, sweep_maps, sweep_single, sweep_out,
                   sweep_map_out, sweep_road, out);
    };
  });

  std::string camp_manifest, camp_out, camp_groups, camp_charts;
  std::size_t camp_workers = 0;
  bool camp_no_charts = false;
  auto* campaign = app.add_subcommand("campaign", "run a 2^n CAM-group campaign");
  campaign->add_option("--manifest", camp_manifest, "campaign manifest")->required();
  campaign->add_option("--out", camp_out, "output directory")->required();
  campaign->add_option("--groups", camp_groups, "replacement group table (JSON)");
  campaign->add_option("--workers", camp_workers, "worker threads")
      ->check(CLI::PositiveNumber);
  campaign->add_option("--charts", camp_charts, "chart directory (default OUT/charts)");
  campaign->add_flag("--no-charts", camp_no_charts, "skip SVG/PNG output");
  campaign->callback([&] {
    action = [&] {
      return Campaign(camp_manifest, camp_out, camp_groups, camp_workers,
                      camp_charts, camp_no_charts, out, err);
    };
  });

  std::vector<std::string> cre_reports;
  std::string cre_out, cre_csv;
  auto* cre = app.add_subcommand("cre", "sum CRE reports across campaigns");
  cre->add_option("--reports", cre_reports, "report.json or cre.json files")
      ->required()
      ->expected(1, -1);
  cre->add_option("--out", cre_out, "write the aggregate JSON here");
  cre->add_option("--csv", cre_csv, "write the signed-bar CSV here");
  cre->callback([&] { action = [&] { return Cre(cre_reports, cre_out, cre_csv, out); }; });

  std::string render_bundle, render_out;
  std::vector<std::string> render_maps, render_extra;
  double render_alpha = 0.5;
  auto* render = app.add_subcommand("render", "side-by-side heat-map overlays (PNG)");
  render->add_option("--bundle", render_bundle, "bundle directory or manifest")->required();
  render->add_option("--maps", render_maps, "bundle labels")->delimiter(',');
  render->add_option("--extra", render_extra, "additional CAMM files")->expected(1, -1);
  render->add_option("--out", render_out, "output PNG")->required();
  render->add_option("--alpha", render_alpha, "heat-map opacity");
  render->callback([&] {
    action = [&] {
      return Render(render_bundle, render_maps, render_extra, render_out,
                    render_alpha, out);
    };
  });

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "camforge: " << e.what() << "\n";
    return kExitInput;
  }

  try {
    return action();
  } catch (const InputError& e) {
    err << "camforge: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::exception& e) {
    err << "camforge: " << e.what() << "\n";
    return kExitCompute;
  }
}

}  // namespace camforge::app
