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

#include <gtest/gtest.h>
#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "camforge/adaptive.hpp"
#include "camforge/app/bundle.hpp"
#include "camforge/app/demo.hpp"
#include "camforge/app/report.hpp"
#include "camforge/fusion.hpp"
#include "camforge/map_io.hpp"
#include "camforge/road.hpp"

namespace camforge::app {
namespace {

namespace fs = std::filesystem;

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome Cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = RunCli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string Slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

// Smallest c with 100 c >= k N, integer k.
std::size_t CeilCount(int k, std::size_t n) {
  std::size_t c = 0;
  while (100 * c < static_cast<std::size_t>(k) * n) ++c;
  return c;
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() /
           ("camforge_cli_" + std::to_string(::getpid()) + "_" + info->name());
    fs::remove_all(dir_);
    DemoOptions o;
    o.size = 16;
    o.k_grid = "20,40";
    WriteDemoBundle(dir_, o);
    EditJson("campaign.json", [](Json& j) { j["percentiles"] = {30, 70}; });
  }
  void TearDown() override { fs::remove_all(dir_); }

  template <typename F>
  void EditJson(const std::string& name, F&& edit) {
    Json j = ReadJsonFile(dir_ / name);
    edit(j);
    WriteFileAtomic(dir_ / name, Dump(j));
  }

  std::string P(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

TEST_F(CliTest, ConsensusFuseKeepsCeilOfKPercentPixels) {
  for (const int k : {1, 19, 50, 77, 100}) {
    const auto r = Cli({"fuse", "--bundle", P(""), "--mode", "consensus", "--k",
                        std::to_string(k), "--out", P("meta.camm")});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto map = ReadMap(P("meta.camm"));
    std::size_t nonzero = 0;
    for (const double v : map.values()) nonzero += v != 0.0 ? 1 : 0;
    EXPECT_EQ(nonzero, CeilCount(k, 16 * 16)) << "k=" << k;
    const auto report = Json::parse(r.out);
    EXPECT_EQ(report["retained"].get<std::size_t>(), CeilCount(k, 256));
    EXPECT_TRUE(report.contains("road"));
  }
}

TEST_F(CliTest, ConsensusFuseOnTwentyByTwenty) {
  fs::remove_all(dir_);
  DemoOptions o;
  o.size = 20;
  WriteDemoBundle(dir_, o);
  const auto r = Cli({"fuse", "--bundle", P(""), "--k", "19", "--out", P("m.camm")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto map = ReadMap(P("m.camm"));
  std::size_t nonzero = 0;
  for (const double v : map.values()) nonzero += v != 0.0;
  EXPECT_EQ(nonzero, 76u);
}

TEST_F(CliTest, AverageOfOneMapIsTheNormalizedInput) {
  const auto r = Cli({"fuse", "--bundle", P(""), "--mode", "average", "--maps",
                      "GradCAM", "--out", P("avg.camm")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto fused = ReadMap(P("avg.camm"));
  const auto input = ReadMap(P("maps/GradCAM.camm"));
  double lo = input[0], hi = input[0];
  for (const double v : input.values()) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  for (std::size_t i = 0; i < input.size(); ++i) {
    EXPECT_NEAR(fused[i], (input[i] - lo) / (hi - lo), 1e-6);
  }
}

TEST_F(CliTest, WeightedSoftmaxWithEqualScoresEqualsAverage) {
  const std::string maps = "GradCAM,XGradCAM,LayerCAM";
  ASSERT_EQ(Cli({"fuse", "--bundle", P(""), "--mode", "average", "--maps", maps,
                 "--out", P("avg.camm")})
                .code,
            0);
  const auto r = Cli({"fuse", "--bundle", P(""), "--mode", "weighted", "--transform",
                      "softmax", "--maps", maps, "--scores", "0.2,0.2,0.2", "--out",
                      P("w.camm")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto a = ReadMap(P("avg.camm"));
  const auto w = ReadMap(P("w.camm"));
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], w[i], 1e-6);
  for (const double weight : Json::parse(r.out)["weights"]) {
    EXPECT_NEAR(weight, 1.0 / 3.0, 1e-12);
  }
}

TEST_F(CliTest, WeightedWithoutScoresUsesOracleRoad) {
  const auto r = Cli({"fuse", "--bundle", P(""), "--mode", "weighted", "--maps",
                      "HiResCAM,XGradCAM", "--out", P("w.camm"), "--percentiles",
                      "50"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto scores = Json::parse(r.out)["scores"];
  ASSERT_EQ(scores.size(), 2u);
  // The target-focused map must outscore the distractor-focused one.
  EXPECT_GT(scores[0].get<double>(), scores[1].get<double>());
}

TEST_F(CliTest, RoadWithConstantOracleIsZero) {
  EditJson("manifest.json", [](Json& j) {
    j["oracle"] = {{"kind", "constant"}, {"probabilities", {0.3, 0.7}}};
  });
  const auto r = Cli({"road", "--bundle", P(""), "--map", "GradCAM"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(Json::parse(r.out)["combined"].get<double>(), 0.0);
}

TEST_F(CliTest, RoadMatchesTheLibraryScore) {
  const auto r = Cli({"road", "--bundle", P(""), "--map", "HiResCAM", "--seed", "11"});
  ASSERT_EQ(r.code, 0) << r.err;
  const Bundle b = LoadBundle(dir_);
  const auto oracle = BundleOracle(b);
  const auto direct = ComputeRoadScore(b.image, b.maps.at("HiResCAM"), b.class_id,
                                       *oracle.oracle, RoadOptions{}, 11);
  const auto j = Json::parse(r.out);
  EXPECT_EQ(j["combined"].get<double>(), direct.combined);
  EXPECT_EQ(j["mrp"].get<std::vector<double>>(), direct.mrp_confidence);
  EXPECT_EQ(j["lrp"].get<std::vector<double>>(), direct.lrp_confidence);
  EXPECT_GT(direct.combined, 0.1);
}

TEST_F(CliTest, RoadAcceptsAMapFile) {
  const auto r = Cli({"road", "--bundle", P(""), "--map", P("maps/FullGrad.camm")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(Json::parse(r.out).contains("combined"));
}

TEST_F(CliTest, MissingOracleExitsTwoNamingTheField) {
  EditJson("manifest.json", [](Json& j) { j.erase("oracle"); });
  const auto r = Cli({"road", "--bundle", P(""), "--map", "GradCAM"});
  EXPECT_EQ(r.code, kExitInput);
  EXPECT_NE(r.err.find("'oracle'"), std::string::npos) << r.err;
}

TEST_F(CliTest, InputErrorsExitTwo) {
  EXPECT_EQ(Cli({"road", "--bundle", P("nope"), "--map", "GradCAM"}).code, kExitInput);
  EXPECT_EQ(Cli({"road", "--bundle", P(""), "--map", "NoSuchCAM"}).code, kExitInput);
  EXPECT_EQ(Cli({"frobnicate"}).code, kExitInput);
  EXPECT_EQ(Cli({"fuse", "--bundle", P("")}).code, kExitInput);
  EXPECT_EQ(Cli({"fuse", "--bundle", P(""), "--mode", "median", "--out", P("x")}).code,
            kExitInput);
  EXPECT_EQ(Cli({"sweep", "--bundle", P(""), "--k-grid", "0:10"}).code, kExitInput);
  EXPECT_EQ(Cli({"campaign", "--manifest", P("missing.json"), "--out", P("o")}).code,
            kExitInput);
  EditJson("manifest.json", [](Json& j) { j["class_id"] = 5; });
  const auto r = Cli({"road", "--bundle", P(""), "--map", "GradCAM"});
  EXPECT_EQ(r.code, kExitInput);
  EXPECT_NE(r.err.find("class_id"), std::string::npos);
}

TEST_F(CliTest, HelpExitsZero) {
  const auto r = Cli({"--help"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("campaign"), std::string::npos);
}

TEST_F(CliTest, SweepSingleAndConsensus) {
  auto r = Cli({"sweep", "--bundle", P(""), "--k-grid", "10:30:10", "--single",
                "HiResCAM", "--percentiles", "50", "--write-map", P("best.camm")});
  ASSERT_EQ(r.code, 0) << r.err;
  auto j = Json::parse(r.out)["sweep"];
  EXPECT_EQ(j["k_values"].get<std::vector<double>>(), (std::vector<double>{10, 20, 30}));
  const double best_k = j["best_k"].get<double>();
  const auto best = ReadMap(P("best.camm"));
  std::size_t nonzero = 0;
  for (const double v : best.values()) nonzero += v != 0.0;
  EXPECT_EQ(nonzero, CeilCount(static_cast<int>(best_k), 256));

  r = Cli({"sweep", "--bundle", P(""), "--k-grid", "10,40", "--maps",
           "HiResCAM,GradCAM", "--percentiles", "50", "--out", P("sweep.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(Slurp(P("sweep.json")), r.out);
}

TEST_F(CliTest, TwoGroupCampaignMatchesDirectSweepsAndHandCre) {
  EditJson("campaign.json", [](Json& j) {
    j["groups"] = {{"A", {"HiResCAM"}}, {"B", {"XGradCAM"}}};
  });
  const auto r = Cli({"campaign", "--manifest", P("campaign.json"), "--out", P("out"),
                      "--no-charts"});
  ASSERT_EQ(r.code, 0) << r.err;
  const Json report = ReadJsonFile(P("out/report.json"));
  EXPECT_EQ(report["experiment_count"], 4);
  EXPECT_EQ(report["executed_count"], 3);

  std::string csv = Slurp(P("out/experiments.csv"));
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);  // header + 3 rows

  // Each experiment against its own adaptive sweep through the library.
  const Bundle b = LoadBundle(dir_);
  const auto oracle = BundleOracle(b);
  RoadOptions options;
  options.percentiles = {30, 70};
  const std::vector<double> grid{20, 40};
  auto sweep = [&](std::vector<std::string> labels) {
    std::vector<ActivationMap> maps;
    for (const auto& l : labels) maps.push_back(b.maps.at(l));
    return AdaptiveThreshold(maps, b.image, b.class_id, *oracle.oracle, grid,
                             options, 7)
        .sweep.best_score;
  };
  const double s01 = sweep({"XGradCAM"});
  const double s10 = sweep({"HiResCAM"});
  const double s11 = sweep({"HiResCAM", "XGradCAM"});
  const auto& ex = report["experiments"];
  EXPECT_EQ(ex[1]["best_score"].get<double>(), s01);
  EXPECT_EQ(ex[2]["best_score"].get<double>(), s10);
  EXPECT_EQ(ex[3]["best_score"].get<double>(), s11);

  std::vector<double> sorted{s01, s10, s11};
  std::sort(sorted.begin(), sorted.end());
  const double m = sorted[1];
  const auto& cre = report["cre"];
  EXPECT_NEAR(cre["median"].get<double>(), m, 0.0);
  EXPECT_NEAR(cre["residual"]["A"].get<double>(), (s10 - m) + (s11 - m), 1e-15);
  EXPECT_NEAR(cre["residual"]["B"].get<double>(), (s01 - m) + (s11 - m), 1e-15);
  EXPECT_EQ(cre["inclusion_count"]["A"], 2);
  EXPECT_EQ(Json(ReadJsonFile(P("out/cre.json"))), cre);
}

TEST_F(CliTest, SixGroupCampaignHasSixtyThreeRowsAndThirtyTwoInclusions) {
  const auto r = Cli({"campaign", "--manifest", P("campaign.json"), "--out", P("out")});
  ASSERT_EQ(r.code, 0) << r.err;
  const Json report = ReadJsonFile(P("out/report.json"));
  EXPECT_EQ(report["experiment_count"], 64);
  EXPECT_EQ(report["executed_count"], 63);
  EXPECT_EQ(report["failures"], 0);
  for (const auto& [code, count] : report["group_inclusion"].items()) {
    EXPECT_EQ(count, 32) << code;
  }
  const std::string csv = Slurp(P("out/experiments.csv"));
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 64);
  const std::string kstats = Slurp(P("out/k_stats.csv"));
  EXPECT_EQ(kstats.substr(0, kstats.find('\n')), "k,n,mean,sd,ci_low,ci_high,best_count");
  for (const char* f : {"cre.csv", "cre.json", "best_metacam.camm",
                        "charts/road_vs_k.svg", "charts/best_k_histogram.svg",
                        "charts/cre.svg", "charts/best_metacam.png",
                        "charts/best_side_by_side.png"}) {
    EXPECT_TRUE(fs::exists(dir_ / "out" / f)) << f;
  }
  // The written best MetaCAM is the consensus at the reported best k.
  const auto best = ReadMap(P("out/best_metacam.camm"));
  std::size_t nonzero = 0;
  for (const double v : best.values()) nonzero += v != 0.0;
  EXPECT_EQ(nonzero, CeilCount(report["best"]["best_k"].get<int>(), 256));
}

TEST_F(CliTest, GroupsFileAddingTwoGroupsGivesTwoToTheEight) {
  EditJson("campaign.json", [](Json& j) {
    j["k_grid"] = "30";
    j["percentiles"] = {50};
  });
  const auto r = Cli({"campaign", "--manifest", P("campaign.json"), "--groups",
                      P("groups_gh.json"), "--out", P("out"), "--no-charts"});
  ASSERT_EQ(r.code, 0) << r.err;
  const Json report = ReadJsonFile(P("out/report.json"));
  EXPECT_EQ(report["experiment_count"], 256);
  EXPECT_EQ(report["executed_count"], 255);
  EXPECT_EQ(report["group_inclusion"]["H"], 128);
  EXPECT_EQ(report["groups"][7]["sources"][0], "@RandomCAM");
}

TEST_F(CliTest, ReportsAreByteIdenticalAcrossRunsAndWorkerCounts) {
  ASSERT_EQ(Cli({"campaign", "--manifest", P("campaign.json"), "--out", P("a"),
                 "--workers", "1", "--no-charts"})
                .code,
            0);
  ASSERT_EQ(Cli({"campaign", "--manifest", P("campaign.json"), "--out", P("b"),
                 "--workers", "3", "--no-charts"})
                .code,
            0);
  for (const char* f : {"report.json", "experiments.csv", "k_stats.csv", "cre.json",
                        "cre.csv", "best_metacam.camm"}) {
    EXPECT_EQ(Slurp(dir_ / "a" / f), Slurp(dir_ / "b" / f)) << f;
  }
}

TEST_F(CliTest, ChartFailureLeavesJsonAndCsvIntact) {
  ASSERT_EQ(Cli({"campaign", "--manifest", P("campaign.json"), "--out", P("clean"),
                 "--no-charts"})
                .code,
            0);
  std::ofstream(P("blocker")) << "not a directory";
  const auto r = Cli({"campaign", "--manifest", P("campaign.json"), "--out", P("out"),
                      "--charts", P("blocker/charts")});
  EXPECT_EQ(r.code, kExitCompute);
  EXPECT_NE(r.err.find("chart"), std::string::npos);
  for (const char* f : {"report.json", "experiments.csv", "cre.json"}) {
    EXPECT_EQ(Slurp(dir_ / "out" / f), Slurp(dir_ / "clean" / f)) << f;
  }
  EXPECT_FALSE(fs::exists(dir_ / "out" / "report.json.partial"));
}

TEST_F(CliTest, FailedExperimentsExitThreeWithPartialResults) {
  EditJson("manifest.json", [](Json& j) { j["invalid"] = {"XGradCAM"}; });
  EditJson("campaign.json", [](Json& j) {
    j["groups"] = {{"A", {"HiResCAM"}}, {"B", {"XGradCAM"}}};
  });
  const auto r = Cli({"campaign", "--manifest", P("campaign.json"), "--out", P("out")});
  EXPECT_EQ(r.code, kExitCompute);
  const Json report = ReadJsonFile(P("out/report.json"));
  EXPECT_EQ(report["failures"], 1);
  EXPECT_TRUE(report["experiments"][1]["error"].is_string());
  EXPECT_EQ(report["experiments"][3]["skipped_maps"][0], "XGradCAM");
  EXPECT_EQ(report["best"]["id"], "10");
}

TEST_F(CliTest, CreCommandSumsReports) {
  for (const char* seed : {"1", "2"}) {
    EditJson("campaign.json", [&](Json& j) { j["seed"] = std::stoi(seed); });
    ASSERT_EQ(Cli({"campaign", "--manifest", P("campaign.json"), "--out",
                   P(std::string("run") + seed), "--no-charts"})
                  .code,
              0);
  }
  const auto r = Cli({"cre", "--reports", P("run1/report.json"), P("run2/cre.json"),
                      "--out", P("total.json"), "--csv", P("total.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  const Json total = Json::parse(r.out);
  const Json a = ReadJsonFile(P("run1/cre.json"));
  const Json b = ReadJsonFile(P("run2/cre.json"));
  for (const auto& [code, v] : total["residual"].items()) {
    EXPECT_EQ(v.get<double>(), a["residual"][code].get<double>() +
                                   b["residual"][code].get<double>());
    EXPECT_EQ(total["inclusion_count"][code], 64);
  }
  EXPECT_TRUE(total["median"].is_null());
  EXPECT_EQ(total["campaign_count"], 2);
  EXPECT_TRUE(fs::exists(P("total.csv")));

  EditJson("campaign.json", [](Json& j) { j["groups"].erase("F"); });
  ASSERT_EQ(Cli({"campaign", "--manifest", P("campaign.json"), "--out", P("five"),
                 "--no-charts"})
                .code,
            0);
  EXPECT_EQ(Cli({"cre", "--reports", P("run1/cre.json"), P("five/cre.json")}).code,
            kExitInput);
}

TEST_F(CliTest, RenderTilesImageAndMaps) {
  const auto r = Cli({"render", "--bundle", P(""), "--maps", "GradCAM,LayerCAM",
                      "--extra", P("maps/FullGrad.camm"), "--out", P("side.png")});
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string png = Slurp(P("side.png"));
  ASSERT_GT(png.size(), 24u);
  EXPECT_EQ(png.substr(1, 3), "PNG");
  auto be32 = [&](std::size_t at) {
    return (std::uint32_t(std::uint8_t(png[at])) << 24) |
           (std::uint32_t(std::uint8_t(png[at + 1])) << 16) |
           (std::uint32_t(std::uint8_t(png[at + 2])) << 8) | std::uint8_t(png[at + 3]);
  };
  EXPECT_EQ(be32(16), 4u * 16 + 3 * 4);  // image + 3 maps, 4 px gaps
  EXPECT_EQ(be32(20), 16u);
  EXPECT_EQ(Json::parse(r.out)["tiles"].size(), 4u);
}

TEST_F(CliTest, WorkersEnvironmentVariableIsValidated) {
  ::setenv("CAMFORGE_WORKERS", "zero", 1);
  const auto r = Cli({"road", "--bundle", P(""), "--map", "GradCAM"});
  ::unsetenv("CAMFORGE_WORKERS");
  EXPECT_EQ(r.code, kExitInput);
  EXPECT_NE(r.err.find("CAMFORGE_WORKERS"), std::string::npos);
}

}  // namespace
}  // namespace camforge::app
