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

#include <gtest/gtest.h>
#include <png.h>
#include <unistd.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <memory>
#include <random>

#include "camforge/app/bundle.hpp"
#include "camforge/app/charts.hpp"
#include "camforge/app/demo.hpp"
#include "camforge/app/report.hpp"
#include "camforge/map_io.hpp"
#include "test_util.hpp"

namespace camforge::app {
namespace {

namespace fs = std::filesystem;

class TempDir {
 public:
  explicit TempDir(const std::string& tag)
      : path_(fs::temp_directory_path() /
              ("camforge_app_" + std::to_string(::getpid()) + "_" + tag)) {
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

// Reference colours sampled from matplotlib's viridis table.
TEST(Viridis, MatchesReferenceSamples) {
  const struct {
    double t;
    int r, g, b;
  } refs[] = {{0.0, 68, 1, 84},     {0.1, 72, 36, 117},  {0.25, 59, 82, 139},
              {0.5, 33, 145, 140},  {0.75, 94, 201, 98}, {0.9, 189, 223, 38},
              {1.0, 253, 231, 37}};
  for (const auto& ref : refs) {
    const auto c = Viridis(ref.t);
    EXPECT_NEAR(c[0], ref.r, 2) << ref.t;
    EXPECT_NEAR(c[1], ref.g, 2) << ref.t;
    EXPECT_NEAR(c[2], ref.b, 2) << ref.t;
  }
}

TEST(Viridis, ClampsAndLightnessRises) {
  EXPECT_EQ(Viridis(-3.0), Viridis(0.0));
  EXPECT_EQ(Viridis(7.0), Viridis(1.0));
  EXPECT_EQ(Viridis(std::nan("")), Viridis(0.0));
  auto luma = [](std::array<std::uint8_t, 3> c) {
    return 0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2];
  };
  for (int i = 1; i <= 100; ++i) {
    EXPECT_GT(luma(Viridis(i / 100.0)), luma(Viridis((i - 1) / 100.0)) - 0.5);
  }
}

ImageTensor GrayRamp(std::size_t h, std::size_t w) {
  std::vector<float> v(3 * h * w);
  for (std::size_t i = 0; i < v.size(); ++i) {
    v[i] = static_cast<float>(i % (h * w)) / static_cast<float>(h * w - 1);
  }
  return ImageTensor(3, h, w, std::move(v));
}

TEST(Overlay, AlphaEndpoints) {
  const auto image = GrayRamp(4, 5);
  std::mt19937_64 rng(3);
  const auto map = testing::RandomMap(4, 5, rng);
  const auto plain = DisplayImage(image);
  EXPECT_EQ(Overlay(image, map, 0.0).rgb, plain.rgb);
  const auto heat = Overlay(image, map, 1.0);
  double lo = map[0], hi = map[0];
  for (const double v : map.values()) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  for (std::size_t p = 0; p < map.size(); ++p) {
    const auto c = Viridis((map[p] - lo) / (hi - lo));
    for (int ch = 0; ch < 3; ++ch) EXPECT_EQ(heat.rgb[3 * p + ch], c[ch]);
  }
}

TEST(Overlay, UndoesRecordedNormalization) {
  std::vector<float> v(3 * 2 * 2);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = (0.25f - 0.5f) / 0.25f;
  const ImageTensor image(3, 2, 2, v, {0.5, 0.5, 0.5}, {0.25, 0.25, 0.25});
  for (const auto byte : DisplayImage(image).rgb) EXPECT_EQ(byte, 64);
}

TEST(Overlay, ShapeMismatchThrows) {
  EXPECT_THROW(Overlay(GrayRamp(4, 4), ActivationMap::Zeros(4, 5)), Error);
}

TEST(SideBySide, LayoutAndGap) {
  RgbImage a{2, 3, std::vector<std::uint8_t>(18, 10)};
  RgbImage b{1, 2, std::vector<std::uint8_t>(6, 20)};
  const auto s = SideBySide({a, b}, 2);
  EXPECT_EQ(s.width, 5u);
  EXPECT_EQ(s.height, 3u);
  EXPECT_EQ(s.rgb[3 * (0 * 5 + 1)], 10);
  EXPECT_EQ(s.rgb[3 * (0 * 5 + 2)], 255);  // gap
  EXPECT_EQ(s.rgb[3 * (1 * 5 + 4)], 20);
  EXPECT_EQ(s.rgb[3 * (2 * 5 + 4)], 255);  // below the shorter tile
}

// Decodes with libpng's reader, independent of the writer path.
RgbImage ReadPng(const fs::path& path) {
  std::unique_ptr<FILE, int (*)(FILE*)> f(std::fopen(path.c_str(), "rb"), &std::fclose);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  png_init_io(png, f.get());
  png_read_png(png, info, PNG_TRANSFORM_IDENTITY, nullptr);
  RgbImage out{png_get_image_width(png, info), png_get_image_height(png, info), {}};
  EXPECT_EQ(png_get_color_type(png, info), PNG_COLOR_TYPE_RGB);
  png_bytepp rows = png_get_rows(png, info);
  for (std::size_t r = 0; r < out.height; ++r) {
    out.rgb.insert(out.rgb.end(), rows[r], rows[r] + 3 * out.width);
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

TEST(WritePng, RoundTripsThroughLibpngReader) {
  TempDir dir("png");
  RgbImage img{7, 3, {}};
  std::mt19937 rng(5);
  for (int i = 0; i < 7 * 3 * 3; ++i) img.rgb.push_back(static_cast<std::uint8_t>(rng()));
  WritePng(dir.path() / "x.png", img);
  const auto back = ReadPng(dir.path() / "x.png");
  EXPECT_EQ(back.width, 7u);
  EXPECT_EQ(back.height, 3u);
  EXPECT_EQ(back.rgb, img.rgb);
  EXPECT_THROW(WritePng(dir.path() / "missing" / "x.png", img), Error);
  EXPECT_THROW(WritePng(dir.path() / "e.png", RgbImage{}), Error);
}

CampaignResult TinyCampaign() {
  CampaignResult r;
  r.groups = {{"A", {"a"}}, {"B", {"b"}}};
  r.k_grid = {10, 20};
  r.experiments.resize(4);
  r.experiments[0].id = CamSetId(0, 2);
  const double scores[4][2] = {{0, 0}, {0.1, 0.3}, {0.2, -0.1}, {0.4, 0.05}};
  for (std::uint32_t bits = 1; bits < 4; ++bits) {
    auto& e = r.experiments[bits];
    e.id = CamSetId(bits, 2);
    e.executed = true;
    ThresholdSweep s;
    s.k_values = r.k_grid;
    for (const double v : scores[bits]) {
      RoadScore rs;
      rs.combined = v;
      s.scores.push_back(rs);
    }
    SelectBest(s);
    e.sweep = s;
  }
  Aggregate(r);
  return r;
}

TEST(Svg, ChartsAreCompleteDocuments) {
  const auto r = TinyCampaign();
  const auto cre = ComputeCre(r);
  for (const auto& svg : {RoadVsKSvg(r), BestKHistogramSvg(r), CreBarsSvg(cre)}) {
    EXPECT_EQ(svg.rfind("<svg", 0), 0u);
    EXPECT_NE(svg.find("</svg>"), std::string::npos);
    EXPECT_EQ(svg.find("nan"), std::string::npos);
  }
  EXPECT_NE(RoadVsKSvg(r).find("<polygon"), std::string::npos);
  EXPECT_NE(CreBarsSvg(cre).find(">A</text>"), std::string::npos);
  // Empty inputs still give a valid document.
  EXPECT_NE(RoadVsKSvg(CampaignResult{}).find("</svg>"), std::string::npos);
}

TEST(Csv, ExperimentAndKTables) {
  const auto r = TinyCampaign();
  EXPECT_EQ(ExperimentsCsv(r),
            "id,groups,maps,status,best_k,best_score,k10,k20\n"
            "01,B,,ok,20,0.3,0.1,0.3\n"
            "10,A,,ok,10,0.2,0.2,-0.1\n"
            "11,A+B,,ok,10,0.4,0.4,0.05\n");
  const std::string k = KStatsCsv(r);
  EXPECT_EQ(k.substr(0, k.find('\n')), "k,n,mean,sd,ci_low,ci_high,best_count");
  EXPECT_NE(k.find("\n10,3,"), std::string::npos);
  // Scores 0.3 / 0.2 / 0.4 for 01 / 10 / 11, median 0.3.
  const std::string cre = CreCsv(ComputeCre(r));
  EXPECT_EQ(cre.substr(0, cre.find('\n')), "group,cumulative_residual,inclusions");
  double a = 0, b = 0;
  ASSERT_EQ(std::sscanf(cre.c_str() + cre.find("\nA,") + 3, "%lf", &a), 1);
  ASSERT_EQ(std::sscanf(cre.c_str() + cre.find("\nB,") + 3, "%lf", &b), 1);
  EXPECT_NEAR(a, 0.0, 1e-15);
  EXPECT_NEAR(b, 0.1, 1e-15);
  EXPECT_NE(cre.find(",2\nB,"), std::string::npos);
}

TEST(Csv, NumbersRoundTrip) {
  CampaignResult r = TinyCampaign();
  r.experiments[1].sweep->scores[0].combined = 0.1 + 0.2;
  const std::string csv = ExperimentsCsv(r);
  EXPECT_NE(csv.find("0.30000000000000004"), std::string::npos);
}

TEST(CreJson, RoundTrips) {
  const auto cre = ComputeCre(TinyCampaign());
  const auto back = CreFromJson(CreJson(cre));
  EXPECT_EQ(back.group_codes, cre.group_codes);
  EXPECT_EQ(back.residual, cre.residual);
  EXPECT_EQ(back.inclusion_count, cre.inclusion_count);
  EXPECT_EQ(back.median, cre.median);
  EXPECT_EQ(CreFromJson(Json{{"cre", CreJson(cre)}}).residual, cre.residual);
  EXPECT_THROW(CreFromJson(Json{{"group_codes", 3}}), Error);
}

TEST(KGrid, TextForms) {
  EXPECT_EQ(ParseKGrid("15:45").size(), 31u);
  EXPECT_EQ(ParseKGrid("15:45:5"), (std::vector<double>{15, 20, 25, 30, 35, 40, 45}));
  EXPECT_EQ(ParseKGrid("10,20,30"), (std::vector<double>{10, 20, 30}));
  EXPECT_EQ(ParseKGrid("19"), (std::vector<double>{19}));
  EXPECT_EQ(ParseKGrid("0.5:1.5:0.5"), (std::vector<double>{0.5, 1.0, 1.5}));
  for (const char* bad : {"", "a:b", "1:2:3:4", "5:10:0", "0:10", "10,101", "x"}) {
    EXPECT_THROW(ParseKGrid(bad), Error) << bad;
  }
}

TEST(KGrid, JsonForms) {
  EXPECT_EQ(KGridFromJson(Json::parse("[5, 15]")), (std::vector<double>{5, 15}));
  EXPECT_EQ(KGridFromJson(Json::parse(R"({"first": 10, "last": 30, "step": 10})")),
            (std::vector<double>{10, 20, 30}));
  EXPECT_EQ(KGridFromJson(Json("20:30:10")), (std::vector<double>{20, 30}));
  EXPECT_THROW(KGridFromJson(Json(3)), Error);
  EXPECT_THROW(KGridFromJson(Json::array()), Error);
}

TEST(Workers, EnvironmentOverridesFallback) {
  ::unsetenv("CAMFORGE_WORKERS");
  EXPECT_EQ(WorkersFromEnvironment(3), 3u);
  ::setenv("CAMFORGE_WORKERS", "5", 1);
  EXPECT_EQ(WorkersFromEnvironment(3), 5u);
  ::setenv("CAMFORGE_WORKERS", "0", 1);
  EXPECT_THROW(WorkersFromEnvironment(3), Error);
  ::setenv("CAMFORGE_WORKERS", "4x", 1);
  EXPECT_THROW(WorkersFromEnvironment(3), Error);
  ::unsetenv("CAMFORGE_WORKERS");
}

class BundleTest : public ::testing::Test {
 protected:
  BundleTest() : dir_("bundle_" + std::string(::testing::UnitTest::GetInstance()
                                                  ->current_test_info()
                                                  ->name())) {
    DemoOptions o;
    o.size = 16;
    WriteDemoBundle(dir_.path(), o);
  }
  template <typename F>
  void Edit(const std::string& name, F&& f) {
    Json j = ReadJsonFile(dir_.path() / name);
    f(j);
    WriteFileAtomic(dir_.path() / name, Dump(j));
  }
  TempDir dir_;
};

TEST_F(BundleTest, LoadsDemoBundle) {
  const Bundle b = LoadBundle(dir_.path());
  EXPECT_EQ(b.labels, DemoMapLabels());
  EXPECT_EQ(b.maps.size(), b.labels.size());
  EXPECT_EQ(b.image.channels(), 3u);
  EXPECT_EQ(b.image.mean().size(), 3u);
  EXPECT_EQ(b.model, "synthetic-region");
  const auto oracle = BundleOracle(b);
  EXPECT_EQ(oracle.oracle->class_count(), 2u);
  EXPECT_GT(oracle.oracle->Predict(b.image)[0], 0.8);
  EXPECT_EQ(b.maps.at("GradCAM").label(), "GradCAM");
  // Same bundle through its manifest file.
  EXPECT_EQ(LoadBundle(dir_.path() / "manifest.json").labels, b.labels);
}

TEST_F(BundleTest, InvalidMapsAreSkippedNotRead) {
  Edit("manifest.json", [](Json& j) {
    j["invalid"] = {"ScoreCAM"};
    j["maps"]["ScoreCAM"] = "maps/does_not_exist.camm";
  });
  const Bundle b = LoadBundle(dir_.path());
  EXPECT_EQ(b.maps.count("ScoreCAM"), 0u);
  EXPECT_EQ(b.labels.size(), DemoMapLabels().size());
  EXPECT_EQ(BundleMaps(b, {"GradCAM", "ScoreCAM"}).size(), 1u);
  EXPECT_THROW(BundleMaps(b, {"ScoreCAM"}), Error);
  EXPECT_THROW(BundleMaps(b, {"Nope"}), Error);
}

TEST_F(BundleTest, MissingFieldsAreNamed) {
  for (const char* field : {"image", "class_id", "maps"}) {
    TempDir copy(std::string("copy_") + field);
    fs::copy(dir_.path(), copy.path(), fs::copy_options::recursive |
                                           fs::copy_options::overwrite_existing);
    Json j = ReadJsonFile(copy.path() / "manifest.json");
    j.erase(field);
    WriteFileAtomic(copy.path() / "manifest.json", Dump(j));
    try {
      LoadBundle(copy.path());
      ADD_FAILURE() << field;
    } catch (const Error& e) {
      EXPECT_NE(std::string(e.what()).find(std::string("'") + field + "'"),
                std::string::npos)
          << e.what();
    }
  }
}

TEST_F(BundleTest, MapShapeMustMatchImage) {
  WriteMap(dir_.path() / "maps/GradCAM.camm", ActivationMap::Zeros(8, 8));
  EXPECT_THROW(LoadBundle(dir_.path()), Error);
}

TEST_F(BundleTest, OracleKinds) {
  const auto base = dir_.path();
  EXPECT_THROW(LoadOracle(Json{{"kind", "magic"}}, base, 16, 16), Error);
  EXPECT_THROW(LoadOracle(Json{{"kind", "constant"}, {"probabilities", {0.5, 0.6}}},
                          base, 16, 16),
               Error);
  EXPECT_THROW(LoadOracle(Json("missing.onnx"), base, 16, 16), Error);
  const auto c = LoadOracle(Json{{"kind", "constant"}, {"probabilities", {0.25, 0.75}}},
                            base, 16, 16);
  EXPECT_EQ(c.oracle->class_count(), 2u);
  EXPECT_EQ(c.description["kind"], "constant");
}

TEST_F(BundleTest, CampaignManifestResolvesGroups) {
  const auto m = LoadCampaignManifest(dir_.path() / "campaign.json");
  ASSERT_EQ(m.spec.groups.size(), 6u);
  EXPECT_EQ(m.spec.groups[0].code, "A");
  EXPECT_EQ(m.spec.groups[0].members,
            (std::vector<std::string>{"HiResCAM", "GradCAMElementwise"}));
  EXPECT_EQ(m.spec.k_grid, (std::vector<double>{15, 20, 25, 30, 35, 40, 45}));
  EXPECT_EQ(m.spec.seed, 7u);
  EXPECT_EQ(m.map_sources.at("GradCAM"), "maps/GradCAM.camm");

  const auto gh = LoadCampaignManifest(dir_.path() / "campaign.json",
                                       dir_.path() / "groups_gh.json");
  ASSERT_EQ(gh.spec.groups.size(), 8u);
  EXPECT_EQ(gh.spec.groups[7].members, (std::vector<std::string>{"RandomCAM"}));
  EXPECT_TRUE(IsValid(gh.spec.maps.at("RandomCAM")));
  // RandomCAM follows the manifest seed.
  const auto again = LoadCampaignManifest(dir_.path() / "campaign.json",
                                          dir_.path() / "groups_gh.json");
  EXPECT_TRUE(std::ranges::equal(again.spec.maps.at("RandomCAM").values(),
                                 gh.spec.maps.at("RandomCAM").values()));
}

TEST_F(BundleTest, CampaignManifestWithFilePathsAndNoBundle) {
  Json j = {{"image", "image.imgt"},
            {"class_id", 0},
            {"oracle", {{"kind", "constant"}, {"probabilities", {0.4, 0.6}}}},
            {"groups", {{"X", {"maps/GradCAM.camm"}}, {"Y", {"maps/LayerCAM.camm"}}}},
            {"k_grid", {20}}};
  WriteFileAtomic(dir_.path() / "plain.json", Dump(j));
  const auto m = LoadCampaignManifest(dir_.path() / "plain.json");
  EXPECT_EQ(m.spec.groups[1].members, (std::vector<std::string>{"LayerCAM"}));
  EXPECT_EQ(m.spec.workers, 1u);

  j["groups"]["Y"] = {"maps/missing.camm"};
  WriteFileAtomic(dir_.path() / "plain.json", Dump(j));
  try {
    LoadCampaignManifest(dir_.path() / "plain.json");
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kMissingMap);
  }
  j.erase("oracle");
  j["groups"]["Y"] = {"maps/LayerCAM.camm"};
  WriteFileAtomic(dir_.path() / "plain.json", Dump(j));
  try {
    LoadCampaignManifest(dir_.path() / "plain.json");
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("'oracle'"), std::string::npos);
  }
}

TEST_F(BundleTest, CampaignManifestRejectsBadValues) {
  const std::pair<const char*, Json> cases[] = {
      {"percentiles", Json::array({0, 50})},
      {"sigma", -1.0},
      {"workers", 0},
      {"cre_source", "mode"},
      {"k_grid", "0:5"},
      {"class_id", 9},
  };
  for (const auto& [field, value] : cases) {
    Edit("campaign.json", [&](Json& j) { j[field] = value; });
    EXPECT_THROW(LoadCampaignManifest(dir_.path() / "campaign.json"), Error) << field;
    WriteDemoBundle(dir_.path(), DemoOptions{16});
  }
  Edit("campaign.json", [](Json& j) {
    j["groups"] = {{"A", {"GradCAM"}}, {"B", {"GradCAM"}}};
  });
  EXPECT_THROW(LoadCampaignManifest(dir_.path() / "campaign.json"), Error);
}

}  // namespace
}  // namespace camforge::app
