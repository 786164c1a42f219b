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

#include "camforge/app/charts.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <sstream>

#include "camforge/fusion.hpp"

namespace camforge::app {
namespace {

constexpr double kWidth = 640, kHeight = 400;
constexpr double kLeft = 70, kRight = 20, kTop = 40, kBottom = 50;

std::string Fmt(double v, int precision = 4) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*g", precision, v);
  return buf;
}

std::string Escape(const std::string& s) {
  std::string out;
  for (const char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Axes {
  double x0, x1, y0, y1;
  double X(double x) const {
    return kLeft + (x - x0) / (x1 - x0) * (kWidth - kLeft - kRight);
  }
  double Y(double y) const {
    return kHeight - kBottom - (y - y0) / (y1 - y0) * (kHeight - kTop - kBottom);
  }
};

void Pad(double& lo, double& hi) {
  if (hi - lo < 1e-12) {
    lo -= 0.5;
    hi += 0.5;
  } else {
    const double m = 0.05 * (hi - lo);
    lo -= m;
    hi += m;
  }
}

std::string Header(const std::string& title) {
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth
    << "\" height=\"" << kHeight << "\" font-family=\"sans-serif\" "
    << "font-size=\"12\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" "
    << "font-size=\"15\">" << Escape(title) << "</text>\n";
  return s.str();
}

std::string Frame(const Axes& a, const std::string& xlabel,
                  const std::string& ylabel) {
  std::ostringstream s;
  s << "<g stroke=\"black\" fill=\"none\">"
    << "<line x1=\"" << kLeft << "\" y1=\"" << kHeight - kBottom << "\" x2=\""
    << kWidth - kRight << "\" y2=\"" << kHeight - kBottom << "\"/>"
    << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft
    << "\" y2=\"" << kHeight - kBottom << "\"/></g>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = a.x0 + (a.x1 - a.x0) * i / 4.0;
    const double yv = a.y0 + (a.y1 - a.y0) * i / 4.0;
    s << "<text x=\"" << Fmt(a.X(xv)) << "\" y=\"" << kHeight - kBottom + 16
      << "\" text-anchor=\"middle\">" << Fmt(xv, 3) << "</text>\n"
      << "<text x=\"" << kLeft - 6 << "\" y=\"" << Fmt(a.Y(yv) + 4)
      << "\" text-anchor=\"end\">" << Fmt(yv, 3) << "</text>\n";
  }
  s << "<text x=\"" << (kLeft + kWidth - kRight) / 2 << "\" y=\""
    << kHeight - 12 << "\" text-anchor=\"middle\">" << Escape(xlabel)
    << "</text>\n"
    << "<text transform=\"translate(16," << (kTop + kHeight - kBottom) / 2
    << ") rotate(-90)\" text-anchor=\"middle\">" << Escape(ylabel)
    << "</text>\n";
  return s.str();
}

}  // namespace

std::array<std::uint8_t, 3> Viridis(double t) {
  // matplotlib's viridis sampled at 65 evenly spaced points.
  static constexpr std::uint8_t kTable[65][3] = {
      {68, 1, 84}, {70, 7, 90}, {71, 13, 96}, {71, 19, 101},
      {72, 24, 106}, {72, 29, 111}, {72, 35, 116}, {72, 40, 120},
      {71, 45, 123}, {70, 50, 126}, {69, 55, 129}, {68, 59, 132},
      {66, 64, 134}, {64, 69, 136}, {62, 73, 137}, {61, 78, 138},
      {59, 82, 139}, {57, 86, 140}, {55, 91, 141}, {53, 95, 141},
      {51, 99, 141}, {49, 103, 142}, {47, 107, 142}, {46, 111, 142},
      {44, 114, 142}, {42, 118, 142}, {41, 122, 142}, {39, 126, 142},
      {38, 130, 142}, {37, 133, 142}, {35, 137, 142}, {34, 141, 141},
      {33, 145, 140}, {31, 148, 140}, {31, 152, 139}, {30, 156, 137},
      {31, 160, 136}, {32, 163, 134}, {34, 167, 133}, {37, 171, 130},
      {40, 174, 128}, {45, 178, 125}, {50, 182, 122}, {56, 185, 119},
      {63, 188, 115}, {70, 192, 111}, {78, 195, 107}, {86, 198, 103},
      {94, 201, 98}, {103, 204, 92}, {112, 207, 87}, {122, 209, 81},
      {132, 212, 75}, {142, 214, 69}, {152, 216, 62}, {162, 218, 55},
      {173, 220, 48}, {184, 222, 41}, {194, 223, 35}, {205, 225, 29},
      {216, 226, 25}, {226, 228, 24}, {236, 229, 27}, {246, 230, 32},
      {253, 231, 37},
  };
  t = std::clamp(std::isfinite(t) ? t : 0.0, 0.0, 1.0);
  const double x = t * 64.0;
  const std::size_t i = std::min<std::size_t>(static_cast<std::size_t>(x), 63);
  const double f = x - static_cast<double>(i);
  std::array<std::uint8_t, 3> out{};
  for (int ch = 0; ch < 3; ++ch) {
    const double v = (1.0 - f) * kTable[i][ch] + f * kTable[i + 1][ch];
    out[ch] = static_cast<std::uint8_t>(std::lround(v));
  }
  return out;
}

std::string RoadVsKSvg(const CampaignResult& result) {
  std::vector<double> ks, mean, lo, hi;
  for (const auto& s : result.per_k) {
    if (s.score.n == 0) continue;
    ks.push_back(s.k);
    mean.push_back(s.score.mean);
    lo.push_back(s.score.ci_low);
    hi.push_back(s.score.ci_high);
  }
  std::ostringstream svg;
  svg << Header("Mean ROAD vs top-k threshold (95% band)");
  if (ks.empty()) return svg.str() + "</svg>\n";
  Axes a{ks.front(), ks.back(), *std::min_element(lo.begin(), lo.end()),
         *std::max_element(hi.begin(), hi.end())};
  if (a.x1 <= a.x0) {
    a.x0 -= 1;
    a.x1 += 1;
  }
  Pad(a.y0, a.y1);
  svg << Frame(a, "k (% of pixels retained)", "combined ROAD");
  svg << "<polygon fill=\"#3b528b\" fill-opacity=\"0.25\" stroke=\"none\" points=\"";
  for (std::size_t i = 0; i < ks.size(); ++i) {
    svg << Fmt(a.X(ks[i])) << "," << Fmt(a.Y(hi[i])) << " ";
  }
  for (std::size_t i = ks.size(); i-- > 0;) {
    svg << Fmt(a.X(ks[i])) << "," << Fmt(a.Y(lo[i])) << " ";
  }
  svg << "\"/>\n<polyline fill=\"none\" stroke=\"#3b528b\" stroke-width=\"2\" points=\"";
  for (std::size_t i = 0; i < ks.size(); ++i) {
    svg << Fmt(a.X(ks[i])) << "," << Fmt(a.Y(mean[i])) << " ";
  }
  svg << "\"/>\n</svg>\n";
  return svg.str();
}

std::string BestKHistogramSvg(const CampaignResult& result) {
  std::ostringstream svg;
  svg << Header("Best threshold frequency");
  if (result.per_k.empty()) return svg.str() + "</svg>\n";
  std::size_t peak = 1;
  for (const auto& s : result.per_k) peak = std::max(peak, s.best_count);
  const std::size_t n = result.per_k.size();
  Axes a{0, static_cast<double>(n), 0, static_cast<double>(peak)};
  a.y1 *= 1.05;
  svg << Frame(a, "k (% of pixels retained)", "experiments");
  const double slot = (kWidth - kLeft - kRight) / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& s = result.per_k[i];
    const double x = kLeft + slot * i + slot * 0.1;
    const double top = a.Y(static_cast<double>(s.best_count));
    svg << "<rect x=\"" << Fmt(x) << "\" y=\"" << Fmt(top) << "\" width=\""
        << Fmt(slot * 0.8) << "\" height=\"" << Fmt(kHeight - kBottom - top)
        << "\" fill=\"#21918c\"><title>k=" << Fmt(s.k) << ": " << s.best_count
        << "</title></rect>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

std::string CreBarsSvg(const CreReport& report) {
  std::ostringstream svg;
  svg << Header("Cumulative residual effect by CAM group");
  const std::size_t n = report.group_codes.size();
  if (n == 0) return svg.str() + "</svg>\n";
  double extent = 1e-12;
  for (const double r : report.residual) extent = std::max(extent, std::abs(r));
  const double mid = (kLeft + kWidth - kRight) / 2.0;
  const double half = (kWidth - kLeft - kRight) / 2.0;
  const double row = (kHeight - kTop - kBottom) / static_cast<double>(n);
  svg << "<line x1=\"" << mid << "\" y1=\"" << kTop << "\" x2=\"" << mid
      << "\" y2=\"" << kHeight - kBottom << "\" stroke=\"black\"/>\n";
  for (std::size_t g = 0; g < n; ++g) {
    const double r = report.residual[g];
    const double len = std::abs(r) / extent * half * 0.9;
    const double y = kTop + row * g + row * 0.15;
    svg << "<rect x=\"" << Fmt(r >= 0 ? mid : mid - len) << "\" y=\"" << Fmt(y)
        << "\" width=\"" << Fmt(len) << "\" height=\"" << Fmt(row * 0.7)
        << "\" fill=\"" << (r >= 0 ? "#d62728" : "#1f77b4") << "\"/>\n"
        << "<text x=\"" << kLeft - 6 << "\" y=\"" << Fmt(y + row * 0.45)
        << "\" text-anchor=\"end\">" << Escape(report.group_codes[g])
        << "</text>\n"
        << "<text x=\"" << Fmt(r >= 0 ? mid + len + 4 : mid - len - 4)
        << "\" y=\"" << Fmt(y + row * 0.45) << "\" text-anchor=\""
        << (r >= 0 ? "start" : "end") << "\">" << Fmt(r) << "</text>\n";
  }
  svg << "<text x=\"" << mid << "\" y=\"" << kHeight - 12
      << "\" text-anchor=\"middle\">sum of (score - campaign median)</text>\n";
  svg << "</svg>\n";
  return svg.str();
}

RgbImage DisplayImage(const ImageTensor& image) {
  const std::size_t h = image.height(), w = image.width(), c = image.channels();
  const auto v = image.values();
  const bool denormalize = image.mean().size() == c && image.stddev().size() == c;
  float lo = 0.0f, hi = 1.0f;
  if (!denormalize) {
    const auto [mn, mx] = std::minmax_element(v.begin(), v.end());
    lo = *mn;
    hi = *mx > *mn ? *mx : *mn + 1.0f;
  }
  RgbImage out{w, h, std::vector<std::uint8_t>(3 * h * w)};
  for (std::size_t p = 0; p < h * w; ++p) {
    for (std::size_t ch = 0; ch < 3; ++ch) {
      const std::size_t src = c >= 3 ? ch : 0;
      double x = v[src * h * w + p];
      x = denormalize ? x * image.stddev()[src] + image.mean()[src]
                      : (x - lo) / (hi - lo);
      out.rgb[3 * p + ch] =
          static_cast<std::uint8_t>(std::lround(std::clamp(x, 0.0, 1.0) * 255.0));
    }
  }
  return out;
}

RgbImage Overlay(const ImageTensor& image, const ActivationMap& map,
                 double alpha) {
  CheckMapMatchesImage(map, image);
  RgbImage out = DisplayImage(image);
  const ActivationMap heat = IsValid(map) ? Normalize(map) : map;
  for (std::size_t p = 0; p < heat.size(); ++p) {
    const double t = IsValid(map) ? heat[p] : 0.0;
    const auto color = Viridis(t);
    for (int ch = 0; ch < 3; ++ch) {
      const double blended =
          (1.0 - alpha) * out.rgb[3 * p + ch] + alpha * color[ch];
      out.rgb[3 * p + ch] = static_cast<std::uint8_t>(std::lround(blended));
    }
  }
  return out;
}

RgbImage SideBySide(const std::vector<RgbImage>& tiles, std::size_t gap) {
  RgbImage out;
  for (const auto& t : tiles) {
    out.width += t.width;
    out.height = std::max(out.height, t.height);
  }
  if (!tiles.empty()) out.width += gap * (tiles.size() - 1);
  out.rgb.assign(3 * out.width * out.height, 255);
  std::size_t x0 = 0;
  for (const auto& t : tiles) {
    for (std::size_t r = 0; r < t.height; ++r) {
      std::copy_n(t.rgb.begin() + 3 * r * t.width, 3 * t.width,
                  out.rgb.begin() + 3 * (r * out.width + x0));
    }
    x0 += t.width + gap;
  }
  return out;
}

void WritePng(const std::filesystem::path& path, const RgbImage& image) {
  if (image.width == 0 || image.height == 0) {
    throw Error(ErrorCode::kInvalidArgument, "empty image");
  }
  std::unique_ptr<FILE, int (*)(FILE*)> file(std::fopen(path.c_str(), "wb"),
                                             &std::fclose);
  if (!file) throw Error(ErrorCode::kIo, "cannot write '" + path.string() + "'");
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, nullptr);
    throw Error(ErrorCode::kIo, "libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorCode::kIo, "PNG encoding failed for '" + path.string() + "'");
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width),
               static_cast<png_uint_32>(image.height), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::size_t r = 0; r < image.height; ++r) {
    png_write_row(png, const_cast<png_bytep>(image.rgb.data() + 3 * r * image.width));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace camforge::app
