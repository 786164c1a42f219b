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

// Figures: SVG line/bar charts and PNG heat-map overlays.

#ifndef CAMFORGE_APP_CHARTS_HPP_
#define CAMFORGE_APP_CHARTS_HPP_

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "camforge/core.hpp"
#include "camforge/cre.hpp"
#include "camforge/ensemble.hpp"

namespace camforge::app {

// Perceptually uniform ramp (viridis), t clamped to [0, 1].
std::array<std::uint8_t, 3> Viridis(double t);

// Mean ROAD over experiments against k, with the 95% band.
std::string RoadVsKSvg(const CampaignResult& result);
// How often each k was an experiment's best threshold.
std::string BestKHistogramSvg(const CampaignResult& result);
// Signed horizontal bars of cumulative residuals.
std::string CreBarsSvg(const CreReport& report);

struct RgbImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> rgb;  // row-major, 3 bytes per pixel
};

// Undoes the recorded normalization (when present) to get displayable
// intensities; otherwise rescales the tensor to [0, 1].
RgbImage DisplayImage(const ImageTensor& image);
// Alpha-blends the min-max normalized map over the image.
RgbImage Overlay(const ImageTensor& image, const ActivationMap& map,
                 double alpha = 0.5);
// Tiles left to right with a white gap.
RgbImage SideBySide(const std::vector<RgbImage>& tiles, std::size_t gap = 4);

void WritePng(const std::filesystem::path& path, const RgbImage& image);

}  // namespace camforge::app

#endif  // CAMFORGE_APP_CHARTS_HPP_
