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

// Synthetic demo bundle: a scene whose class evidence lives in one known
// rectangle, a region oracle that only looks there, and CAM-like maps of
// varying quality (some favour a distractor object instead).

#ifndef CAMFORGE_APP_DEMO_HPP_
#define CAMFORGE_APP_DEMO_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace camforge::app {

struct DemoOptions {
  std::size_t size = 32;  // square image side
  std::uint64_t seed = 7;
  std::string k_grid = "15:45:5";
};

// Map labels written by WriteDemoBundle, in manifest order.
std::vector<std::string> DemoMapLabels();

// Writes image.imgt, maps/*.camm and manifest.json (the bundle), plus
// campaign.json (groups A-F over the bundle) and groups_gh.json (A-F plus
// G = EigenCAM and H = RandomCAM).
void WriteDemoBundle(const std::filesystem::path& dir,
                     const DemoOptions& options = {});

}  // namespace camforge::app

#endif  // CAMFORGE_APP_DEMO_HPP_
