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

// Writes the synthetic demo bundle and campaign manifests.

#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "camforge/app/demo.hpp"
#include "camforge/core.hpp"

int main(int argc, char** argv) {
  CLI::App app{"camforge-demo: write a synthetic bundle and campaign manifests"};
  std::string dir;
  camforge::app::DemoOptions options;
  app.add_option("dir", dir, "output directory")->required();
  app.add_option("--size", options.size, "image side in pixels");
  app.add_option("--seed", options.seed, "seed for image texture, maps and noise");
  app.add_option("--k-grid", options.k_grid, "campaign k grid");
  CLI11_PARSE(app, argc, argv);
  try {
    camforge::app::WriteDemoBundle(dir, options);
  } catch (const std::exception& e) {
    std::cerr << "camforge-demo: " << e.what() << "\n";
    return 2;
  }
  std::cout << dir << "\n";
  return 0;
}
