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

// The camforge command-line driver.
//
//   camforge fuse      --bundle B --mode consensus|average|weighted --out F
//   camforge road      --bundle B --map LABEL|FILE
//   camforge sweep     --bundle B [--single LABEL] [--k-grid 15:45]
//   camforge campaign  --manifest M --out DIR [--groups G] [--workers N]
//   camforge cre       --reports R1 R2 ... [--out F]
//   camforge render    --bundle B --out PNG [--maps ...] [--extra FILE ...]
//
// Exit codes: 0 success, 2 bad input (arguments, manifests, files), 3 a
// computation or output step failed.

#ifndef CAMFORGE_APP_CLI_HPP_
#define CAMFORGE_APP_CLI_HPP_

#include <ostream>
#include <string>
#include <vector>

namespace camforge::app {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 2;
inline constexpr int kExitCompute = 3;

// `args` excludes the program name.
int RunCli(const std::vector<std::string>& args, std::ostream& out,
           std::ostream& err);

}  // namespace camforge::app

#endif  // CAMFORGE_APP_CLI_HPP_
