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

#ifndef CAMFORGE_CAMFORGE_HPP_
#define CAMFORGE_CAMFORGE_HPP_

#include "camforge/adaptive.hpp"
#include "camforge/core.hpp"
#include "camforge/cre.hpp"
#include "camforge/ensemble.hpp"
#include "camforge/fusion.hpp"
#include "camforge/imputation.hpp"
#include "camforge/map_io.hpp"
#include "camforge/oracle.hpp"
#include "camforge/random.hpp"
#include "camforge/road.hpp"

#endif  // CAMFORGE_CAMFORGE_HPP_
