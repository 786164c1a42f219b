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

#ifndef CAMFORGE_RANDOM_HPP_
#define CAMFORGE_RANDOM_HPP_

#include <cstdint>
#include <initializer_list>
#include <string_view>

namespace camforge {

// SplitMix64 finalizer.
constexpr std::uint64_t MixBits(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Child seed for a numbered stream. Streams derived from the same parent with
// different counters are independent; the mapping is stable across runs.
constexpr std::uint64_t DeriveSeed(std::uint64_t parent, std::uint64_t stream) {
  return MixBits(MixBits(parent) ^ MixBits(stream + 0x632BE59BD9B4E019ull));
}

constexpr std::uint64_t DeriveSeed(std::uint64_t parent, std::string_view tag) {
  std::uint64_t h = 0xCBF29CE484222325ull;  // FNV-1a
  for (const char c : tag) {
    h = (h ^ static_cast<unsigned char>(c)) * 0x100000001B3ull;
  }
  return DeriveSeed(parent, h);
}

}  // namespace camforge

#endif  // CAMFORGE_RANDOM_HPP_
