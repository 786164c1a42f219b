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

// Binary interchange formats.
//
//   CAMM: "CAMM" | u32 height | u32 width | H*W f32 (row-major)
//   IMGT: "IMGT" | u32 channels | u32 height | u32 width | C*H*W f32 (planar)
//
// All integers and floats are little-endian.

#ifndef CAMFORGE_MAP_IO_HPP_
#define CAMFORGE_MAP_IO_HPP_

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <vector>

#include "camforge/core.hpp"

namespace camforge {
namespace io_internal {

inline void AppendU32(std::vector<char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline void AppendF32(std::vector<char>& out, float f) {
  AppendU32(out, std::bit_cast<std::uint32_t>(f));
}

inline std::uint32_t ReadU32(std::string_view bytes, std::size_t offset) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(
             static_cast<unsigned char>(bytes[offset + i]))
         << (8 * i);
  }
  return v;
}

inline float ReadF32(std::string_view bytes, std::size_t offset) {
  return std::bit_cast<float>(ReadU32(bytes, offset));
}

inline std::string Slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::kIo, "cannot open '" + path.string() + "'");
  }
  return std::string(std::istreambuf_iterator<char>(in), {});
}

inline void Spit(const std::filesystem::path& path,
                 const std::vector<char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw Error(ErrorCode::kIo, "cannot write '" + path.string() + "'");
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) {
    throw Error(ErrorCode::kIo, "short write to '" + path.string() + "'");
  }
}

inline std::uint32_t CheckedU32(std::size_t v, const char* what) {
  if (v > 0xFFFFFFFFu) {
    throw Error(ErrorCode::kFormat, std::string(what) + " exceeds u32");
  }
  return static_cast<std::uint32_t>(v);
}

}  // namespace io_internal

inline constexpr std::string_view kMapMagic = "CAMM";
inline constexpr std::string_view kImageMagic = "IMGT";

inline std::vector<char> EncodeMap(const ActivationMap& map) {
  using namespace io_internal;
  std::vector<char> out(kMapMagic.begin(), kMapMagic.end());
  out.reserve(12 + 4 * map.size());
  AppendU32(out, CheckedU32(map.height(), "height"));
  AppendU32(out, CheckedU32(map.width(), "width"));
  for (const double v : map.values()) AppendF32(out, static_cast<float>(v));
  return out;
}

inline ActivationMap DecodeMap(std::string_view bytes, std::string label = {}) {
  using namespace io_internal;
  if (bytes.size() < 12 || bytes.substr(0, 4) != kMapMagic) {
    throw Error(ErrorCode::kFormat, "not a CAMM map (bad magic or header)");
  }
  const std::uint64_t h = ReadU32(bytes, 4);
  const std::uint64_t w = ReadU32(bytes, 8);
  const std::uint64_t expected = 12 + 4 * h * w;
  if (bytes.size() != expected) {
    throw Error(ErrorCode::kFormat,
                "CAMM size mismatch: " + std::to_string(bytes.size()) +
                    " bytes, header implies " + std::to_string(expected));
  }
  std::vector<double> values(h * w);
  for (std::size_t i = 0; i < values.size(); ++i) {
    values[i] = ReadF32(bytes, 12 + 4 * i);
  }
  return ActivationMap(h, w, std::move(values), std::move(label));
}

inline void WriteMap(const std::filesystem::path& path,
                     const ActivationMap& map) {
  io_internal::Spit(path, EncodeMap(map));
}

// The label defaults to the file stem.
inline ActivationMap ReadMap(const std::filesystem::path& path) {
  try {
    return DecodeMap(io_internal::Slurp(path), path.stem().string());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kIo) throw;
    throw Error(e.code(), path.string() + ": " + e.message());
  }
}

inline std::vector<char> EncodeImage(const ImageTensor& image) {
  using namespace io_internal;
  std::vector<char> out(kImageMagic.begin(), kImageMagic.end());
  out.reserve(16 + 4 * image.values().size());
  AppendU32(out, CheckedU32(image.channels(), "channels"));
  AppendU32(out, CheckedU32(image.height(), "height"));
  AppendU32(out, CheckedU32(image.width(), "width"));
  for (const float v : image.values()) AppendF32(out, v);
  return out;
}

inline ImageTensor DecodeImage(std::string_view bytes,
                               std::vector<double> mean = {},
                               std::vector<double> stddev = {}) {
  using namespace io_internal;
  if (bytes.size() < 16 || bytes.substr(0, 4) != kImageMagic) {
    throw Error(ErrorCode::kFormat, "not an IMGT image (bad magic or header)");
  }
  const std::uint64_t c = ReadU32(bytes, 4);
  const std::uint64_t h = ReadU32(bytes, 8);
  const std::uint64_t w = ReadU32(bytes, 12);
  const std::uint64_t expected = 16 + 4 * c * h * w;
  if (bytes.size() != expected) {
    throw Error(ErrorCode::kFormat,
                "IMGT size mismatch: " + std::to_string(bytes.size()) +
                    " bytes, header implies " + std::to_string(expected));
  }
  std::vector<float> values(c * h * w);
  for (std::size_t i = 0; i < values.size(); ++i) {
    values[i] = ReadF32(bytes, 16 + 4 * i);
  }
  return ImageTensor(c, h, w, std::move(values), std::move(mean),
                     std::move(stddev));
}

inline void WriteImage(const std::filesystem::path& path,
                       const ImageTensor& image) {
  io_internal::Spit(path, EncodeImage(image));
}

inline ImageTensor ReadImage(const std::filesystem::path& path,
                             std::vector<double> mean = {},
                             std::vector<double> stddev = {}) {
  try {
    return DecodeImage(io_internal::Slurp(path), std::move(mean),
                       std::move(stddev));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kIo) throw;
    throw Error(e.code(), path.string() + ": " + e.message());
  }
}

}  // namespace camforge

#endif  // CAMFORGE_MAP_IO_HPP_
