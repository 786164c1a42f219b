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

// Fundamental types shared by every module: activation maps, image tensors,
// pixel indices, normalization, validity filtering and top-k selection.

#ifndef CAMFORGE_CORE_HPP_
#define CAMFORGE_CORE_HPP_

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace camforge {

enum class ErrorCode {
  kInvalidArgument,
  kNonFiniteInput,
  kInvalidK,
  kEmptyInput,
  kDimensionMismatch,
  kAllPixelsMasked,
  kSolverDivergence,
  kClassOutOfRange,
  kTooManyGroups,
  kMissingMap,
  kGroupTableMismatch,
  kIo,
  kFormat,
  kUnsupportedModel,
};

inline const char* ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kNonFiniteInput: return "NonFiniteInput";
    case ErrorCode::kInvalidK: return "InvalidK";
    case ErrorCode::kEmptyInput: return "EmptyInput";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kAllPixelsMasked: return "AllPixelsMasked";
    case ErrorCode::kSolverDivergence: return "SolverDivergence";
    case ErrorCode::kClassOutOfRange: return "ClassOutOfRange";
    case ErrorCode::kTooManyGroups: return "TooManyGroups";
    case ErrorCode::kMissingMap: return "MissingMap";
    case ErrorCode::kGroupTableMismatch: return "GroupTableMismatch";
    case ErrorCode::kIo: return "Io";
    case ErrorCode::kFormat: return "Format";
    case ErrorCode::kUnsupportedModel: return "UnsupportedModel";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(ErrorCodeName(code)) + ": " + message),
        code_(code),
        message_(message) {}

  ErrorCode code() const { return code_; }
  // Message without the code prefix.
  const std::string& message() const { return message_; }

 private:
  ErrorCode code_;
  std::string message_;
};

struct PixelIndex {
  std::size_t row = 0;
  std::size_t col = 0;

  auto operator<=>(const PixelIndex&) const = default;
};

// H x W grid of activations stored row-major. Immutable once built.
class ActivationMap {
 public:
  ActivationMap() = default;

  ActivationMap(std::size_t height, std::size_t width,
                std::vector<double> values, std::string label = {})
      : height_(height),
        width_(width),
        values_(std::move(values)),
        label_(std::move(label)) {
    if (height_ == 0 || width_ == 0) {
      throw Error(ErrorCode::kInvalidArgument,
                  "activation map dimensions must be positive");
    }
    if (values_.size() != height_ * width_) {
      throw Error(ErrorCode::kDimensionMismatch,
                  "activation map has " + std::to_string(values_.size()) +
                      " values, expected " +
                      std::to_string(height_ * width_));
    }
  }

  static ActivationMap Zeros(std::size_t height, std::size_t width,
                             std::string label = {}) {
    return ActivationMap(height, width,
                         std::vector<double>(height * width, 0.0),
                         std::move(label));
  }

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t size() const { return values_.size(); }
  std::span<const double> values() const { return values_; }
  const std::string& label() const { return label_; }

  double operator()(std::size_t row, std::size_t col) const {
    return values_[row * width_ + col];
  }
  double operator[](std::size_t flat) const { return values_[flat]; }

  bool SameShape(const ActivationMap& other) const {
    return height_ == other.height_ && width_ == other.width_;
  }

  // Same shape and label, new values.
  ActivationMap WithValues(std::vector<double> values) const {
    return ActivationMap(height_, width_, std::move(values), label_);
  }
  ActivationMap WithLabel(std::string label) const {
    return ActivationMap(height_, width_, values_, std::move(label));
  }

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<double> values_;
  std::string label_;
};

// C x H x W planar float image, plus the per-channel mean/std that produced
// it (kept for rendering; the engine itself works in normalized space).
class ImageTensor {
 public:
  ImageTensor() = default;

  ImageTensor(std::size_t channels, std::size_t height, std::size_t width,
              std::vector<float> values, std::vector<double> mean = {},
              std::vector<double> stddev = {})
      : channels_(channels),
        height_(height),
        width_(width),
        values_(std::move(values)),
        mean_(std::move(mean)),
        stddev_(std::move(stddev)) {
    if (channels_ == 0 || height_ == 0 || width_ == 0) {
      throw Error(ErrorCode::kInvalidArgument,
                  "image dimensions must be positive");
    }
    if (values_.size() != channels_ * height_ * width_) {
      throw Error(ErrorCode::kDimensionMismatch,
                  "image has " + std::to_string(values_.size()) +
                      " values, expected " +
                      std::to_string(channels_ * height_ * width_));
    }
    for (const float v : values_) {
      if (!std::isfinite(v)) {
        throw Error(ErrorCode::kNonFiniteInput, "image contains NaN/Inf");
      }
    }
  }

  std::size_t channels() const { return channels_; }
  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t pixel_count() const { return height_ * width_; }
  std::span<const float> values() const { return values_; }
  const std::vector<double>& mean() const { return mean_; }
  const std::vector<double>& stddev() const { return stddev_; }

  float at(std::size_t channel, std::size_t row, std::size_t col) const {
    return values_[(channel * height_ + row) * width_ + col];
  }

  ImageTensor WithValues(std::vector<float> values) const {
    return ImageTensor(channels_, height_, width_, std::move(values), mean_,
                       stddev_);
  }

 private:
  std::size_t channels_ = 0;
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<float> values_;
  std::vector<double> mean_;
  std::vector<double> stddev_;
};

inline bool AllFinite(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(),
                     [](double v) { return std::isfinite(v); });
}

// (v - min) / (max - min); a constant map becomes all-zero.
inline ActivationMap Normalize(const ActivationMap& map) {
  const auto values = map.values();
  if (!AllFinite(values)) {
    throw Error(ErrorCode::kNonFiniteInput,
                "map '" + map.label() + "' contains NaN/Inf");
  }
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it;
  const double range = *hi_it - lo;
  std::vector<double> out(values.size(), 0.0);
  if (range > 0.0) {
    for (std::size_t i = 0; i < values.size(); ++i) {
      out[i] = (values[i] - lo) / range;
    }
  }
  return map.WithValues(std::move(out));
}

// A map is usable iff it is finite everywhere and not identically zero.
inline bool IsValid(const ActivationMap& map) {
  const auto values = map.values();
  if (values.empty() || !AllFinite(values)) return false;
  return std::any_of(values.begin(), values.end(),
                     [](double v) { return v != 0.0; });
}

inline std::vector<ActivationMap> FilterValid(
    std::span<const ActivationMap> maps) {
  std::vector<ActivationMap> kept;
  for (const auto& m : maps) {
    if (IsValid(m)) kept.push_back(m);
  }
  return kept;
}

inline void CheckPercent(double k_percent) {
  if (!(k_percent > 0.0 && k_percent <= 100.0)) {
    throw Error(ErrorCode::kInvalidK,
                "k must lie in (0, 100], got " + std::to_string(k_percent));
  }
}

// Number of pixels kept at k percent: ceil(k/100 * n), at least one.
inline std::size_t RetainedCount(double k_percent, std::size_t pixel_count) {
  CheckPercent(k_percent);
  // k * n first so integer k and n give an exactly representable product.
  const double raw = std::ceil(k_percent * static_cast<double>(pixel_count) /
                               100.0);
  const auto count = static_cast<std::size_t>(raw);
  return std::clamp<std::size_t>(count, 1, pixel_count);
}

// Orders pixels from most to least relevant: value descending, ties by
// ascending row-major index. Taking the tail of this order gives the least
// relevant pixels with the mirrored tie-break (ascending value, descending
// index).
inline std::vector<std::size_t> RankPixels(std::span<const double> values) {
  if (!AllFinite(values)) {
    throw Error(ErrorCode::kNonFiniteInput, "cannot rank NaN/Inf values");
  }
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (values[a] != values[b]) return values[a] > values[b];
    return a < b;
  });
  return order;
}

// Flat indices of the `count` highest values (same tie rule as RankPixels),
// returned in ascending index order.
inline std::vector<std::size_t> TopIndices(std::span<const double> values,
                                           std::size_t count) {
  if (!AllFinite(values)) {
    throw Error(ErrorCode::kNonFiniteInput, "cannot rank NaN/Inf values");
  }
  count = std::min(count, values.size());
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto before = [&](std::size_t a, std::size_t b) {
    if (values[a] != values[b]) return values[a] > values[b];
    return a < b;
  };
  if (count < order.size()) {
    std::nth_element(order.begin(), order.begin() + count, order.end(),
                     before);
  }
  order.resize(count);
  std::sort(order.begin(), order.end());
  return order;
}

inline std::vector<PixelIndex> TopKMask(const ActivationMap& map,
                                        double k_percent) {
  const std::size_t count = RetainedCount(k_percent, map.size());
  std::vector<PixelIndex> mask;
  mask.reserve(count);
  for (const std::size_t flat : TopIndices(map.values(), count)) {
    mask.push_back({flat / map.width(), flat % map.width()});
  }
  return mask;
}

inline void CheckSameShape(std::span<const ActivationMap> maps) {
  if (maps.empty()) {
    throw Error(ErrorCode::kEmptyInput, "no activation maps given");
  }
  for (const auto& m : maps) {
    if (!m.SameShape(maps.front())) {
      throw Error(ErrorCode::kDimensionMismatch,
                  "map '" + m.label() + "' is " + std::to_string(m.height()) +
                      "x" + std::to_string(m.width()) + ", expected " +
                      std::to_string(maps.front().height()) + "x" +
                      std::to_string(maps.front().width()));
    }
  }
}

}  // namespace camforge

#endif  // CAMFORGE_CORE_HPP_
