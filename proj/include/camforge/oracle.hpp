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

#ifndef CAMFORGE_ORACLE_HPP_
#define CAMFORGE_ORACLE_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "camforge/core.hpp"

namespace camforge {

// Scores an image: returns post-softmax class probabilities. Implementations
// must be deterministic and safe to call concurrently through a const
// reference.
class ModelOracle {
 public:
  virtual ~ModelOracle() = default;
  virtual std::size_t class_count() const = 0;
  virtual std::vector<double> Predict(const ImageTensor& image) const = 0;
};

inline std::vector<double> SoftmaxProbabilities(std::span<const double> logits) {
  if (logits.empty()) {
    throw Error(ErrorCode::kEmptyInput, "empty logit vector");
  }
  const double peak = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - peak);
    total += p[i];
  }
  for (double& v : p) v /= total;
  return p;
}

// Ignores the image and always returns the same distribution.
class ConstantOracle final : public ModelOracle {
 public:
  explicit ConstantOracle(std::vector<double> probabilities)
      : probabilities_(std::move(probabilities)) {
    if (probabilities_.empty()) {
      throw Error(ErrorCode::kEmptyInput, "constant oracle needs classes");
    }
  }

  std::size_t class_count() const override { return probabilities_.size(); }
  std::vector<double> Predict(const ImageTensor&) const override {
    return probabilities_;
  }

 private:
  std::vector<double> probabilities_;
};

// Two-class synthetic model: logits [gain * (mean over region R and all
// channels - bias), 0], so class 0 has probability sigmoid(gain * (m - bias)).
// Its decision depends only on pixels inside R, which makes the ideal
// explanation known exactly.
class RegionOracle final : public ModelOracle {
 public:
  RegionOracle(std::size_t height, std::size_t width,
               std::vector<std::uint8_t> region, double gain, double bias)
      : height_(height),
        width_(width),
        region_(std::move(region)),
        gain_(gain),
        bias_(bias) {
    if (region_.size() != height_ * width_) {
      throw Error(ErrorCode::kDimensionMismatch, "region mask size mismatch");
    }
    region_size_ = static_cast<std::size_t>(
        std::count_if(region_.begin(), region_.end(),
                      [](std::uint8_t v) { return v != 0; }));
    if (region_size_ == 0) {
      throw Error(ErrorCode::kInvalidArgument, "region is empty");
    }
  }

  // Half-open rectangle [row_begin, row_end) x [col_begin, col_end).
  static RegionOracle Rectangle(std::size_t height, std::size_t width,
                                std::size_t row_begin, std::size_t row_end,
                                std::size_t col_begin, std::size_t col_end,
                                double gain, double bias) {
    std::vector<std::uint8_t> region(height * width, 0);
    for (std::size_t r = row_begin; r < std::min(row_end, height); ++r) {
      for (std::size_t c = col_begin; c < std::min(col_end, width); ++c) {
        region[r * width + c] = 1;
      }
    }
    return RegionOracle(height, width, std::move(region), gain, bias);
  }

  std::size_t class_count() const override { return 2; }

  double RegionMean(const ImageTensor& image) const {
    if (image.height() != height_ || image.width() != width_) {
      throw Error(ErrorCode::kDimensionMismatch,
                  "region oracle built for a different image size");
    }
    const auto v = image.values();
    const std::size_t pixels = height_ * width_;
    double sum = 0.0;
    for (std::size_t ch = 0; ch < image.channels(); ++ch) {
      for (std::size_t p = 0; p < pixels; ++p) {
        if (region_[p]) sum += v[ch * pixels + p];
      }
    }
    return sum / static_cast<double>(region_size_ * image.channels());
  }

  std::vector<double> Predict(const ImageTensor& image) const override {
    const double logits[2] = {gain_ * (RegionMean(image) - bias_), 0.0};
    return SoftmaxProbabilities(logits);
  }

  const std::vector<std::uint8_t>& region() const { return region_; }
  double gain() const { return gain_; }
  double bias() const { return bias_; }

 private:
  std::size_t height_;
  std::size_t width_;
  std::vector<std::uint8_t> region_;
  std::size_t region_size_ = 0;
  double gain_;
  double bias_;
};

}  // namespace camforge

#endif  // CAMFORGE_ORACLE_HPP_
