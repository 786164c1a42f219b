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

// Model oracle backed by an ONNX graph.
//
// The graph is executed by a small built-in float32 interpreter that covers
// the operator set of exported image classifiers (convolutions, batch norm,
// pooling, dense/residual connections, linear heads). It takes one input of
// shape 1xCxHxW and yields 1xK logits; Predict applies softmax.

#ifndef CAMFORGE_ONNX_ORACLE_HPP_
#define CAMFORGE_ONNX_ORACLE_HPP_

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "camforge/core.hpp"
#include "camforge/oracle.hpp"

namespace camforge {

// Operators the interpreter can execute.
const std::vector<std::string>& SupportedOnnxOps();

class OnnxOracle final : public ModelOracle {
 public:
  // Both throw Error(kIo / kFormat / kUnsupportedModel).
  static OnnxOracle Load(const std::filesystem::path& path);
  static OnnxOracle FromBytes(std::string_view bytes);

  std::size_t class_count() const override;
  std::vector<double> Predict(const ImageTensor& image) const override;

  // Raw output of the graph for one image.
  std::vector<float> Logits(const ImageTensor& image) const;

  const std::string& input_name() const;
  const std::string& output_name() const;
  std::int64_t opset() const;

  struct Graph;

 private:
  explicit OnnxOracle(std::shared_ptr<const Graph> graph);
  std::shared_ptr<const Graph> graph_;
};

}  // namespace camforge

#endif  // CAMFORGE_ONNX_ORACLE_HPP_
