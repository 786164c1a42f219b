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

#include "camforge/onnx_oracle.hpp"

#include <google/protobuf/io/coded_stream.h>
#include <google/protobuf/io/zero_copy_stream_impl_lite.h>

#include <Eigen/Core>
#include <algorithm>
#include <bit>
#include <climits>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <iterator>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <unordered_map>
#include <utility>

#include "onnx.pb.h"

static_assert(std::endian::native == std::endian::little,
              "raw ONNX tensor data is little-endian");

namespace camforge {
namespace {

using Shape = std::vector<std::int64_t>;

struct Tensor {
  Shape shape;
  std::vector<float> f;
  std::vector<std::int64_t> i;
  bool is_int = false;
};

std::int64_t Numel(const Shape& shape) {
  std::int64_t n = 1;
  for (const auto d : shape) n *= d;
  return n;
}

std::string ShapeString(const Shape& shape) {
  std::string s = "[";
  for (std::size_t k = 0; k < shape.size(); ++k) {
    if (k) s += ",";
    s += std::to_string(shape[k]);
  }
  return s + "]";
}

[[noreturn]] void Unsupported(const std::string& what) {
  throw Error(ErrorCode::kUnsupportedModel, what);
}

[[noreturn]] void Malformed(const std::string& what) {
  throw Error(ErrorCode::kFormat, what);
}

Tensor FloatTensor(Shape shape, std::vector<float> values) {
  Tensor t;
  t.shape = std::move(shape);
  t.f = std::move(values);
  return t;
}

Tensor IntTensor(Shape shape, std::vector<std::int64_t> values) {
  Tensor t;
  t.shape = std::move(shape);
  t.i = std::move(values);
  t.is_int = true;
  return t;
}

template <typename T>
std::vector<T> RawValues(const std::string& raw, std::int64_t count) {
  if (raw.size() != static_cast<std::size_t>(count) * sizeof(T)) {
    Malformed("raw tensor data has " + std::to_string(raw.size()) + " bytes");
  }
  std::vector<T> out(count);
  std::memcpy(out.data(), raw.data(), raw.size());
  return out;
}

Tensor FromProto(const onnx::TensorProto& proto) {
  if (proto.data_location() == onnx::TensorProto::EXTERNAL) {
    Unsupported("tensor '" + proto.name() + "' uses external data");
  }
  Shape shape(proto.dims().begin(), proto.dims().end());
  const std::int64_t n = Numel(shape);
  const bool raw = proto.has_raw_data();
  Tensor t;
  switch (proto.data_type()) {
    case onnx::TensorProto::FLOAT:
      t = FloatTensor(shape, raw ? RawValues<float>(proto.raw_data(), n)
                                 : std::vector<float>(proto.float_data().begin(),
                                                      proto.float_data().end()));
      break;
    case onnx::TensorProto::DOUBLE: {
      const auto d = raw ? RawValues<double>(proto.raw_data(), n)
                         : std::vector<double>(proto.double_data().begin(),
                                               proto.double_data().end());
      t = FloatTensor(shape, std::vector<float>(d.begin(), d.end()));
      break;
    }
    case onnx::TensorProto::INT64:
      t = IntTensor(shape, raw ? RawValues<std::int64_t>(proto.raw_data(), n)
                               : std::vector<std::int64_t>(
                                     proto.int64_data().begin(),
                                     proto.int64_data().end()));
      break;
    case onnx::TensorProto::INT32: {
      const auto d = raw ? RawValues<std::int32_t>(proto.raw_data(), n)
                         : std::vector<std::int32_t>(proto.int32_data().begin(),
                                                     proto.int32_data().end());
      t = IntTensor(shape, std::vector<std::int64_t>(d.begin(), d.end()));
      break;
    }
    default:
      Unsupported("tensor '" + proto.name() + "' has unsupported data type " +
                  std::to_string(proto.data_type()));
  }
  const std::size_t stored = t.is_int ? t.i.size() : t.f.size();
  if (static_cast<std::int64_t>(stored) != n) {
    Malformed("tensor '" + proto.name() + "' holds " + std::to_string(stored) +
              " values for shape " + ShapeString(t.shape));
  }
  return t;
}

// Attribute access.

const onnx::AttributeProto* FindAttr(const onnx::NodeProto& node,
                                     std::string_view name) {
  for (const auto& a : node.attribute()) {
    if (a.name() == name) return &a;
  }
  return nullptr;
}

std::int64_t AttrInt(const onnx::NodeProto& node, std::string_view name,
                     std::int64_t fallback) {
  const auto* a = FindAttr(node, name);
  return a ? a->i() : fallback;
}

float AttrFloat(const onnx::NodeProto& node, std::string_view name,
                float fallback) {
  const auto* a = FindAttr(node, name);
  return a ? a->f() : fallback;
}

std::optional<Shape> AttrInts(const onnx::NodeProto& node,
                              std::string_view name) {
  const auto* a = FindAttr(node, name);
  if (!a) return std::nullopt;
  return Shape(a->ints().begin(), a->ints().end());
}

std::string AttrString(const onnx::NodeProto& node, std::string_view name,
                       std::string fallback) {
  const auto* a = FindAttr(node, name);
  return a ? a->s() : fallback;
}

std::int64_t NormalizeAxis(std::int64_t axis, std::size_t rank) {
  const auto r = static_cast<std::int64_t>(rank);
  if (axis < -r || axis >= r) {
    Malformed("axis " + std::to_string(axis) + " out of range for rank " +
              std::to_string(rank));
  }
  return axis < 0 ? axis + r : axis;
}

std::vector<std::int64_t> Strides(const Shape& shape) {
  std::vector<std::int64_t> s(shape.size(), 1);
  for (std::size_t k = shape.size(); k-- > 1;) s[k - 1] = s[k] * shape[k];
  return s;
}

// Elementwise with multidirectional broadcasting.

Shape BroadcastShape(const Shape& a, const Shape& b) {
  const std::size_t r = std::max(a.size(), b.size());
  Shape out(r);
  for (std::size_t k = 0; k < r; ++k) {
    const std::int64_t da = k < r - a.size() ? 1 : a[k - (r - a.size())];
    const std::int64_t db = k < r - b.size() ? 1 : b[k - (r - b.size())];
    if (da != db && da != 1 && db != 1) {
      Malformed("cannot broadcast " + ShapeString(a) + " with " +
                ShapeString(b));
    }
    out[k] = da == 1 ? db : da;
  }
  return out;
}

// Strides of `shape` viewed inside `out`, zero along broadcast dimensions.
std::vector<std::int64_t> BroadcastStrides(const Shape& shape,
                                           const Shape& out) {
  std::vector<std::int64_t> s(out.size(), 0);
  const auto own = Strides(shape);
  const std::size_t off = out.size() - shape.size();
  for (std::size_t k = 0; k < shape.size(); ++k) {
    s[k + off] = shape[k] == 1 ? 0 : own[k];
  }
  return s;
}

template <typename T, typename F>
std::vector<T> BroadcastApply(const Shape& sa, const std::vector<T>& a,
                              const Shape& sb, const std::vector<T>& b,
                              const Shape& out, F op) {
  const std::int64_t n = Numel(out);
  std::vector<T> result(n);
  if (sa == sb) {
    for (std::int64_t k = 0; k < n; ++k) result[k] = op(a[k], b[k]);
    return result;
  }
  if (b.size() == 1) {
    for (std::int64_t k = 0; k < n; ++k) result[k] = op(a[k], b[0]);
    if (sa == out) return result;
  }
  const auto stride_a = BroadcastStrides(sa, out);
  const auto stride_b = BroadcastStrides(sb, out);
  const std::size_t r = out.size();
  std::vector<std::int64_t> index(r, 0);
  std::int64_t ia = 0, ib = 0;
  for (std::int64_t k = 0; k < n; ++k) {
    result[k] = op(a[ia], b[ib]);
    for (std::size_t d = r; d-- > 0;) {
      ++index[d];
      ia += stride_a[d];
      ib += stride_b[d];
      if (index[d] < out[d]) break;
      ia -= stride_a[d] * out[d];
      ib -= stride_b[d] * out[d];
      index[d] = 0;
    }
  }
  return result;
}

template <typename Op>
Tensor Binary(const Tensor& a, const Tensor& b, Op op) {
  if (a.is_int != b.is_int) Malformed("mixed int/float operands");
  const Shape out = BroadcastShape(a.shape, b.shape);
  if (a.is_int) {
    return IntTensor(out, BroadcastApply(a.shape, a.i, b.shape, b.i, out, op));
  }
  return FloatTensor(out, BroadcastApply(a.shape, a.f, b.shape, b.f, out, op));
}

template <typename F>
Tensor Unary(const Tensor& x, F f) {
  if (x.is_int) Malformed("float operator applied to an int tensor");
  Tensor y = FloatTensor(x.shape, x.f);
  for (float& v : y.f) v = f(v);
  return y;
}

const Tensor& Need(const std::vector<const Tensor*>& in, std::size_t k,
                   const onnx::NodeProto& node) {
  if (k >= in.size() || in[k] == nullptr) {
    Malformed(node.op_type() + " node '" + node.name() + "' lacks input " +
              std::to_string(k));
  }
  return *in[k];
}

const Tensor* Optional(const std::vector<const Tensor*>& in, std::size_t k) {
  return k < in.size() ? in[k] : nullptr;
}

void CheckRank(const Tensor& t, std::size_t rank, const onnx::NodeProto& node) {
  if (t.shape.size() != rank || t.is_int) {
    Unsupported(node.op_type() + " on a " + std::to_string(t.shape.size()) +
                "-d tensor " + ShapeString(t.shape) + " (expected " +
                std::to_string(rank) + "-d float)");
  }
}

// Spatial geometry of one 2-d window operator.
struct Window {
  std::int64_t kh, kw, sh, sw, dh, dw;
  std::int64_t pt, pl, pb, pr;
  std::int64_t oh, ow;
};

Window MakeWindow(const onnx::NodeProto& node, std::int64_t h, std::int64_t w,
                  std::int64_t kh, std::int64_t kw, bool ceil_mode) {
  Window g{};
  g.kh = kh;
  g.kw = kw;
  const Shape strides = AttrInts(node, "strides").value_or(Shape{1, 1});
  const Shape dil = AttrInts(node, "dilations").value_or(Shape{1, 1});
  const Shape pads = AttrInts(node, "pads").value_or(Shape{0, 0, 0, 0});
  if (strides.size() != 2 || dil.size() != 2 || pads.size() != 4) {
    Unsupported(node.op_type() + " with non-2-d attributes");
  }
  g.sh = strides[0];
  g.sw = strides[1];
  g.dh = dil[0];
  g.dw = dil[1];
  g.pt = pads[0];
  g.pl = pads[1];
  g.pb = pads[2];
  g.pr = pads[3];
  const std::string auto_pad = AttrString(node, "auto_pad", "NOTSET");
  const std::int64_t eh = g.dh * (kh - 1) + 1;
  const std::int64_t ew = g.dw * (kw - 1) + 1;
  if (auto_pad == "SAME_UPPER" || auto_pad == "SAME_LOWER") {
    g.oh = (h + g.sh - 1) / g.sh;
    g.ow = (w + g.sw - 1) / g.sw;
    const std::int64_t th = std::max<std::int64_t>(0, (g.oh - 1) * g.sh + eh - h);
    const std::int64_t tw = std::max<std::int64_t>(0, (g.ow - 1) * g.sw + ew - w);
    const bool upper = auto_pad == "SAME_UPPER";
    g.pt = upper ? th / 2 : th - th / 2;
    g.pb = th - g.pt;
    g.pl = upper ? tw / 2 : tw - tw / 2;
    g.pr = tw - g.pl;
    return g;
  }
  if (auto_pad == "VALID") {
    g.pt = g.pl = g.pb = g.pr = 0;
  } else if (auto_pad != "NOTSET" && !auto_pad.empty()) {
    Unsupported(node.op_type() + " auto_pad " + auto_pad);
  }
  auto extent = [&](std::int64_t in, std::int64_t pad0, std::int64_t pad1,
                    std::int64_t e, std::int64_t s) {
    const std::int64_t span = in + pad0 + pad1 - e;
    if (span < 0) Malformed(node.op_type() + " window larger than input");
    std::int64_t out = (ceil_mode ? (span + s - 1) / s : span / s) + 1;
    // The last window must start inside the input or the leading pad.
    if (ceil_mode && (out - 1) * s >= in + pad0) --out;
    return out;
  };
  g.oh = extent(h, g.pt, g.pb, eh, g.sh);
  g.ow = extent(w, g.pl, g.pr, ew, g.sw);
  return g;
}

Tensor Conv(const onnx::NodeProto& node, const std::vector<const Tensor*>& in) {
  const Tensor& x = Need(in, 0, node);
  const Tensor& wt = Need(in, 1, node);
  const Tensor* bias = Optional(in, 2);
  CheckRank(x, 4, node);
  CheckRank(wt, 4, node);
  const std::int64_t n = x.shape[0], c = x.shape[1], h = x.shape[2],
                     w = x.shape[3];
  const std::int64_t m = wt.shape[0], cg = wt.shape[1], kh = wt.shape[2],
                     kw = wt.shape[3];
  const std::int64_t groups = AttrInt(node, "group", 1);
  if (groups <= 0 || c != cg * groups || m % groups != 0) {
    Malformed("Conv channel/group mismatch: input " + ShapeString(x.shape) +
              ", weight " + ShapeString(wt.shape));
  }
  if (const auto ks = AttrInts(node, "kernel_shape");
      ks && (*ks != Shape{kh, kw})) {
    Malformed("Conv kernel_shape disagrees with weight");
  }
  const Window g = MakeWindow(node, h, w, kh, kw, false);
  const std::int64_t mg = m / groups;
  const std::int64_t k = cg * kh * kw;
  const std::int64_t p = g.oh * g.ow;
  Tensor y = FloatTensor({n, m, g.oh, g.ow}, std::vector<float>(n * m * p));
  using RowMatrix =
      Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  std::vector<float> cols(k * p);
  for (std::int64_t b = 0; b < n; ++b) {
    for (std::int64_t gi = 0; gi < groups; ++gi) {
      // im2col for this group.
      for (std::int64_t ch = 0; ch < cg; ++ch) {
        const float* plane = x.f.data() + ((b * c) + gi * cg + ch) * h * w;
        for (std::int64_t u = 0; u < kh; ++u) {
          for (std::int64_t v = 0; v < kw; ++v) {
            float* row = cols.data() + ((ch * kh + u) * kw + v) * p;
            for (std::int64_t oy = 0; oy < g.oh; ++oy) {
              const std::int64_t iy = oy * g.sh - g.pt + u * g.dh;
              for (std::int64_t ox = 0; ox < g.ow; ++ox) {
                const std::int64_t ix = ox * g.sw - g.pl + v * g.dw;
                row[oy * g.ow + ox] = (iy >= 0 && iy < h && ix >= 0 && ix < w)
                                          ? plane[iy * w + ix]
                                          : 0.0f;
              }
            }
          }
        }
      }
      Eigen::Map<const RowMatrix> weights(wt.f.data() + gi * mg * k, mg, k);
      Eigen::Map<const RowMatrix> patches(cols.data(), k, p);
      Eigen::Map<RowMatrix> out(y.f.data() + (b * m + gi * mg) * p, mg, p);
      out.noalias() = weights * patches;
    }
    if (bias) {
      if (Numel(bias->shape) != m) Malformed("Conv bias size mismatch");
      for (std::int64_t oc = 0; oc < m; ++oc) {
        float* o = y.f.data() + (b * m + oc) * p;
        for (std::int64_t q = 0; q < p; ++q) o[q] += bias->f[oc];
      }
    }
  }
  return y;
}

Tensor Pool(const onnx::NodeProto& node, const std::vector<const Tensor*>& in,
            bool max) {
  const Tensor& x = Need(in, 0, node);
  CheckRank(x, 4, node);
  const auto kernel = AttrInts(node, "kernel_shape");
  if (!kernel || kernel->size() != 2) Unsupported("pool without 2-d kernel");
  const bool ceil_mode = AttrInt(node, "ceil_mode", 0) != 0;
  const bool include_pad = AttrInt(node, "count_include_pad", 0) != 0;
  const std::int64_t n = x.shape[0], c = x.shape[1], h = x.shape[2],
                     w = x.shape[3];
  const Window g = MakeWindow(node, h, w, (*kernel)[0], (*kernel)[1], ceil_mode);
  if (!max && (g.dh != 1 || g.dw != 1)) Unsupported("dilated AveragePool");
  Tensor y = FloatTensor({n, c, g.oh, g.ow},
                         std::vector<float>(n * c * g.oh * g.ow));
  for (std::int64_t plane = 0; plane < n * c; ++plane) {
    const float* src = x.f.data() + plane * h * w;
    float* dst = y.f.data() + plane * g.oh * g.ow;
    for (std::int64_t oy = 0; oy < g.oh; ++oy) {
      for (std::int64_t ox = 0; ox < g.ow; ++ox) {
        const std::int64_t y0 = oy * g.sh - g.pt, x0 = ox * g.sw - g.pl;
        float best = -std::numeric_limits<float>::infinity();
        float sum = 0.0f;
        std::int64_t count = 0;
        for (std::int64_t u = 0; u < g.kh; ++u) {
          const std::int64_t iy = y0 + u * g.dh;
          if (iy < 0 || iy >= h) continue;
          for (std::int64_t v = 0; v < g.kw; ++v) {
            const std::int64_t ix = x0 + v * g.dw;
            if (ix < 0 || ix >= w) continue;
            best = std::max(best, src[iy * w + ix]);
            sum += src[iy * w + ix];
            ++count;
          }
        }
        if (max) {
          dst[oy * g.ow + ox] = best;
        } else {
          std::int64_t divisor = count;
          if (include_pad) {
            const std::int64_t y1 = std::min(y0 + g.kh, h + g.pb);
            const std::int64_t x1 = std::min(x0 + g.kw, w + g.pr);
            divisor = (y1 - y0) * (x1 - x0);
          }
          dst[oy * g.ow + ox] = divisor > 0 ? sum / divisor : 0.0f;
        }
      }
    }
  }
  return y;
}

Tensor GlobalPool(const onnx::NodeProto& node, const Tensor& x, bool max) {
  if (x.shape.size() < 3 || x.is_int) Unsupported("global pool on " + ShapeString(x.shape));
  const std::int64_t planes = x.shape[0] * x.shape[1];
  const std::int64_t area = Numel(x.shape) / planes;
  Shape out_shape = {x.shape[0], x.shape[1]};
  out_shape.resize(x.shape.size(), 1);
  Tensor y = FloatTensor(out_shape, std::vector<float>(planes));
  for (std::int64_t k = 0; k < planes; ++k) {
    const float* src = x.f.data() + k * area;
    if (max) {
      y.f[k] = *std::max_element(src, src + area);
    } else {
      double sum = 0.0;
      for (std::int64_t q = 0; q < area; ++q) sum += src[q];
      y.f[k] = static_cast<float>(sum / area);
    }
  }
  (void)node;
  return y;
}

Tensor BatchNorm(const onnx::NodeProto& node,
                 const std::vector<const Tensor*>& in) {
  const Tensor& x = Need(in, 0, node);
  const Tensor& scale = Need(in, 1, node);
  const Tensor& shift = Need(in, 2, node);
  const Tensor& mean = Need(in, 3, node);
  const Tensor& var = Need(in, 4, node);
  if (AttrInt(node, "training_mode", 0) != 0) {
    Unsupported("BatchNormalization in training mode");
  }
  if (x.shape.size() < 2 || x.is_int) Malformed("BatchNormalization input");
  const float eps = AttrFloat(node, "epsilon", 1e-5f);
  const std::int64_t n = x.shape[0], c = x.shape[1];
  const std::int64_t area = Numel(x.shape) / (n * c);
  Tensor y = FloatTensor(x.shape, x.f);
  for (std::int64_t ch = 0; ch < c; ++ch) {
    const float a = scale.f[ch] / std::sqrt(var.f[ch] + eps);
    const float b = shift.f[ch] - a * mean.f[ch];
    for (std::int64_t bi = 0; bi < n; ++bi) {
      float* p = y.f.data() + (bi * c + ch) * area;
      for (std::int64_t q = 0; q < area; ++q) p[q] = a * p[q] + b;
    }
  }
  return y;
}

using RowMatrix =
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Tensor Gemm(const onnx::NodeProto& node, const std::vector<const Tensor*>& in) {
  const Tensor& a = Need(in, 0, node);
  const Tensor& b = Need(in, 1, node);
  const Tensor* c = Optional(in, 2);
  CheckRank(a, 2, node);
  CheckRank(b, 2, node);
  const bool ta = AttrInt(node, "transA", 0) != 0;
  const bool tb = AttrInt(node, "transB", 0) != 0;
  const float alpha = AttrFloat(node, "alpha", 1.0f);
  const float beta = AttrFloat(node, "beta", 1.0f);
  Eigen::Map<const RowMatrix> ma(a.f.data(), a.shape[0], a.shape[1]);
  Eigen::Map<const RowMatrix> mb(b.f.data(), b.shape[0], b.shape[1]);
  RowMatrix lhs = ta ? RowMatrix(ma.transpose()) : RowMatrix(ma);
  RowMatrix rhs = tb ? RowMatrix(mb.transpose()) : RowMatrix(mb);
  if (lhs.cols() != rhs.rows()) {
    Malformed("Gemm inner dimensions differ: " + ShapeString(a.shape) + " x " +
              ShapeString(b.shape));
  }
  RowMatrix prod = alpha * (lhs * rhs);
  Tensor y = FloatTensor({prod.rows(), prod.cols()},
                         std::vector<float>(prod.data(), prod.data() + prod.size()));
  if (c) {
    const Tensor scaled =
        Unary(*c, [beta](float v) { return beta * v; });
    y = Binary(y, scaled, std::plus<float>());
    if (y.shape != Shape{prod.rows(), prod.cols()}) {
      Malformed("Gemm bias does not broadcast to the output");
    }
  }
  return y;
}

Tensor MatMul(const onnx::NodeProto& node, const Tensor& a, const Tensor& b) {
  if (a.is_int || b.is_int) Unsupported("integer MatMul");
  Shape sa = a.shape, sb = b.shape;
  const bool a_vec = sa.size() == 1, b_vec = sb.size() == 1;
  if (a_vec) sa.insert(sa.begin(), 1);
  if (b_vec) sb.push_back(1);
  if (sa.size() < 2 || sb.size() < 2) Malformed("MatMul of a scalar");
  const std::int64_t m = sa[sa.size() - 2], k = sa.back();
  const std::int64_t kb = sb[sb.size() - 2], n = sb.back();
  if (k != kb) {
    Malformed("MatMul inner dimensions differ: " + ShapeString(a.shape) +
              " x " + ShapeString(b.shape));
  }
  const Shape batch_a(sa.begin(), sa.end() - 2);
  const Shape batch_b(sb.begin(), sb.end() - 2);
  const Shape batch = BroadcastShape(batch_a, batch_b);
  const std::int64_t batches = Numel(batch);
  const auto stride_a = BroadcastStrides(batch_a, batch);
  const auto stride_b = BroadcastStrides(batch_b, batch);
  std::vector<float> out(batches * m * n);
  const auto batch_strides = Strides(batch);
  for (std::int64_t bi = 0; bi < batches; ++bi) {
    std::int64_t oa = 0, ob = 0, rest = bi;
    for (std::size_t d = 0; d < batch.size(); ++d) {
      const std::int64_t idx = rest / batch_strides[d];
      rest %= batch_strides[d];
      oa += idx * stride_a[d];
      ob += idx * stride_b[d];
    }
    Eigen::Map<const RowMatrix> ma(a.f.data() + oa * m * k, m, k);
    Eigen::Map<const RowMatrix> mb(b.f.data() + ob * k * n, k, n);
    Eigen::Map<RowMatrix> mo(out.data() + bi * m * n, m, n);
    mo.noalias() = ma * mb;
  }
  Shape shape = batch;
  if (!a_vec) shape.push_back(m);
  if (!b_vec) shape.push_back(n);
  (void)node;
  return FloatTensor(shape, std::move(out));
}

Shape ReadAxes(const onnx::NodeProto& node,
               const std::vector<const Tensor*>& in, std::size_t input_index) {
  if (const Tensor* t = Optional(in, input_index)) {
    if (!t->is_int) Malformed(node.op_type() + " axes must be int64");
    return t->i;
  }
  return AttrInts(node, "axes").value_or(Shape{});
}

Tensor Reshape(const onnx::NodeProto& node, const Tensor& x,
               const Tensor& shape_t) {
  if (!shape_t.is_int) Malformed("Reshape shape must be int64");
  const bool allow_zero = AttrInt(node, "allowzero", 0) != 0;
  Shape shape = shape_t.i;
  std::int64_t known = 1;
  std::optional<std::size_t> infer;
  for (std::size_t k = 0; k < shape.size(); ++k) {
    if (shape[k] == 0 && !allow_zero) {
      if (k >= x.shape.size()) Malformed("Reshape copies a missing dimension");
      shape[k] = x.shape[k];
    }
    if (shape[k] == -1) {
      if (infer) Malformed("Reshape with two -1 dimensions");
      infer = k;
    } else {
      known *= shape[k];
    }
  }
  const std::int64_t total = Numel(x.shape);
  if (infer) {
    if (known == 0 || total % known != 0) Malformed("Reshape cannot infer -1");
    shape[*infer] = total / known;
  }
  if (Numel(shape) != total) {
    Malformed("Reshape " + ShapeString(x.shape) + " to " + ShapeString(shape));
  }
  Tensor y = x;
  y.shape = std::move(shape);
  return y;
}

Tensor Transpose(const onnx::NodeProto& node, const Tensor& x) {
  const std::size_t r = x.shape.size();
  Shape perm = AttrInts(node, "perm").value_or(Shape{});
  if (perm.empty()) {
    for (std::size_t k = 0; k < r; ++k) perm.push_back(r - 1 - k);
  }
  if (perm.size() != r) Malformed("Transpose perm has the wrong rank");
  Shape out(r);
  for (std::size_t k = 0; k < r; ++k) out[k] = x.shape[perm[k]];
  const auto in_strides = Strides(x.shape);
  const auto out_strides = Strides(out);
  const std::int64_t n = Numel(out);
  std::vector<std::int64_t> src(n);
  for (std::int64_t q = 0; q < n; ++q) {
    std::int64_t rest = q, offset = 0;
    for (std::size_t d = 0; d < r; ++d) {
      const std::int64_t idx = rest / out_strides[d];
      rest %= out_strides[d];
      offset += idx * in_strides[perm[d]];
    }
    src[q] = offset;
  }
  Tensor y;
  y.shape = out;
  y.is_int = x.is_int;
  if (x.is_int) {
    for (const auto s : src) y.i.push_back(x.i[s]);
  } else {
    for (const auto s : src) y.f.push_back(x.f[s]);
  }
  return y;
}

Tensor Concat(const onnx::NodeProto& node,
              const std::vector<const Tensor*>& in) {
  std::vector<const Tensor*> parts;
  for (const Tensor* t : in) {
    if (t) parts.push_back(t);
  }
  if (parts.empty()) Malformed("Concat without inputs");
  const Shape& first = parts.front()->shape;
  const std::int64_t axis = NormalizeAxis(AttrInt(node, "axis", 0), first.size());
  Shape out = first;
  out[axis] = 0;
  for (const Tensor* t : parts) {
    if (t->shape.size() != first.size() || t->is_int != parts[0]->is_int) {
      Malformed("Concat inputs disagree in rank or type");
    }
    for (std::size_t d = 0; d < first.size(); ++d) {
      if (static_cast<std::int64_t>(d) != axis && t->shape[d] != first[d]) {
        Malformed("Concat inputs disagree off the axis");
      }
    }
    out[axis] += t->shape[axis];
  }
  std::int64_t outer = 1;
  for (std::int64_t d = 0; d < axis; ++d) outer *= first[d];
  std::int64_t inner = 1;
  for (std::size_t d = axis + 1; d < first.size(); ++d) inner *= first[d];
  Tensor y;
  y.shape = out;
  y.is_int = parts[0]->is_int;
  for (std::int64_t o = 0; o < outer; ++o) {
    for (const Tensor* t : parts) {
      const std::int64_t chunk = t->shape[axis] * inner;
      if (y.is_int) {
        y.i.insert(y.i.end(), t->i.begin() + o * chunk,
                   t->i.begin() + (o + 1) * chunk);
      } else {
        y.f.insert(y.f.end(), t->f.begin() + o * chunk,
                   t->f.begin() + (o + 1) * chunk);
      }
    }
  }
  return y;
}

Tensor Slice(const onnx::NodeProto& node,
             const std::vector<const Tensor*>& in) {
  const Tensor& x = Need(in, 0, node);
  const Tensor& starts = Need(in, 1, node);
  const Tensor& ends = Need(in, 2, node);
  const Tensor* axes_t = Optional(in, 3);
  const Tensor* steps_t = Optional(in, 4);
  if (!starts.is_int || !ends.is_int || starts.i.size() != ends.i.size()) {
    Malformed("Slice starts/ends must be int64 of equal length");
  }
  const std::size_t r = x.shape.size();
  std::vector<std::int64_t> begin(r, 0), step(r, 1);
  Shape out = x.shape;
  for (std::size_t k = 0; k < starts.i.size(); ++k) {
    const std::int64_t axis =
        NormalizeAxis(axes_t ? axes_t->i.at(k) : static_cast<std::int64_t>(k), r);
    const std::int64_t dim = x.shape[axis];
    const std::int64_t st = steps_t ? steps_t->i.at(k) : 1;
    if (st == 0) Malformed("Slice step of zero");
    std::int64_t b = starts.i[k], e = ends.i[k];
    if (b < 0) b += dim;
    if (e < 0) e += dim;
    if (st > 0) {
      b = std::clamp<std::int64_t>(b, 0, dim);
      e = std::clamp<std::int64_t>(e, 0, dim);
    } else {
      b = std::clamp<std::int64_t>(b, 0, dim - 1);
      e = std::clamp<std::int64_t>(e, -1, dim - 1);
    }
    const std::int64_t span = st > 0 ? e - b : b - e;
    const std::int64_t abs_step = st > 0 ? st : -st;
    out[axis] = std::max<std::int64_t>(0, (span + abs_step - 1) / abs_step);
    begin[axis] = b;
    step[axis] = st;
  }
  const auto in_strides = Strides(x.shape);
  const auto out_strides = Strides(out);
  Tensor y;
  y.shape = out;
  y.is_int = x.is_int;
  for (std::int64_t q = 0; q < Numel(out); ++q) {
    std::int64_t rest = q, offset = 0;
    for (std::size_t d = 0; d < r; ++d) {
      const std::int64_t idx = rest / out_strides[d];
      rest %= out_strides[d];
      offset += (begin[d] + idx * step[d]) * in_strides[d];
    }
    if (x.is_int) {
      y.i.push_back(x.i[offset]);
    } else {
      y.f.push_back(x.f[offset]);
    }
  }
  return y;
}

Tensor Gather(const onnx::NodeProto& node, const Tensor& data,
              const Tensor& indices) {
  if (!indices.is_int) Malformed("Gather indices must be integers");
  const std::int64_t axis =
      NormalizeAxis(AttrInt(node, "axis", 0), data.shape.size());
  std::int64_t outer = 1;
  for (std::int64_t d = 0; d < axis; ++d) outer *= data.shape[d];
  std::int64_t inner = 1;
  for (std::size_t d = axis + 1; d < data.shape.size(); ++d) {
    inner *= data.shape[d];
  }
  const std::int64_t dim = data.shape[axis];
  Shape out(data.shape.begin(), data.shape.begin() + axis);
  out.insert(out.end(), indices.shape.begin(), indices.shape.end());
  out.insert(out.end(), data.shape.begin() + axis + 1, data.shape.end());
  Tensor y;
  y.shape = out;
  y.is_int = data.is_int;
  for (std::int64_t o = 0; o < outer; ++o) {
    for (std::int64_t idx : indices.i) {
      if (idx < 0) idx += dim;
      if (idx < 0 || idx >= dim) Malformed("Gather index out of range");
      const std::int64_t start = (o * dim + idx) * inner;
      if (y.is_int) {
        y.i.insert(y.i.end(), data.i.begin() + start,
                   data.i.begin() + start + inner);
      } else {
        y.f.insert(y.f.end(), data.f.begin() + start,
                   data.f.begin() + start + inner);
      }
    }
  }
  return y;
}

Tensor Softmax(const onnx::NodeProto& node, const Tensor& x,
               std::int64_t opset) {
  if (x.is_int) Malformed("Softmax of integers");
  const std::int64_t axis = NormalizeAxis(
      AttrInt(node, "axis", opset >= 13 ? -1 : 1), x.shape.size());
  Tensor y = x;
  std::int64_t outer = 1;
  for (std::int64_t d = 0; d < axis; ++d) outer *= x.shape[d];
  std::int64_t inner = 1;
  for (std::size_t d = axis + 1; d < x.shape.size(); ++d) inner *= x.shape[d];
  // Before opset 13 the operator flattens everything from `axis` on.
  const std::int64_t dim =
      opset >= 13 ? x.shape[axis] : Numel(x.shape) / outer;
  if (opset < 13) inner = 1;
  for (std::int64_t o = 0; o < outer; ++o) {
    for (std::int64_t q = 0; q < inner; ++q) {
      float* base = y.f.data() + o * dim * inner + q;
      float peak = -std::numeric_limits<float>::infinity();
      for (std::int64_t d = 0; d < dim; ++d) peak = std::max(peak, base[d * inner]);
      double total = 0.0;
      for (std::int64_t d = 0; d < dim; ++d) {
        base[d * inner] = std::exp(base[d * inner] - peak);
        total += base[d * inner];
      }
      for (std::int64_t d = 0; d < dim; ++d) {
        base[d * inner] = static_cast<float>(base[d * inner] / total);
      }
    }
  }
  return y;
}

Tensor ReduceMean(const onnx::NodeProto& node,
                  const std::vector<const Tensor*>& in) {
  const Tensor& x = Need(in, 0, node);
  if (x.is_int) Unsupported("integer ReduceMean");
  Shape axes = ReadAxes(node, in, 1);
  const bool keep = AttrInt(node, "keepdims", 1) != 0;
  const std::size_t r = x.shape.size();
  std::vector<bool> reduce(r, axes.empty());
  for (const auto a : axes) reduce[NormalizeAxis(a, r)] = true;
  Shape out;
  for (std::size_t d = 0; d < r; ++d) {
    if (!reduce[d]) {
      out.push_back(x.shape[d]);
    } else if (keep) {
      out.push_back(1);
    }
  }
  Shape kept_shape(r);
  for (std::size_t d = 0; d < r; ++d) kept_shape[d] = reduce[d] ? 1 : x.shape[d];
  const auto kept_strides = BroadcastStrides(kept_shape, x.shape);
  std::vector<double> sums(Numel(kept_shape), 0.0);
  const auto in_strides = Strides(x.shape);
  for (std::int64_t q = 0; q < Numel(x.shape); ++q) {
    std::int64_t rest = q, target = 0;
    for (std::size_t d = 0; d < r; ++d) {
      const std::int64_t idx = rest / in_strides[d];
      rest %= in_strides[d];
      target += idx * kept_strides[d];
    }
    sums[target] += x.f[q];
  }
  const double count =
      static_cast<double>(Numel(x.shape)) / static_cast<double>(sums.size());
  std::vector<float> values;
  for (const double s : sums) values.push_back(static_cast<float>(s / count));
  return FloatTensor(out, std::move(values));
}

Tensor Squeeze(const onnx::NodeProto& node,
               const std::vector<const Tensor*>& in) {
  const Tensor& x = Need(in, 0, node);
  const Shape axes = ReadAxes(node, in, 1);
  std::set<std::int64_t> drop;
  for (const auto a : axes) drop.insert(NormalizeAxis(a, x.shape.size()));
  Tensor y = x;
  y.shape.clear();
  for (std::size_t d = 0; d < x.shape.size(); ++d) {
    const bool squeeze = axes.empty() ? x.shape[d] == 1 : drop.count(d) > 0;
    if (squeeze && x.shape[d] != 1) Malformed("Squeeze of a non-unit axis");
    if (!squeeze) y.shape.push_back(x.shape[d]);
  }
  return y;
}

Tensor Unsqueeze(const onnx::NodeProto& node,
                 const std::vector<const Tensor*>& in) {
  const Tensor& x = Need(in, 0, node);
  const Shape axes = ReadAxes(node, in, 1);
  const std::size_t r = x.shape.size() + axes.size();
  std::set<std::int64_t> add;
  for (const auto a : axes) add.insert(NormalizeAxis(a, r));
  Tensor y = x;
  y.shape.clear();
  std::size_t src = 0;
  for (std::size_t d = 0; d < r; ++d) {
    y.shape.push_back(add.count(d) ? 1 : x.shape[src++]);
  }
  return y;
}

Tensor ConstantNode(const onnx::NodeProto& node) {
  for (const auto& a : node.attribute()) {
    if (a.name() == "value") return FromProto(a.t());
    if (a.name() == "value_float") return FloatTensor({}, {a.f()});
    if (a.name() == "value_floats") {
      return FloatTensor({a.floats_size()},
                         std::vector<float>(a.floats().begin(), a.floats().end()));
    }
    if (a.name() == "value_int") return IntTensor({}, {a.i()});
    if (a.name() == "value_ints") {
      return IntTensor({a.ints_size()},
                       Shape(a.ints().begin(), a.ints().end()));
    }
  }
  Unsupported("Constant node without a supported value attribute");
}

Tensor Cast(const onnx::NodeProto& node, const Tensor& x) {
  const std::int64_t to = AttrInt(node, "to", 0);
  if (to == onnx::TensorProto::FLOAT || to == onnx::TensorProto::DOUBLE) {
    if (!x.is_int) return x;
    return FloatTensor(x.shape, std::vector<float>(x.i.begin(), x.i.end()));
  }
  if (to == onnx::TensorProto::INT64 || to == onnx::TensorProto::INT32) {
    if (x.is_int) return x;
    std::vector<std::int64_t> v;
    for (const float f : x.f) v.push_back(static_cast<std::int64_t>(f));
    return IntTensor(x.shape, std::move(v));
  }
  Unsupported("Cast to data type " + std::to_string(to));
}

Tensor Clip(const onnx::NodeProto& node, const std::vector<const Tensor*>& in) {
  float lo = AttrFloat(node, "min", -std::numeric_limits<float>::infinity());
  float hi = AttrFloat(node, "max", std::numeric_limits<float>::infinity());
  if (const Tensor* t = Optional(in, 1)) lo = t->f.at(0);
  if (const Tensor* t = Optional(in, 2)) hi = t->f.at(0);
  return Unary(Need(in, 0, node),
               [lo, hi](float v) { return std::clamp(v, lo, hi); });
}

Tensor Flatten(const onnx::NodeProto& node, const Tensor& x) {
  const std::int64_t rank = static_cast<std::int64_t>(x.shape.size());
  std::int64_t axis = AttrInt(node, "axis", 1);
  if (axis < 0) axis += rank;
  if (axis < 0 || axis > rank) Malformed("Flatten axis out of range");
  std::int64_t outer = 1;
  for (std::int64_t d = 0; d < axis; ++d) outer *= x.shape[d];
  Tensor y = x;
  y.shape = {outer, Numel(x.shape) / std::max<std::int64_t>(outer, 1)};
  return y;
}

Tensor ShapeOf(const onnx::NodeProto& node, const Tensor& x) {
  const auto r = static_cast<std::int64_t>(x.shape.size());
  std::int64_t start = AttrInt(node, "start", 0);
  std::int64_t end = AttrInt(node, "end", r);
  if (start < 0) start += r;
  if (end < 0) end += r;
  start = std::clamp<std::int64_t>(start, 0, r);
  end = std::clamp<std::int64_t>(end, start, r);
  return IntTensor({end - start},
                   Shape(x.shape.begin() + start, x.shape.begin() + end));
}

using Kernel = std::function<std::vector<Tensor>(
    const onnx::NodeProto&, const std::vector<const Tensor*>&, std::int64_t)>;

template <typename F>
Kernel Single(F f) {
  return [f](const onnx::NodeProto& node, const std::vector<const Tensor*>& in,
             std::int64_t opset) {
    return std::vector<Tensor>{f(node, in, opset)};
  };
}

template <typename F>
Kernel ElementWise(F f) {
  return Single([f](const onnx::NodeProto& node,
                    const std::vector<const Tensor*>& in, std::int64_t) {
    return Unary(Need(in, 0, node), f);
  });
}

template <typename Op>
Kernel Arithmetic(Op op) {
  return Single([op](const onnx::NodeProto& node,
                     const std::vector<const Tensor*>& in, std::int64_t) {
    return Binary(Need(in, 0, node), Need(in, 1, node), op);
  });
}

const std::map<std::string, Kernel>& Kernels() {
  static const auto* table = new std::map<std::string, Kernel>{
      {"Add", Arithmetic([](auto a, auto b) { return a + b; })},
      {"Sub", Arithmetic([](auto a, auto b) { return a - b; })},
      {"Mul", Arithmetic([](auto a, auto b) { return a * b; })},
      {"Div", Arithmetic([](auto a, auto b) { return a / b; })},
      {"Relu", ElementWise([](float v) { return v > 0.0f ? v : 0.0f; })},
      {"Sigmoid",
       ElementWise([](float v) { return 1.0f / (1.0f + std::exp(-v)); })},
      {"Tanh", ElementWise([](float v) { return std::tanh(v); })},
      {"LeakyRelu",
       Single([](const onnx::NodeProto& node,
                 const std::vector<const Tensor*>& in, std::int64_t) {
         const float alpha = AttrFloat(node, "alpha", 0.01f);
         return Unary(Need(in, 0, node),
                      [alpha](float v) { return v >= 0.0f ? v : alpha * v; });
       })},
      {"Clip", Single([](const auto& node, const auto& in, std::int64_t) {
         return Clip(node, in);
       })},
      {"Identity", Single([](const auto& node, const auto& in, std::int64_t) {
         return Need(in, 0, node);
       })},
      {"Dropout", Single([](const auto& node, const auto& in, std::int64_t) {
         return Need(in, 0, node);
       })},
      {"Conv", Single([](const auto& node, const auto& in, std::int64_t) {
         return Conv(node, in);
       })},
      {"BatchNormalization",
       Single([](const auto& node, const auto& in, std::int64_t) {
         return BatchNorm(node, in);
       })},
      {"MaxPool", Single([](const auto& node, const auto& in, std::int64_t) {
         return Pool(node, in, true);
       })},
      {"AveragePool",
       Single([](const auto& node, const auto& in, std::int64_t) {
         return Pool(node, in, false);
       })},
      {"GlobalAveragePool",
       Single([](const auto& node, const auto& in, std::int64_t) {
         return GlobalPool(node, Need(in, 0, node), false);
       })},
      {"GlobalMaxPool",
       Single([](const auto& node, const auto& in, std::int64_t) {
         return GlobalPool(node, Need(in, 0, node), true);
       })},
      {"Gemm", Single([](const auto& node, const auto& in, std::int64_t) {
         return Gemm(node, in);
       })},
      {"MatMul", Single([](const auto& node, const auto& in, std::int64_t) {
         return MatMul(node, Need(in, 0, node), Need(in, 1, node));
       })},
      {"Flatten", Single([](const auto& node, const auto& in, std::int64_t) {
         return Flatten(node, Need(in, 0, node));
       })},
      {"Reshape", Single([](const auto& node, const auto& in, std::int64_t) {
         return Reshape(node, Need(in, 0, node), Need(in, 1, node));
       })},
      {"Transpose", Single([](const auto& node, const auto& in, std::int64_t) {
         return Transpose(node, Need(in, 0, node));
       })},
      {"Concat", Single([](const auto& node, const auto& in, std::int64_t) {
         return Concat(node, in);
       })},
      {"Gather", Single([](const auto& node, const auto& in, std::int64_t) {
         return Gather(node, Need(in, 0, node), Need(in, 1, node));
       })},
      {"Slice", Single([](const auto& node, const auto& in, std::int64_t) {
         return Slice(node, in);
       })},
      {"Shape", Single([](const auto& node, const auto& in, std::int64_t) {
         return ShapeOf(node, Need(in, 0, node));
       })},
      {"Squeeze", Single([](const auto& node, const auto& in, std::int64_t) {
         return Squeeze(node, in);
       })},
      {"Unsqueeze", Single([](const auto& node, const auto& in, std::int64_t) {
         return Unsqueeze(node, in);
       })},
      {"Softmax", Single([](const auto& node, const auto& in,
                            std::int64_t opset) {
         return Softmax(node, Need(in, 0, node), opset);
       })},
      {"ReduceMean", Single([](const auto& node, const auto& in, std::int64_t) {
         return ReduceMean(node, in);
       })},
      {"Constant", Single([](const auto& node, const auto&, std::int64_t) {
         return ConstantNode(node);
       })},
      {"Cast", Single([](const auto& node, const auto& in, std::int64_t) {
         return Cast(node, Need(in, 0, node));
       })},
  };
  return *table;
}

}  // namespace

struct OnnxOracle::Graph {
  onnx::GraphProto proto;
  std::unordered_map<std::string, Tensor> initializers;
  std::vector<const Kernel*> kernels;  // per node
  // Values whose last consumer is node i; freed after it runs.
  std::vector<std::vector<std::string>> release;
  std::string input;
  std::string output;
  Shape input_shape;  // -1 where dynamic
  std::int64_t opset = 0;
  std::size_t classes = 0;
};

namespace {

std::vector<float> Run(const OnnxOracle::Graph& g, Tensor input) {
  std::unordered_map<std::string, Tensor> values;
  values.emplace(g.input, std::move(input));
  auto lookup = [&](const std::string& name) -> const Tensor* {
    if (name.empty()) return nullptr;
    if (auto it = values.find(name); it != values.end()) return &it->second;
    if (auto it = g.initializers.find(name); it != g.initializers.end()) {
      return &it->second;
    }
    Malformed("value '" + name + "' is used before it is produced");
  };
  for (int n = 0; n < g.proto.node_size(); ++n) {
    const auto& node = g.proto.node(n);
    std::vector<const Tensor*> in;
    for (const auto& name : node.input()) in.push_back(lookup(name));
    auto out = (*g.kernels[n])(node, in, g.opset);
    for (int k = 0; k < node.output_size() && k < static_cast<int>(out.size());
         ++k) {
      if (!node.output(k).empty()) values[node.output(k)] = std::move(out[k]);
    }
    for (const auto& name : g.release[n]) values.erase(name);
  }
  const Tensor* result = lookup(g.output);
  if (result->is_int) Malformed("graph output is not float");
  return result->f;
}

Tensor InputTensor(const OnnxOracle::Graph& g, const ImageTensor& image) {
  const Shape shape = {1, static_cast<std::int64_t>(image.channels()),
                       static_cast<std::int64_t>(image.height()),
                       static_cast<std::int64_t>(image.width())};
  if (g.input_shape.size() != 4) {
    throw Error(ErrorCode::kDimensionMismatch,
                "model input '" + g.input + "' is not 4-d");
  }
  for (std::size_t d = 0; d < 4; ++d) {
    if (g.input_shape[d] > 0 && g.input_shape[d] != shape[d]) {
      throw Error(ErrorCode::kDimensionMismatch,
                  "model expects input " + ShapeString(g.input_shape) +
                      ", image is " + ShapeString(shape));
    }
  }
  const auto v = image.values();
  return FloatTensor(shape, std::vector<float>(v.begin(), v.end()));
}

Shape DeclaredShape(const onnx::ValueInfoProto& info) {
  Shape shape;
  if (!info.type().has_tensor_type()) return shape;
  for (const auto& d : info.type().tensor_type().shape().dim()) {
    shape.push_back(d.has_dim_value() && d.dim_value() > 0 ? d.dim_value() : -1);
  }
  return shape;
}

}  // namespace

const std::vector<std::string>& SupportedOnnxOps() {
  static const auto* names = [] {
    auto* v = new std::vector<std::string>;
    for (const auto& [name, kernel] : Kernels()) v->push_back(name);
    return v;
  }();
  return *names;
}

OnnxOracle::OnnxOracle(std::shared_ptr<const Graph> graph)
    : graph_(std::move(graph)) {}

OnnxOracle OnnxOracle::Load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open model '" + path.string() + "'");
  const std::string bytes(std::istreambuf_iterator<char>(in), {});
  try {
    return FromBytes(bytes);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.message());
  }
}

OnnxOracle OnnxOracle::FromBytes(std::string_view bytes) {
  onnx::ModelProto model;
  {
    google::protobuf::io::ArrayInputStream raw(bytes.data(),
                                               static_cast<int>(bytes.size()));
    google::protobuf::io::CodedInputStream coded(&raw);
    coded.SetTotalBytesLimit(INT_MAX);
    if (!model.ParseFromCodedStream(&coded) || !model.has_graph()) {
      Malformed("not a valid ONNX model");
    }
  }
  auto g = std::make_shared<Graph>();
  for (const auto& op : model.opset_import()) {
    if (op.domain().empty() || op.domain() == "ai.onnx") g->opset = op.version();
  }
  if (g->opset < 13) {
    Unsupported("default-domain opset " + std::to_string(g->opset) +
                " is older than 13");
  }
  g->proto = std::move(*model.mutable_graph());

  for (const auto& t : g->proto.initializer()) {
    g->initializers.emplace(t.name(), FromProto(t));
  }
  g->proto.clear_initializer();

  std::vector<const onnx::ValueInfoProto*> inputs;
  for (const auto& v : g->proto.input()) {
    if (!g->initializers.count(v.name())) inputs.push_back(&v);
  }
  if (inputs.size() != 1) {
    Unsupported("model has " + std::to_string(inputs.size()) +
                " runtime inputs, expected exactly one");
  }
  g->input = inputs[0]->name();
  g->input_shape = DeclaredShape(*inputs[0]);
  if (g->proto.output_size() < 1) Malformed("model has no outputs");
  g->output = g->proto.output(0).name();

  std::set<std::string> unsupported;
  for (const auto& node : g->proto.node()) {
    const bool default_domain =
        node.domain().empty() || node.domain() == "ai.onnx";
    const auto it = Kernels().find(node.op_type());
    if (!default_domain || it == Kernels().end()) {
      unsupported.insert(node.domain().empty()
                             ? node.op_type()
                             : node.domain() + "." + node.op_type());
      continue;
    }
    g->kernels.push_back(&it->second);
  }
  if (!unsupported.empty()) {
    std::string list;
    for (const auto& op : unsupported) list += (list.empty() ? "" : ", ") + op;
    Unsupported("unsupported ONNX operators: " + list);
  }

  // Liveness: free each intermediate after its last consumer.
  std::unordered_map<std::string, int> last_use;
  for (int n = 0; n < g->proto.node_size(); ++n) {
    for (const auto& name : g->proto.node(n).input()) {
      if (!name.empty()) last_use[name] = n;
    }
  }
  g->release.resize(g->proto.node_size());
  for (const auto& [name, n] : last_use) {
    if (name != g->output && !g->initializers.count(name)) {
      g->release[n].push_back(name);
    }
  }

  const Shape out_shape = DeclaredShape(g->proto.output(0));
  if (!out_shape.empty() && out_shape.back() > 0) {
    g->classes = static_cast<std::size_t>(out_shape.back());
  } else {
    // Probe with a zero image when the output width is not declared.
    Shape probe = g->input_shape;
    if (probe.size() != 4 ||
        std::any_of(probe.begin() + 1, probe.end(),
                    [](std::int64_t d) { return d <= 0; })) {
      Unsupported("cannot determine the class count: output width and input "
                  "size are both dynamic");
    }
    probe[0] = 1;
    g->classes =
        Run(*g, FloatTensor(probe, std::vector<float>(Numel(probe), 0.0f)))
            .size();
  }
  if (g->classes == 0) Malformed("model output is empty");
  return OnnxOracle(std::move(g));
}

std::size_t OnnxOracle::class_count() const { return graph_->classes; }
const std::string& OnnxOracle::input_name() const { return graph_->input; }
const std::string& OnnxOracle::output_name() const { return graph_->output; }
std::int64_t OnnxOracle::opset() const { return graph_->opset; }

std::vector<float> OnnxOracle::Logits(const ImageTensor& image) const {
  auto logits = Run(*graph_, InputTensor(*graph_, image));
  if (logits.size() != graph_->classes) {
    throw Error(ErrorCode::kDimensionMismatch,
                "model produced " + std::to_string(logits.size()) +
                    " outputs, expected " + std::to_string(graph_->classes));
  }
  return logits;
}

std::vector<double> OnnxOracle::Predict(const ImageTensor& image) const {
  const auto logits = Logits(image);
  const std::vector<double> wide(logits.begin(), logits.end());
  return SoftmaxProbabilities(wide);
}

}  // namespace camforge
