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

// Noisy linear imputation.
//
// Every masked pixel is replaced (per channel) by the solution of
//
//     x_p = mean of x_q over the 4-connected neighbours q of p,
//
// where unmasked neighbours are constants and masked neighbours are unknowns.
// Border pixels average over the neighbours that exist. Multiplying each row
// by its neighbour count gives the SPD system (D - A_mm) x = b, solved with
// Jacobi-preconditioned conjugate gradients, or a dense Cholesky factorization
// for small systems. Gaussian noise is added to the masked pixels afterwards.
//
// The system is non-singular whenever at least one pixel is unmasked: the
// grid is connected, so every connected component of the mask borders a
// known pixel.

#ifndef CAMFORGE_IMPUTATION_HPP_
#define CAMFORGE_IMPUTATION_HPP_

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "camforge/core.hpp"

namespace camforge {

enum class SolverKind { kAuto, kIterative, kDense };

struct ImputationConfig {
  double noise_sigma = 0.05;  // normalized-pixel units, per channel
  double tolerance = 1e-6;    // max |x_p - mean(neighbours)| at convergence
  std::size_t max_iterations = 0;  // 0 means 10 * H * W
  SolverKind solver = SolverKind::kAuto;
  std::size_t dense_limit = 1000;  // kAuto solves densely below this many unknowns
};

namespace imputation_internal {

// Sparse stencil of the masked system: for unknown u, `diag[u]` neighbours in
// total, of which the masked ones are listed in `links`.
struct MaskedSystem {
  std::vector<std::size_t> pixel;        // unknown -> flat pixel
  std::vector<double> diag;              // neighbour count
  std::vector<std::size_t> link_begin;   // CSR offsets into links
  std::vector<std::size_t> links;        // unknown ids of masked neighbours
  std::vector<std::vector<std::size_t>> known;  // flat pixels of known neighbours

  std::size_t size() const { return pixel.size(); }

  // y = (D - A_mm) x
  void Apply(const std::vector<double>& x, std::vector<double>& y) const {
    for (std::size_t u = 0; u < size(); ++u) {
      double acc = diag[u] * x[u];
      for (std::size_t j = link_begin[u]; j < link_begin[u + 1]; ++j) {
        acc -= x[links[j]];
      }
      y[u] = acc;
    }
  }

  // max_u |(b - A x)_u| / diag_u, i.e. the per-pixel neighbour-mean defect.
  double Defect(const std::vector<double>& x,
                const std::vector<double>& b) const {
    std::vector<double> ax(size());
    Apply(x, ax);
    double worst = 0.0;
    for (std::size_t u = 0; u < size(); ++u) {
      worst = std::max(worst, std::abs(b[u] - ax[u]) / diag[u]);
    }
    return worst;
  }
};

inline MaskedSystem BuildSystem(std::size_t height, std::size_t width,
                                const std::vector<std::int64_t>& unknown_of) {
  MaskedSystem sys;
  for (std::size_t p = 0; p < unknown_of.size(); ++p) {
    if (unknown_of[p] >= 0) sys.pixel.push_back(p);
  }
  sys.diag.resize(sys.size());
  sys.known.resize(sys.size());
  sys.link_begin.push_back(0);
  for (std::size_t u = 0; u < sys.size(); ++u) {
    const std::size_t p = sys.pixel[u];
    const std::size_t r = p / width;
    const std::size_t c = p % width;
    std::size_t nbrs[4];
    std::size_t count = 0;
    if (r > 0) nbrs[count++] = p - width;
    if (c > 0) nbrs[count++] = p - 1;
    if (c + 1 < width) nbrs[count++] = p + 1;
    if (r + 1 < height) nbrs[count++] = p + width;
    sys.diag[u] = static_cast<double>(count);
    for (std::size_t i = 0; i < count; ++i) {
      const std::int64_t id = unknown_of[nbrs[i]];
      if (id >= 0) {
        sys.links.push_back(static_cast<std::size_t>(id));
      } else {
        sys.known[u].push_back(nbrs[i]);
      }
    }
    sys.link_begin.push_back(sys.links.size());
  }
  return sys;
}

// Preconditioned CG from the constant guess `start`. Restarts from the true
// residual whenever the recurrence claims convergence but the true defect does
// not meet the tolerance.
inline bool SolveIterative(const MaskedSystem& sys,
                           const std::vector<double>& b, double start,
                           std::vector<double>& x, double tolerance,
                           std::size_t max_iterations) {
  const std::size_t n = sys.size();
  x.assign(n, start);
  std::vector<double> r(n), z(n), p(n), ap(n);
  sys.Apply(x, ap);
  for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - ap[i];
  std::size_t iteration = 0;
  while (true) {
    double rz = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      z[i] = r[i] / sys.diag[i];
      p[i] = z[i];
      rz += r[i] * z[i];
    }
    bool claimed = false;
    while (iteration < max_iterations) {
      double worst = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        worst = std::max(worst, std::abs(r[i]) / sys.diag[i]);
      }
      if (worst <= 0.25 * tolerance) {
        claimed = true;
        break;
      }
      sys.Apply(p, ap);
      double pap = 0.0;
      for (std::size_t i = 0; i < n; ++i) pap += p[i] * ap[i];
      if (!(pap > 0.0)) break;
      const double alpha = rz / pap;
      double rz_next = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        x[i] += alpha * p[i];
        r[i] -= alpha * ap[i];
        z[i] = r[i] / sys.diag[i];
        rz_next += r[i] * z[i];
      }
      const double beta = rz_next / rz;
      rz = rz_next;
      for (std::size_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
      ++iteration;
    }
    if (sys.Defect(x, b) <= tolerance) return true;
    if (!claimed || iteration >= max_iterations) return false;
    // Recurrence drifted from the true residual; restart from it.
    sys.Apply(x, ap);
    for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - ap[i];
  }
}

// Cholesky factor of the masked system, shared by every channel.
inline Eigen::LLT<Eigen::MatrixXd> FactorDense(const MaskedSystem& sys) {
  const auto n = static_cast<Eigen::Index>(sys.size());
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index u = 0; u < n; ++u) {
    a(u, u) = sys.diag[u];
    for (std::size_t j = sys.link_begin[u]; j < sys.link_begin[u + 1]; ++j) {
      a(u, static_cast<Eigen::Index>(sys.links[j])) -= 1.0;
    }
  }
  return Eigen::LLT<Eigen::MatrixXd>(a);
}

inline void SolveDense(const Eigen::LLT<Eigen::MatrixXd>& factor,
                       const std::vector<double>& b, std::vector<double>& x) {
  const Eigen::Map<const Eigen::VectorXd> rhs(b.data(),
                                              static_cast<Eigen::Index>(b.size()));
  const Eigen::VectorXd solution = factor.solve(rhs);
  x.assign(solution.data(), solution.data() + solution.size());
}

}  // namespace imputation_internal

// `masked` holds flat (row * width + col) pixel indices; duplicates are
// ignored. Unmasked pixels are copied bit-for-bit.
inline ImageTensor Impute(const ImageTensor& image,
                          std::span<const std::size_t> masked,
                          const ImputationConfig& config, std::uint64_t seed) {
  using namespace imputation_internal;
  if (!std::isfinite(config.noise_sigma) || config.noise_sigma < 0.0) {
    throw Error(ErrorCode::kInvalidArgument, "noise sigma must be finite and >= 0");
  }
  if (!(config.tolerance > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "solver tolerance must be > 0");
  }
  const std::size_t h = image.height();
  const std::size_t w = image.width();
  const std::size_t pixels = h * w;
  if (masked.empty()) return image;

  std::vector<std::int64_t> unknown_of(pixels, -1);
  std::size_t unknowns = 0;
  for (const std::size_t p : masked) {
    if (p >= pixels) {
      throw Error(ErrorCode::kInvalidArgument, "masked pixel out of range");
    }
    if (unknown_of[p] < 0) unknown_of[p] = 0;
  }
  for (auto& id : unknown_of) {
    if (id >= 0) id = static_cast<std::int64_t>(unknowns++);
  }
  if (unknowns == pixels) {
    throw Error(ErrorCode::kAllPixelsMasked,
                "imputation needs at least one unmasked pixel");
  }

  const MaskedSystem sys = BuildSystem(h, w, unknown_of);
  const bool dense = config.solver == SolverKind::kDense ||
                     (config.solver == SolverKind::kAuto &&
                      unknowns < config.dense_limit);
  const std::size_t max_iterations =
      config.max_iterations > 0 ? config.max_iterations : 10 * pixels;

  std::optional<Eigen::LLT<Eigen::MatrixXd>> factor;
  if (dense) factor.emplace(FactorDense(sys));

  const auto in = image.values();
  std::vector<float> out(in.begin(), in.end());
  std::vector<double> b(unknowns), x;
  for (std::size_t ch = 0; ch < image.channels(); ++ch) {
    const std::size_t offset = ch * pixels;
    double known_sum = 0.0;
    std::size_t known_count = 0;
    for (std::size_t u = 0; u < unknowns; ++u) {
      double acc = 0.0;
      for (const std::size_t q : sys.known[u]) acc += in[offset + q];
      b[u] = acc;
      known_sum += acc;
      known_count += sys.known[u].size();
    }
    // Boundary mean: exact for constant images, zero for zero boundaries.
    const double start = known_sum / static_cast<double>(known_count);
    if (dense) {
      SolveDense(*factor, b, x);
      const double defect = sys.Defect(x, b);
      if (!(defect <= config.tolerance)) {
        throw Error(ErrorCode::kSolverDivergence,
                    "dense solve defect " + std::to_string(defect));
      }
    } else if (!SolveIterative(sys, b, start, x, config.tolerance,
                                      max_iterations)) {
      throw Error(ErrorCode::kSolverDivergence,
                  "conjugate gradients did not reach tolerance in " +
                      std::to_string(max_iterations) + " iterations");
    }
    for (std::size_t u = 0; u < unknowns; ++u) {
      out[offset + sys.pixel[u]] = static_cast<float>(x[u]);
    }
  }

  if (config.noise_sigma > 0.0) {
    // One draw per (channel, pixel) in a fixed order so the noise at a pixel
    // depends only on the seed, never on which other pixels are masked.
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, config.noise_sigma);
    for (std::size_t i = 0; i < out.size(); ++i) {
      const double e = noise(rng);
      if (unknown_of[i % pixels] >= 0) {
        out[i] = static_cast<float>(out[i] + e);
      }
    }
  }
  return image.WithValues(std::move(out));
}

inline ImageTensor Impute(const ImageTensor& image,
                          std::span<const PixelIndex> masked,
                          const ImputationConfig& config, std::uint64_t seed) {
  std::vector<std::size_t> flat;
  flat.reserve(masked.size());
  for (const auto& px : masked) {
    if (px.row >= image.height() || px.col >= image.width()) {
      throw Error(ErrorCode::kInvalidArgument, "masked pixel out of range");
    }
    flat.push_back(px.row * image.width() + px.col);
  }
  return Impute(image, std::span<const std::size_t>(flat), config, seed);
}

}  // namespace camforge

#endif  // CAMFORGE_IMPUTATION_HPP_
