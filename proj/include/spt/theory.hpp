// Copyright 2026 The steplab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "spt/alignment.hpp"
#include "spt/tensor.hpp"

namespace spt::theory {

/// Parameters of the gradual-alignment error bound.
struct BoundParams {
  double tau_m = 0.0;    // max per-step distribution distance
  double R = 1.0;        // inverse regularization strength
  int E = 0;             // number of alignment steps
  double alpha0 = 0.0;   // source loss
  std::uint64_t n = 1;   // unlabeled sample count
  double c_order = 0.0;  // constant of the O(1/sqrt(n)) term
};

/// Single-shift bound 2/(1 - tau*R) * source_loss + alpha_star + c_order/sqrt(n).
/// Valid only for tau*R < 1; throws RegimeError otherwise.
double theorem1_bound(double tau, double R, double source_loss, double alpha_star, std::uint64_t n,
                      double c_order);

/// Step-wise bound |2/(1 - tau_m*R)|^(E+1) * (alpha0 + c_order/sqrt(n)).
/// The base is negative for tau_m*R > 3; its magnitude is used.
double theorem2_bound(const BoundParams& p);

/// Signed recursive factor 2 / (1 - tau_m*R).
double recursive_factor(double tau_m, double R);

/// |2 / ((1 - tau_m*R) - 2 e^{-j omega})|.
double contraction_factor(double tau_m, double R, double omega_freq);

/// |2 e^{-j omega} / (1 - tau_m*R)| < 1, evaluated with complex arithmetic.
bool series_converges(double tau_m, double R, double omega_freq);

/// Bottleneck distance between two equal-size 1-d samples (sorted coupling).
double wasserstein_inf_1d(std::span<const double> xs, std::span<const double> ys);

enum class Metric { kEuclidean, kCosine };

/// Pairwise ground cost used by the bottleneck solver.
double point_distance(std::span<const double> a, std::span<const double> b, Metric metric);

inline constexpr std::size_t kBottleneckCap = 64;

/// min over perfect matchings of the max matched cost. Rows of X and Y are
/// points; |X| = |Y| <= kBottleneckCap.
double wasserstein_inf_bottleneck(const Tensor& X, const Tensor& Y, Metric metric = Metric::kEuclidean);

struct ShiftReport {
  double value = 0.0;               // max over compared classes
  std::vector<double> per_class;    // -1 for skipped classes
  std::vector<std::uint32_t> skipped;
};

/// Class-wise W-infinity between two steps' predictions, classes assigned by
/// argmax. Larger sides are truncated to the first matching count (and to
/// kBottleneckCap) in sample order.
ShiftReport distribution_shift(const PredictionSet& prev, const PredictionSet& curr,
                               Metric metric = Metric::kEuclidean);

}  // namespace spt::theory
