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


#include "spt/theory.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <string>

#include "spt/errors.hpp"

namespace spt::theory {

double theorem1_bound(double tau, double R, double source_loss, double alpha_star, std::uint64_t n,
                      double c_order) {
  if (!(tau * R < 1.0)) {
    throw RegimeError("theorem1_bound: requires tau*R < 1, got " + std::to_string(tau * R));
  }
  if (n == 0) throw ContractError("theorem1_bound: n must be at least 1");
  return 2.0 / (1.0 - tau * R) * source_loss + alpha_star + c_order / std::sqrt(static_cast<double>(n));
}

double recursive_factor(double tau_m, double R) {
  const double denom = 1.0 - tau_m * R;
  if (denom == 0.0) throw SingularityError("recursive factor: tau_m*R = 1");
  return 2.0 / denom;
}

double theorem2_bound(const BoundParams& p) {
  if (p.E < 0) throw ContractError("theorem2_bound: E must be nonnegative");
  if (p.n == 0) throw ContractError("theorem2_bound: n must be at least 1");
  const double base = std::abs(recursive_factor(p.tau_m, p.R));
  const double tail = p.alpha0 + p.c_order / std::sqrt(static_cast<double>(p.n));
  return std::pow(base, p.E + 1) * tail;
}

double contraction_factor(double tau_m, double R, double omega_freq) {
  using namespace std::complex_literals;
  const std::complex<double> denom = (1.0 - tau_m * R) - 2.0 * std::exp(-1.0i * omega_freq);
  // pi is inexact, so the exact singular points only come out near zero
  if (std::abs(denom) <= 1e-12 * (std::abs(1.0 - tau_m * R) + 2.0)) {
    throw SingularityError("contraction_factor: zero denominator");
  }
  return std::abs(2.0 / denom);
}

bool series_converges(double tau_m, double R, double omega_freq) {
  using namespace std::complex_literals;
  const double denom = 1.0 - tau_m * R;
  if (denom == 0.0) throw SingularityError("series_converges: tau_m*R = 1");
  return std::abs(2.0 * std::exp(-1.0i * omega_freq) / denom) < 1.0;
}

double wasserstein_inf_1d(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size() || xs.empty()) {
    throw ContractError("wasserstein_inf_1d: need equal nonempty sizes, got " + std::to_string(xs.size()) +
                        " and " + std::to_string(ys.size()));
  }
  std::vector<double> a(xs.begin(), xs.end()), b(ys.begin(), ys.end());
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

double point_distance(std::span<const double> a, std::span<const double> b, Metric metric) {
  if (a.size() != b.size()) throw DimensionError("point_distance: dimension mismatch");
  if (metric == Metric::kEuclidean) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
    return std::sqrt(s);
  }
  return 1.0 - cosine_similarity(a, b);
}

namespace {

// Kuhn's augmenting-path matching restricted to edges with cost <= limit.
class ThresholdMatcher {
 public:
  explicit ThresholdMatcher(const std::vector<double>& cost, std::size_t n) : cost_(cost), n_(n) {}

  bool perfect(double limit) {
    limit_ = limit;
    match_.assign(n_, n_);
    for (std::size_t u = 0; u < n_; ++u) {
      seen_.assign(n_, 0);
      if (!augment(u)) return false;
    }
    return true;
  }

 private:
  bool augment(std::size_t u) {
    for (std::size_t v = 0; v < n_; ++v) {
      if (seen_[v] || cost_[u * n_ + v] > limit_) continue;
      seen_[v] = 1;
      if (match_[v] == n_ || augment(match_[v])) {
        match_[v] = u;
        return true;
      }
    }
    return false;
  }

  const std::vector<double>& cost_;
  std::size_t n_;
  double limit_ = 0.0;
  std::vector<std::size_t> match_;
  std::vector<char> seen_;
};

}  // namespace

double wasserstein_inf_bottleneck(const Tensor& X, const Tensor& Y, Metric metric) {
  const std::size_t n = X.rows();
  if (Y.rows() != n || n == 0) {
    throw ContractError("wasserstein_inf_bottleneck: need equal nonempty sizes, got " + std::to_string(n) +
                        " and " + std::to_string(Y.rows()));
  }
  if (n > kBottleneckCap) {
    throw ContractError("wasserstein_inf_bottleneck: " + std::to_string(n) + " points exceeds cap of " +
                        std::to_string(kBottleneckCap));
  }
  if (X.cols() != Y.cols()) throw DimensionError("wasserstein_inf_bottleneck: dimension mismatch");

  std::vector<double> cost(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) cost[i * n + j] = point_distance(X.row_span(i), Y.row_span(j), metric);

  std::vector<double> candidates = cost;
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

  // Smallest candidate threshold admitting a perfect matching. The largest
  // candidate always admits one.
  ThresholdMatcher matcher(cost, n);
  std::size_t lo = 0, hi = candidates.size() - 1;
  while (lo < hi) {
    const std::size_t mid = lo + (hi - lo) / 2;
    if (matcher.perfect(candidates[mid])) {
      hi = mid;
    } else {
      lo = mid + 1;
    }
  }
  return candidates[lo];
}

ShiftReport distribution_shift(const PredictionSet& prev, const PredictionSet& curr, Metric metric) {
  if (prev.way() != curr.way()) throw DimensionError("distribution_shift: way mismatch");
  const std::size_t way = prev.way();
  auto partition = [way](const PredictionSet& s) {
    std::vector<std::vector<std::size_t>> by_class(way);
    for (std::size_t i = 0; i < s.size(); ++i) {
      auto row = s.row(i);
      by_class[static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin())].push_back(i);
    }
    return by_class;
  };
  const auto a = partition(prev);
  const auto b = partition(curr);

  ShiftReport report;
  report.per_class.assign(way, -1.0);
  for (std::size_t n = 0; n < way; ++n) {
    const std::size_t k = std::min({a[n].size(), b[n].size(), kBottleneckCap});
    if (k == 0) {
      report.skipped.push_back(static_cast<std::uint32_t>(n));
      continue;
    }
    Tensor X = Tensor::matrix(k, way), Y = Tensor::matrix(k, way);
    for (std::size_t r = 0; r < k; ++r) {
      auto x = prev.row(a[n][r]);
      auto y = curr.row(b[n][r]);
      std::copy(x.begin(), x.end(), X.row_span(r).begin());
      std::copy(y.begin(), y.end(), Y.row_span(r).begin());
    }
    const double d = wasserstein_inf_bottleneck(X, Y, metric);
    report.per_class[n] = d;
    report.value = std::max(report.value, d);
  }
  return report;
}

}  // namespace spt::theory
