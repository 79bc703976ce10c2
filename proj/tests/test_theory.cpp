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


#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "spt/errors.hpp"
#include "spt/theory.hpp"

using namespace spt;
using namespace spt::theory;

namespace {

Tensor random_points(std::mt19937_64& rng, std::size_t n, std::size_t d) {
  std::normal_distribution<double> z;
  Tensor t = Tensor::matrix(n, d);
  for (double& v : t.data()) v = z(rng);
  return t;
}

}  // namespace

TEST_CASE("single-shift bound") {
  CHECK(theorem1_bound(0.0, 1.0, 0.3, 0.2, 16, 0.8) == doctest::Approx(2 * 0.3 + 0.2 + 0.8 / 4.0).epsilon(1e-15));
  CHECK(theorem1_bound(0.2, 2.0, 0.0, 0.0, 5, 0.0) == 0.0);
  CHECK(std::abs(theorem1_bound(0.5, 1.0, 1.0, 0.0, 1, 0.0) - 4.0) < 1e-12);
  CHECK_THROWS_AS(theorem1_bound(1.0, 1.0, 1.0, 0.0, 1, 0.0), RegimeError);
  CHECK_THROWS_AS(theorem1_bound(0.6, 2.0, 1.0, 0.0, 1, 0.0), RegimeError);
}

TEST_CASE("step-wise bound") {
  BoundParams p;
  p.tau_m = 4.0;
  p.R = 1.0;
  p.alpha0 = 1.0;
  p.E = 0;
  CHECK(std::abs(theorem2_bound(p) - 2.0 / 3.0) < 1e-12);
  p.E = 2;
  CHECK(std::abs(theorem2_bound(p) - 8.0 / 27.0) < 1e-12);
  CHECK(std::abs(theorem2_bound(p) - 0.29630) < 1e-5);
  p.alpha0 = 0.0;
  for (int e : {0, 1, 7, 40}) {
    p.E = e;
    CHECK(theorem2_bound(p) == 0.0);
  }
  p.tau_m = 0.5;
  p.R = 2.0;
  CHECK_THROWS_AS(theorem2_bound(p), SingularityError);
  CHECK(recursive_factor(4.0, 1.0) == doctest::Approx(-2.0 / 3.0));
}

TEST_CASE("step-wise bound vanishes exactly in the contracting regime") {
  BoundParams p;
  p.R = 1.0;
  p.alpha0 = 1.0;
  p.c_order = 1.0;
  p.n = 100;
  for (double t : {1.5, 2.0, 2.9, 3.1, 4.0, 10.0}) {
    p.tau_m = t;
    p.E = 200;
    const double far = theorem2_bound(p);
    if (t > 3.0) {
      CHECK(far < 1e-3);
    } else {
      CHECK(far > 1.0);
    }
  }
}

TEST_CASE("contraction factor") {
  CHECK(std::abs(contraction_factor(5.0, 1.0, 0.0) - 1.0 / 3.0) < 1e-12);
  CHECK(std::abs(contraction_factor(4.0, 1.0, std::numbers::pi) - 2.0) < 1e-12);
  CHECK_THROWS_AS(contraction_factor(3.0, 1.0, std::numbers::pi), SingularityError);
}

TEST_CASE("convergence predicate matches the closed-form regime") {
  for (double t = 0.0; t <= 10.0; t += 0.05) {
    if (std::abs(t - 1.0) < 1e-9 || std::abs(t - 3.0) < 1e-9) continue;
    for (double w : {0.0, 0.7, std::numbers::pi}) {
      INFO("tau_R = " << t << ", omega = " << w);
      CHECK(series_converges(t, 1.0, w) == (t > 3.0));
    }
  }
  CHECK_THROWS_AS(series_converges(1.0, 1.0, 0.0), SingularityError);
}

TEST_CASE("1-d bottleneck reference values") {
  CHECK(wasserstein_inf_1d(std::vector<double>{0, 1, 2}, std::vector<double>{0.5, 1.5, 2.5}) == 0.5);
  CHECK(wasserstein_inf_1d(std::vector<double>{3, 1, 2}, std::vector<double>{1, 2, 3}) == 0.0);
  CHECK(wasserstein_inf_1d(std::vector<double>{0, 10}, std::vector<double>{1, 2}) == 8.0);
  CHECK_THROWS_AS(wasserstein_inf_1d(std::vector<double>{0, 1}, std::vector<double>{1}), ContractError);
}

TEST_CASE("bottleneck on identical sets is zero") {
  std::mt19937_64 rng(1);
  const Tensor X = random_points(rng, 8, 3);
  CHECK(wasserstein_inf_bottleneck(X, X) == 0.0);
  CHECK(wasserstein_inf_bottleneck(X, X, Metric::kCosine) <= 1e-15);
}

TEST_CASE("bottleneck matches exhaustive matching on 500 random instances") {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<std::size_t> size_d(1, 6), dim_d(1, 4);
  for (int it = 0; it < 500; ++it) {
    const std::size_t n = size_d(rng), d = dim_d(rng);
    const Tensor X = random_points(rng, n, d), Y = random_points(rng, n, d);
    const Metric metric = it % 3 == 0 ? Metric::kCosine : Metric::kEuclidean;
    REQUIRE(std::abs(wasserstein_inf_bottleneck(X, Y, metric) - oracle::brute_bottleneck(X, Y, metric)) < 1e-12);
    if (d == 1) {
      std::vector<double> xs(X.data().begin(), X.data().end()), ys(Y.data().begin(), Y.data().end());
      REQUIRE(std::abs(wasserstein_inf_bottleneck(X, Y) - wasserstein_inf_1d(xs, ys)) < 1e-12);
    }
  }
}

TEST_CASE("bottleneck input limits") {
  std::mt19937_64 rng(3);
  CHECK_THROWS_AS(wasserstein_inf_bottleneck(random_points(rng, 3, 2), random_points(rng, 4, 2)), ContractError);
  const std::size_t over = kBottleneckCap + 1;
  CHECK_THROWS_AS(wasserstein_inf_bottleneck(random_points(rng, over, 2), random_points(rng, over, 2)),
                  ContractError);
  CHECK_NOTHROW(wasserstein_inf_bottleneck(random_points(rng, kBottleneckCap, 2), random_points(rng, kBottleneckCap, 2)));
}

TEST_CASE("bottleneck satisfies the triangle inequality") {
  std::mt19937_64 rng(5);
  for (int it = 0; it < 200; ++it) {
    const std::size_t n = 1 + it % 7;
    const Tensor X = random_points(rng, n, 3), Y = random_points(rng, n, 3), Z = random_points(rng, n, 3);
    CHECK(wasserstein_inf_bottleneck(X, Z) <= wasserstein_inf_bottleneck(X, Y) + wasserstein_inf_bottleneck(Y, Z) + 1e-12);
    CHECK(wasserstein_inf_bottleneck(X, Y) == wasserstein_inf_bottleneck(Y, X));
  }
}

TEST_CASE("distribution shift between steps") {
  const PredictionSet prev{Tensor::from_rows({{0.9, 0.1, 0}, {0.1, 0.8, 0.1}, {0.8, 0.2, 0}, {0.2, 0.7, 0.1}}), 0};
  SUBCASE("no change") {
    const ShiftReport r = distribution_shift(prev, prev);
    CHECK(r.value == 0.0);
    CHECK(r.skipped == std::vector<std::uint32_t>{2});
    CHECK(r.per_class[2] == -1.0);
  }
  SUBCASE("one class moved by a constant") {
    PredictionSet curr = prev;
    for (std::size_t i : {0u, 2u}) {
      curr.probs(i, 0) -= 0.1;
      curr.probs(i, 1) += 0.1;
    }
    const ShiftReport r = distribution_shift(prev, curr);
    const Tensor X = Tensor::from_rows({{0.9, 0.1, 0}, {0.8, 0.2, 0}});
    const Tensor Y = Tensor::from_rows({{0.8, 0.2, 0}, {0.7, 0.3, 0}});
    CHECK(std::abs(r.per_class[0] - oracle::brute_bottleneck(X, Y, Metric::kEuclidean)) < 1e-12);
    CHECK(std::abs(r.value - std::sqrt(0.02)) < 1e-12);
    CHECK(r.per_class[1] == 0.0);
  }
  SUBCASE("symmetric and nonnegative on random steps") {
    std::mt19937_64 rng(8);
    for (int it = 0; it < 50; ++it) {
      const PredictionSet a{oracle::random_distribution_rows(rng, 20, 4, 1.5), 0};
      const PredictionSet b{oracle::random_distribution_rows(rng, 20, 4, 1.5), 1};
      const ShiftReport ab = distribution_shift(a, b);
      CHECK(ab.value >= 0.0);
      if (ab.skipped.empty()) {
        // Same class sizes on both sides keep the truncation symmetric.
        bool balanced = true;
        for (std::size_t n = 0; n < 4; ++n) {
          std::size_t ca = 0, cb = 0;
          for (std::size_t i = 0; i < 20; ++i) {
            auto ra = a.row(i), rb = b.row(i);
            ca += static_cast<std::size_t>(std::max_element(ra.begin(), ra.end()) - ra.begin()) == n;
            cb += static_cast<std::size_t>(std::max_element(rb.begin(), rb.end()) - rb.begin()) == n;
          }
          balanced = balanced && ca == cb;
        }
        if (balanced) CHECK(ab.value == distribution_shift(b, a).value);
      }
    }
  }
}
