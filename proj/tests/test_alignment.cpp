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
#include "spt/alignment.hpp"
#include "spt/errors.hpp"

using namespace spt;

namespace {

PredictionSet preds(std::initializer_list<std::initializer_list<double>> rows) {
  return PredictionSet{Tensor::from_rows(rows), 0};
}

// Entropy written out independently of the library.
double hand_entropy(std::span<const double> p) {
  double h = 0;
  for (double v : p)
    if (v > 0) h -= v * std::log(v);
  return h;
}

}  // namespace

TEST_CASE("entropy reference values") {
  CHECK(entropy(std::vector<double>{0, 1, 0}) == 0.0);
  CHECK(std::abs(entropy(std::vector<double>(5, 0.2)) - 1.6094379124341003) < 1e-15);
  CHECK(std::abs(entropy(std::vector<double>{0.5, 0.5, 0, 0, 0}) - 0.6931471805599453) < 1e-15);
}

TEST_CASE("entropy rejects non-distributions") {
  CHECK_THROWS_AS(entropy(std::vector<double>{0.5, 0.6}), ContractError);
  CHECK_THROWS_AS(entropy(std::vector<double>{1.5, -0.5}), ContractError);
}

TEST_CASE("entropy group picks the lowest entropies") {
  // Binary rows: entropy rises with the minority mass, so the order is 0, 3, 2, 1.
  const PredictionSet p = preds({{0.98, 0.02}, {0.7, 0.3}, {0.9, 0.1}, {0.95, 0.05}});
  CHECK(entropy_group(p, 0.5) == std::vector<std::size_t>{0, 3});
  CHECK(entropy_group(p, 1.0) == std::vector<std::size_t>{0, 1, 2, 3});
  CHECK(entropy_group(p, 0.01) == std::vector<std::size_t>{0});
  CHECK_THROWS_AS(entropy_group(p, 0.0), ContractError);
  CHECK_THROWS_AS(entropy_group(p, 1.5), ContractError);
}

TEST_CASE("entropy ties break by index") {
  const PredictionSet p = preds({{0.3, 0.7}, {0.3, 0.7}, {0.3, 0.7}, {0.3, 0.7}});
  CHECK(entropy_group(p, 0.5) == std::vector<std::size_t>{0, 1});
}

TEST_CASE("prototype centers are class means") {
  const Tensor one = Tensor::from_rows({{0.2, 0.8}, {0.6, 0.4}});
  const std::vector<std::uint32_t> l1 = {1, 0};
  const Tensor c1 = prototype_centers(one, l1, 2);
  CHECK(c1 == Tensor::from_rows({{0.6, 0.4}, {0.2, 0.8}}));

  const Tensor two = Tensor::from_rows({{1, 0}, {0, 1}});
  const std::vector<std::uint32_t> l2 = {0, 0};
  CHECK(prototype_centers(two, l2, 1) == Tensor::from_rows({{0.5, 0.5}}));

  const Tensor same = Tensor::from_rows({{0.3, 0.7}, {0.3, 0.7}});
  CHECK(prototype_centers(same, l2, 1) == Tensor::from_rows({{0.3, 0.7}}));

  CHECK_THROWS_AS(prototype_centers(same, l2, 2), ContractError);
}

TEST_CASE("prototype group ranks by best cosine") {
  // Against center [1, 0] the cosine is the normalized first coordinate.
  PredictionSet p{Tensor::matrix(3, 2), 0};
  const double cs[] = {1.0, 0.2, 0.9};
  for (std::size_t i = 0; i < 3; ++i) {
    const double c = cs[i], s = std::sqrt(1 - c * c);
    p.probs(i, 0) = c / (c + s);
    p.probs(i, 1) = s / (c + s);
  }
  const Tensor centers = Tensor::from_rows({{1, 0}});
  const auto scores = prototype_scores(p, centers);
  CHECK(std::abs(scores[0] - 1.0) < 1e-12);
  CHECK(std::abs(scores[1] - 0.2) < 1e-12);
  CHECK(std::abs(scores[2] - 0.9) < 1e-12);
  CHECK(prototype_group(p, centers, 2.0 / 3.0) == std::vector<std::size_t>{0, 2});
  CHECK(prototype_group(p, centers, 1.0) == std::vector<std::size_t>{0, 1, 2});

  const PredictionSet zero = preds({{0, 0}});
  CHECK_THROWS_AS(prototype_scores(zero, centers), ContractError);
}

TEST_CASE("explicit rank selection") {
  const std::vector<double> e = {0.1, 0.5, 0.3, 0.2};
  CHECK(rank_select(e, 2, true) == std::vector<std::size_t>{0, 3});
  const std::vector<double> a = {1.0, 0.2, 0.9};
  CHECK(rank_select(a, 2, false) == std::vector<std::size_t>{0, 2});
  CHECK(selection_size(0.01, 10) == 1);
  CHECK(selection_size(0.7, 80) == 56);
}

TEST_CASE("credible group intersects and falls back") {
  const std::vector<std::uint32_t> labels = {0, 1};
  SUBCASE("full fractions keep everyone") {
    const PredictionSet p = preds({{0.9, 0.1}, {0.4, 0.6}, {0.5, 0.5}, {0.95, 0.05}});
    const CredibleGroup g = credible_group(p, 1.0, 1.0, labels);
    CHECK(g.members == std::vector<std::size_t>{0, 1, 2, 3});
    CHECK_FALSE(g.fell_back);
  }
  SUBCASE("intersection") {
    // entropy order 3, 0, 1, 2; support rows 0 and 1 are their own centers
    const PredictionSet p = preds({{0.9, 0.1}, {0.4, 0.6}, {0.5, 0.5}, {0.95, 0.05}});
    CHECK(entropy_group(p, 0.5) == std::vector<std::size_t>{0, 3});
    CHECK(prototype_group(p, Tensor::from_rows({{0.9, 0.1}, {0.4, 0.6}}), 0.5) ==
          std::vector<std::size_t>{0, 1});
    const CredibleGroup g = credible_group(p, 0.5, 0.5, labels);
    CHECK(g.members == std::vector<std::size_t>{0});
    CHECK(g.snapshot == Tensor::from_rows({{0.9, 0.1}}));
    CHECK_FALSE(g.fell_back);
  }
  SUBCASE("empty intersection falls back to the entropy group") {
    const PredictionSet p = preds({{0.6, 0.4}, {0.3, 0.7}, {0.999, 0.001}, {0.5, 0.5}});
    const CredibleGroup g = credible_group(p, 0.25, 0.25, labels);
    CHECK(g.members == std::vector<std::size_t>{2});
    CHECK(g.fell_back);
  }
  SUBCASE("single-criterion rules") {
    const PredictionSet p = preds({{0.6, 0.4}, {0.3, 0.7}, {0.999, 0.001}, {0.5, 0.5}});
    CHECK(credible_group(p, 0.25, 0.25, labels, GroupRule::kEntropyOnly).members ==
          std::vector<std::size_t>{2});
    // Rows 0 and 1 are their own centers; either may win the near-tie.
    const auto pro = credible_group(p, 0.25, 0.25, labels, GroupRule::kPrototypeOnly).members;
    CHECK(pro == prototype_group(p, Tensor::from_rows({{0.6, 0.4}, {0.3, 0.7}}), 0.25));
    REQUIRE(pro.size() == 1);
    CHECK(pro[0] < 2);
  }
}

TEST_CASE("chain search: one hop into the group") {
  const PredictionSet prev = preds({{0.8, 0.2, 0}, {0.7, 0.3, 0}, {0, 0.1, 0.9}});
  const CredibleGroup g = make_group(prev, {1});
  const std::vector<double> start = {0.8, 0.2, 0};
  const ChainResult r = chain_search(0, start, prev, g);
  CHECK(r.partner == 1);
  CHECK(r.hops == 1);
  CHECK_FALSE(r.fell_back);
}

TEST_CASE("chain search: a member still searches past itself") {
  const PredictionSet prev = preds({{0.8, 0.2, 0}, {0.1, 0.1, 0.8}, {0.7, 0.3, 0}});
  const CredibleGroup g = make_group(prev, {0, 2});
  const ChainResult r = chain_search(0, prev.row(0), prev, g);
  CHECK(r.partner == 2);
  CHECK(r.hops >= 1);
}

TEST_CASE("chain search: constructed two-hop chain") {
  // i=0 -> a=1 (nearest to the start) -> b=2, the only member.
  const PredictionSet prev = preds({{1, 0, 0}, {0.9, 0.1, 0}, {0.5, 0.5, 0}, {0.55, 0, 0.45}});
  const CredibleGroup g = make_group(prev, {2});
  const std::vector<double> start = {1, 0, 0};
  const ChainResult r = chain_search(0, start, prev, g);
  const oracle::Chain want = oracle::brute_chain(0, start, prev.probs, {2});
  CHECK(want.path == std::vector<std::size_t>{1, 2});
  CHECK(r.partner == 2);
  CHECK(r.hops == 2);
}

TEST_CASE("chain search: lone self member falls back to itself") {
  const PredictionSet prev = preds({{1, 0}, {0.5, 0.5}, {0, 1}});
  const CredibleGroup g = make_group(prev, {1});
  const ChainResult r = chain_search(1, prev.row(1), prev, g);
  CHECK(r.fell_back);
  CHECK(r.partner == 1);
  CHECK(r.hops == 2);
}

TEST_CASE("chain search contract errors") {
  const PredictionSet prev = preds({{1, 0}, {0, 1}});
  CHECK_THROWS_AS(chain_search(0, prev.row(0), prev, CredibleGroup{}), ContractError);
  CHECK_THROWS_AS(chain_search(5, prev.row(0), prev, make_group(prev, {1})), ContractError);
}

TEST_CASE("pairing with a saturated group is nearest neighbour") {
  std::mt19937_64 rng(4);
  const Tensor t = oracle::random_distribution_rows(rng, 12, 4, 1.0);
  const PredictionSet prev{t, 0};
  const PredictionSet curr{oracle::random_distribution_rows(rng, 12, 4, 1.0), 1};
  std::vector<std::size_t> all(12);
  for (std::size_t i = 0; i < 12; ++i) all[i] = i;
  const PairSet pairs = pair_all(curr, prev, make_group(prev, all));
  CHECK(pairs.size() == 12);
  for (std::size_t i = 0; i < 12; ++i) {
    std::size_t best = 0;
    double best_sim = -2;
    for (std::size_t k = 0; k < 12; ++k) {
      if (k == i) continue;
      const double s = oracle::cosine(curr.row(i), prev.row(k));
      if (s > best_sim) {
        best_sim = s;
        best = k;
      }
    }
    CHECK(pairs.partner[i] == best);
    CHECK(pairs.hops[i] == 1);
  }
  const PairSet again = pair_all(curr, prev, make_group(prev, all));
  CHECK(again.partner == pairs.partner);
  CHECK(again.hops == pairs.hops);
}

TEST_CASE("random instances agree with the brute-force references") {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<std::size_t> way_d(2, 6), shot_d(1, 3), extra_d(0, 20);
  std::uniform_real_distribution<double> frac(0.05, 1.0), temp(0.3, 3.0);
  std::size_t fallbacks = 0;
  constexpr int kInstances = 1000;
  for (int it = 0; it < kInstances; ++it) {
    const std::size_t way = way_d(rng), shot = shot_d(rng);
    const std::size_t m = way * shot + extra_d(rng) + 1;
    const PredictionSet prev{oracle::random_distribution_rows(rng, m, way, temp(rng)), 0};
    const PredictionSet curr{oracle::random_distribution_rows(rng, m, way, temp(rng)), 1};
    std::vector<std::uint32_t> labels;
    for (std::uint32_t c = 0; c < way; ++c)
      for (std::size_t k = 0; k < shot; ++k) labels.push_back(c);
    const double alpha = frac(rng), gamma = frac(rng);

    std::vector<double> h(m), score(m, -2.0);
    for (std::size_t i = 0; i < m; ++i) h[i] = hand_entropy(prev.row(i));
    std::vector<std::vector<double>> centers(way, std::vector<double>(way, 0.0));
    for (std::size_t i = 0; i < labels.size(); ++i)
      for (std::size_t n = 0; n < way; ++n) centers[labels[i]][n] += prev.probs(i, n) / static_cast<double>(shot);
    for (std::size_t i = 0; i < m; ++i)
      for (const auto& c : centers) score[i] = std::max(score[i], oracle::cosine(prev.row(i), c));

    const auto count = [&](double f) { return std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(f * m))); };
    const auto en = entropy_group(prev, alpha);
    Tensor support = Tensor::matrix(labels.size(), way);
    for (std::size_t i = 0; i < labels.size(); ++i)
      for (std::size_t n = 0; n < way; ++n) support(i, n) = prev.probs(i, n);
    const auto pro = prototype_group(prev, prototype_centers(support, labels, way), gamma);
    REQUIRE(en.size() == count(alpha));
    REQUIRE(pro.size() == count(gamma));
    // Top-k against the hand keys; self-cosines near 1 differ only in the last ulps.
    auto is_top = [&](const std::vector<std::size_t>& sel, const std::vector<double>& keys, bool low) {
      std::vector<char> in(m, 0);
      for (auto j : sel) in[j] = 1;
      for (std::size_t a = 0; a < m; ++a)
        for (std::size_t b = 0; b < m; ++b)
          if (in[a] && !in[b] && (low ? keys[a] > keys[b] + 1e-12 : keys[a] < keys[b] - 1e-12)) return false;
      return true;
    };
    REQUIRE(is_top(en, h, true));
    REQUIRE(is_top(pro, score, false));
    REQUIRE(en == oracle::select_lowest(h, count(alpha)));

    auto want = oracle::intersect(en, pro);
    const bool want_fallback = want.empty();
    if (want_fallback) want = en;

    const CredibleGroup g = credible_group(prev, alpha, gamma, labels);
    REQUIRE(g.members == want);
    REQUIRE(g.fell_back == want_fallback);
    REQUIRE_FALSE(g.members.empty());
    REQUIRE(std::includes(en.begin(), en.end(), g.members.begin(), g.members.end()));
    for (std::size_t r = 0; r < g.members.size(); ++r)
      for (std::size_t n = 0; n < way; ++n) REQUIRE(g.snapshot(r, n) == prev.probs(g.members[r], n));
    fallbacks += g.fell_back;

    const PairSet pairs = pair_all(curr, prev, g);
    REQUIRE(pairs.size() == m);
    for (std::size_t i = 0; i < m; ++i) {
      const oracle::Chain c = oracle::brute_chain(i, curr.row(i), prev.probs, g.members);
      REQUIRE(pairs.partner[i] == c.partner);
      REQUIRE(pairs.hops[i] == c.hops);
      REQUIRE(g.contains(pairs.partner[i]));
      REQUIRE(pairs.hops[i] >= 1);
      REQUIRE(pairs.hops[i] <= m - 1);
    }
  }
  // Both branches of the group rule were exercised.
  CHECK(fallbacks > 0);
  CHECK(fallbacks < kInstances);
}
