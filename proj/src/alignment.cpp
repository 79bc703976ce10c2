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


#include "spt/alignment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "spt/errors.hpp"

namespace spt {

namespace {

double norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

void check_fraction(double f, const char* name) {
  if (!(f > 0.0 && f <= 1.0)) {
    throw ContractError(std::string(name) + " must lie in (0, 1], got " + std::to_string(f));
  }
}

}  // namespace

bool CredibleGroup::contains(std::size_t i) const {
  return std::binary_search(members.begin(), members.end(), i);
}

double entropy(std::span<const double> p) {
  double total = 0.0;
  for (double v : p) {
    if (v < 0.0) throw ContractError("entropy: negative probability");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw ContractError("entropy: vector sums to " + std::to_string(total) + ", not 1");
  }
  double h = 0.0;
  for (double v : p) {
    if (v > 0.0) h -= v * std::log(v);
  }
  return h;
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("cosine_similarity: length mismatch");
  const double na = norm(a), nb = norm(b);
  if (na == 0.0 || nb == 0.0) throw ContractError("cosine_similarity: zero-norm vector");
  double dot = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) dot += a[k] * b[k];
  return dot / (na * nb);
}

std::size_t selection_size(double fraction, std::size_t m) {
  const auto k = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(m)));
  return std::clamp<std::size_t>(k, 1, std::max<std::size_t>(m, 1));
}

std::vector<std::size_t> rank_select(std::span<const double> keys, std::size_t count, bool ascending) {
  std::vector<std::size_t> idx(keys.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  count = std::min(count, idx.size());
  auto better = [&](std::size_t a, std::size_t b) {
    if (keys[a] != keys[b]) return ascending ? keys[a] < keys[b] : keys[a] > keys[b];
    return a < b;
  };
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(count), idx.end(), better);
  idx.resize(count);
  std::sort(idx.begin(), idx.end());
  return idx;
}

std::vector<std::size_t> entropy_group(const PredictionSet& prev, double alpha) {
  check_fraction(alpha, "alpha");
  std::vector<double> h(prev.size());
  for (std::size_t i = 0; i < prev.size(); ++i) h[i] = entropy(prev.row(i));
  return rank_select(h, selection_size(alpha, prev.size()), true);
}

Tensor prototype_centers(const Tensor& support_preds, std::span<const std::uint32_t> support_labels,
                         std::size_t way) {
  if (support_preds.rows() != support_labels.size()) {
    throw DimensionError("prototype_centers: " + std::to_string(support_preds.rows()) +
                         " predictions for " + std::to_string(support_labels.size()) + " labels");
  }
  Tensor centers = Tensor::matrix(way, support_preds.cols());
  std::vector<std::size_t> count(way, 0);
  for (std::size_t i = 0; i < support_labels.size(); ++i) {
    const auto n = support_labels[i];
    if (n >= way) throw ContractError("prototype_centers: label out of range");
    ++count[n];
    for (std::size_t k = 0; k < support_preds.cols(); ++k) centers(n, k) += support_preds(i, k);
  }
  for (std::size_t n = 0; n < way; ++n) {
    if (count[n] == 0) throw ContractError("prototype_centers: class " + std::to_string(n) + " has no support");
    for (std::size_t k = 0; k < centers.cols(); ++k) centers(n, k) /= static_cast<double>(count[n]);
  }
  return centers;
}

std::vector<double> prototype_scores(const PredictionSet& prev, const Tensor& centers) {
  std::vector<double> a(prev.size());
  for (std::size_t i = 0; i < prev.size(); ++i) {
    double best = -2.0;
    for (std::size_t n = 0; n < centers.rows(); ++n) {
      best = std::max(best, cosine_similarity(prev.row(i), centers.row_span(n)));
    }
    a[i] = best;
  }
  return a;
}

std::vector<std::size_t> prototype_group(const PredictionSet& prev, const Tensor& centers,
                                         double gamma) {
  check_fraction(gamma, "gamma");
  const std::vector<double> a = prototype_scores(prev, centers);
  return rank_select(a, selection_size(gamma, prev.size()), false);
}

CredibleGroup make_group(const PredictionSet& prev, std::vector<std::size_t> members) {
  std::sort(members.begin(), members.end());
  members.erase(std::unique(members.begin(), members.end()), members.end());
  CredibleGroup g;
  g.snapshot = Tensor::matrix(members.size(), prev.way());
  for (std::size_t r = 0; r < members.size(); ++r) {
    if (members[r] >= prev.size()) throw ContractError("make_group: member index out of range");
    auto src = prev.row(members[r]);
    std::copy(src.begin(), src.end(), g.snapshot.row_span(r).begin());
  }
  g.members = std::move(members);
  return g;
}

CredibleGroup credible_group(const PredictionSet& prev, double alpha, double gamma,
                             std::span<const std::uint32_t> support_labels, GroupRule rule) {
  if (rule == GroupRule::kEntropyOnly) return make_group(prev, entropy_group(prev, alpha));

  if (support_labels.size() > prev.size()) throw ContractError("credible_group: more labels than samples");
  Tensor support = Tensor::matrix(support_labels.size(), prev.way());
  for (std::size_t i = 0; i < support_labels.size(); ++i) {
    auto src = prev.row(i);
    std::copy(src.begin(), src.end(), support.row_span(i).begin());
  }
  const Tensor centers = prototype_centers(support, support_labels, prev.way());
  std::vector<std::size_t> pro = prototype_group(prev, centers, gamma);
  if (rule == GroupRule::kPrototypeOnly) return make_group(prev, std::move(pro));

  std::vector<std::size_t> en = entropy_group(prev, alpha);
  std::vector<std::size_t> both;
  std::set_intersection(en.begin(), en.end(), pro.begin(), pro.end(), std::back_inserter(both));
  if (both.empty()) {
    CredibleGroup g = make_group(prev, std::move(en));
    g.fell_back = true;
    return g;
  }
  return make_group(prev, std::move(both));
}

ChainResult chain_search(std::size_t i, std::span<const double> start, const PredictionSet& prev,
                         const CredibleGroup& group) {
  if (group.members.empty()) throw ContractError("chain_search: empty credible group");
  const std::size_t m = prev.size();
  if (i >= m) throw ContractError("chain_search: sample index out of range");

  std::vector<char> visited(m, 0);
  visited[i] = 1;
  std::span<const double> node = start;
  ChainResult out;
  for (std::size_t hop = 1; hop < m; ++hop) {
    std::size_t best = m;
    double best_sim = -2.0;
    for (std::size_t k = 0; k < m; ++k) {
      if (visited[k]) continue;
      const double s = cosine_similarity(node, prev.row(k));
      if (s > best_sim) {
        best_sim = s;
        best = k;
      }
    }
    visited[best] = 1;
    out.hops = hop;
    if (group.contains(best)) {
      out.partner = best;
      return out;
    }
    node = prev.row(best);
  }
  // Only reachable when the group is {i}: every other sample was visited.
  out.fell_back = true;
  double best_sim = -2.0;
  for (std::size_t j : group.members) {
    const double s = cosine_similarity(start, prev.row(j));
    if (s > best_sim) {
      best_sim = s;
      out.partner = j;
    }
  }
  return out;
}

PairSet pair_all(const PredictionSet& curr, const PredictionSet& prev, const CredibleGroup& group) {
  if (curr.size() != prev.size()) throw DimensionError("pair_all: step sizes differ");
  PairSet pairs;
  pairs.partner.resize(curr.size());
  pairs.hops.resize(curr.size());
  for (std::size_t i = 0; i < curr.size(); ++i) {
    const ChainResult r = chain_search(i, curr.row(i), prev, group);
    pairs.partner[i] = r.partner;
    pairs.hops[i] = r.hops;
  }
  return pairs;
}

}  // namespace spt
