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

#include "spt/tensor.hpp"

namespace spt {

/// Class-probability vectors for every episode sample at one step.
/// Rows follow episode order: support first, then query.
struct PredictionSet {
  Tensor probs;  // m x N
  std::size_t step = 0;

  std::size_t size() const noexcept { return probs.rows(); }
  std::size_t way() const noexcept { return probs.cols(); }
  std::span<const double> row(std::size_t i) const { return probs.row_span(i); }
};

/// Trusted subset of the previous step's predictions. `snapshot` holds the
/// member rows in member order and never changes during a step.
struct CredibleGroup {
  std::vector<std::size_t> members;  // ascending
  Tensor snapshot;                   // |members| x N
  bool fell_back = false;            // intersection was empty

  bool contains(std::size_t i) const;
};

struct ChainResult {
  std::size_t partner = 0;  // sample index of the group member reached
  std::size_t hops = 0;
  bool fell_back = false;   // chain exhausted without reaching the group
};

/// Pair (i, j): current-step sample i aligned to group member j.
struct PairSet {
  std::vector<std::size_t> partner;  // partner[i] = j
  std::vector<std::size_t> hops;

  std::size_t size() const noexcept { return partner.size(); }
};

/// Natural-log entropy; zero entries contribute nothing.
double entropy(std::span<const double> p);

/// Cosine similarity of two equal-length vectors. Throws on a zero vector.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

/// max(1, floor(fraction * m)).
std::size_t selection_size(double fraction, std::size_t m);

/// floor(alpha*m) lowest-entropy indices (at least one), ties by lower
/// index. Returned ascending.
std::vector<std::size_t> entropy_group(const PredictionSet& prev, double alpha);

/// Mean support prediction per class. `support_labels[i]` labels row i of
/// `support_preds`.
Tensor prototype_centers(const Tensor& support_preds, std::span<const std::uint32_t> support_labels,
                         std::size_t way);

/// a_i = max_n cos(p_i, o_n) for every sample.
std::vector<double> prototype_scores(const PredictionSet& prev, const Tensor& centers);

/// floor(gamma*m) highest-scoring indices (at least one), ties by lower
/// index. Returned ascending.
std::vector<std::size_t> prototype_group(const PredictionSet& prev, const Tensor& centers,
                                         double gamma);

/// Top `count` indices of `keys` under `better`, ties by lower index.
std::vector<std::size_t> rank_select(std::span<const double> keys, std::size_t count,
                                     bool ascending);

enum class GroupRule { kIntersection, kEntropyOnly, kPrototypeOnly };

/// G = G_pro ∩ G_en, falling back to G_en when the intersection is empty.
/// Support rows are the first support_labels.size() rows of `prev`.
CredibleGroup credible_group(const PredictionSet& prev, double alpha, double gamma,
                             std::span<const std::uint32_t> support_labels,
                             GroupRule rule = GroupRule::kIntersection);

/// Builds a group from explicit member indices.
CredibleGroup make_group(const PredictionSet& prev, std::vector<std::size_t> members);

/// Nearest-neighbour chain from `start` (sample `i`'s current prediction)
/// over the previous-step predictions of all samples. Sample i itself is
/// never a hop target. Stops at the first group member; if every other
/// sample is visited first, returns the member most similar to `start`.
ChainResult chain_search(std::size_t i, std::span<const double> start, const PredictionSet& prev,
                         const CredibleGroup& group);

/// One chain search per sample of `curr`.
PairSet pair_all(const PredictionSet& curr, const PredictionSet& prev, const CredibleGroup& group);

}  // namespace spt
