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

#include "spt/alignment.hpp"
#include "spt/autodiff.hpp"

namespace spt {

// Tape-free evaluations. These are the reference forms used by tests and
// diagnostics; the ad:: overloads below compute the same quantities on a tape.

/// P = (1/M) sum_i a_i (x) b_i, then symmetrized (P + P^T) / 2.
Tensor joint_distribution(const Tensor& a, const Tensor& b);
/// -I for a joint distribution; zero cells contribute nothing.
double mutual_information_loss(const Tensor& joint);
/// KL of the column-mean marginal from uniform.
double kl_diversity_loss(const Tensor& preds);
/// -sum_i log max(p[i, y_i], 1e-12).
double cross_entropy_loss(const Tensor& preds, std::span<const std::uint32_t> labels);

namespace ad {

/// Joint over pairs (curr_i, partner_i). Gradient flows through `curr` only;
/// partners are the credible group's frozen snapshot.
Var joint_distribution(Var curr, const Tensor& partners);
Var mutual_information_loss(Var joint);
Var kl_diversity_loss(Var preds);
Var cross_entropy_loss(Var preds, std::span<const std::uint32_t> labels);

}  // namespace ad

/// Gathers the partner snapshot rows for every pair, in sample order.
Tensor partner_rows(const PairSet& pairs, const PredictionSet& prev);

struct ExternalLoss {
  ad::Var total;
  double mi = 0.0;  // L_MI value (0 when disabled)
  double kl = 0.0;  // L_KL value
};

/// L_ex = L_MI + sigma * L_KL. `use_mi = false` drops the MI term.
ExternalLoss external_loss(ad::Var curr, const PairSet& pairs, const PredictionSet& prev,
                           double sigma, bool use_mi = true);

}  // namespace spt
