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


#include "spt/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "spt/errors.hpp"

namespace spt {

namespace {

void check_labels(std::span<const std::uint32_t> labels, std::size_t rows, std::size_t way) {
  if (labels.size() != rows) {
    throw DimensionError("cross_entropy: " + std::to_string(rows) + " predictions for " +
                         std::to_string(labels.size()) + " labels");
  }
  for (auto y : labels) {
    if (y >= way) {
      throw ContractError("cross_entropy: label " + std::to_string(y) + " out of range for " +
                          std::to_string(way) + " classes");
    }
  }
}

Tensor one_hot(std::span<const std::uint32_t> labels, std::size_t way) {
  Tensor t = Tensor::matrix(labels.size(), way);
  for (std::size_t i = 0; i < labels.size(); ++i) t(i, labels[i]) = 1.0;
  return t;
}

}  // namespace

Tensor joint_distribution(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw DimensionError("joint_distribution: pair rows differ in shape");
  if (a.rows() == 0) throw ContractError("joint_distribution: empty pair set");
  const std::size_t n = a.cols();
  Tensor p = Tensor::matrix(n, n);
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < n; ++c) p(r, c) += a(i, r) * b(i, c);
  Tensor sym = p;
  const double inv = 1.0 / static_cast<double>(a.rows());
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c) sym(r, c) = 0.5 * (p(r, c) + p(c, r)) * inv;
  return sym;
}

double mutual_information_loss(const Tensor& joint) {
  const std::size_t n = joint.rows();
  if (joint.cols() != n) throw DimensionError("mutual_information_loss: joint must be square");
  std::vector<double> row(n, 0.0), col(n, 0.0);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c) {
      row[r] += joint(r, c);
      col[c] += joint(r, c);
    }
  double mi = 0.0;
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c) {
      const double p = joint(r, c);
      if (p > 0.0) mi += p * std::log(p / (row[r] * col[c]));
    }
  return -mi;
}

double kl_diversity_loss(const Tensor& preds) {
  const std::size_t m = preds.rows();
  const std::size_t n = preds.cols();
  if (m == 0) throw ContractError("kl_diversity_loss: no predictions");
  std::vector<double> marginal(n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t k = 0; k < n; ++k) marginal[k] += preds(i, k);
  double kl = 0.0;
  for (double v : marginal) {
    const double p = v / static_cast<double>(m);
    if (p > 0.0) kl += p * std::log(static_cast<double>(n) * p);
  }
  return kl;
}

double cross_entropy_loss(const Tensor& preds, std::span<const std::uint32_t> labels) {
  check_labels(labels, preds.rows(), preds.cols());
  double loss = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    loss -= std::log(std::max(preds(i, labels[i]), ad::kLogFloor));
  }
  return loss;
}

namespace ad {

Var joint_distribution(Var curr, const Tensor& partners) {
  const Tensor& c = curr.value();
  if (!c.same_shape(partners)) {
    throw DimensionError("joint_distribution: predictions " + c.shape_string() + " vs partners " +
                         partners.shape_string());
  }
  if (c.rows() == 0) throw ContractError("joint_distribution: empty pair set");
  Tape& t = *curr.tape;
  Var p = matmul(transpose(curr), t.constant(partners));
  Var sym = add(p, transpose(p));
  return scale(sym, 0.5 / static_cast<double>(c.rows()));
}

Var mutual_information_loss(Var joint) {
  Var row = row_sum(joint);    // N x 1
  Var col = col_sum(joint);    // 1 x N
  Var outer = matmul(row, col);  // N x N
  Var info = sum(mul(joint, sub(log(joint), log(outer))));
  return scale(info, -1.0);
}

Var kl_diversity_loss(Var preds) {
  if (preds.value().rows() == 0) throw ContractError("kl_diversity_loss: no predictions");
  const double n = static_cast<double>(preds.value().cols());
  Var marginal = col_mean(preds);
  return sum(mul(marginal, log(scale(marginal, n))));
}

Var cross_entropy_loss(Var preds, std::span<const std::uint32_t> labels) {
  const Tensor& p = preds.value();
  check_labels(labels, p.rows(), p.cols());
  Var picked = sum(mul(preds.tape->constant(one_hot(labels, p.cols())), log(preds)));
  return scale(picked, -1.0);
}

}  // namespace ad

Tensor partner_rows(const PairSet& pairs, const PredictionSet& prev) {
  Tensor out = Tensor::matrix(pairs.size(), prev.way());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    auto src = prev.row(pairs.partner[i]);
    std::copy(src.begin(), src.end(), out.row_span(i).begin());
  }
  return out;
}

ExternalLoss external_loss(ad::Var curr, const PairSet& pairs, const PredictionSet& prev,
                           double sigma, bool use_mi) {
  if (!(sigma >= 0.0)) throw ContractError("external_loss: sigma must be nonnegative");
  ExternalLoss out;
  ad::Var kl = ad::kl_diversity_loss(curr);
  out.kl = kl.value()[0];
  if (!use_mi) {
    out.total = ad::scale(kl, sigma);
    return out;
  }
  ad::Var mi = ad::mutual_information_loss(ad::joint_distribution(curr, partner_rows(pairs, prev)));
  out.mi = mi.value()[0];
  out.total = ad::add(mi, ad::scale(kl, sigma));
  return out;
}

}  // namespace spt
