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

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "spt/tensor.hpp"

namespace spt::ad {

/// Smallest argument passed to log(); smaller inputs are clamped.
inline constexpr double kLogFloor = 1e-12;

/// A named weight tensor. Frozen parameters (requires_grad == false) still
/// pass gradient through the graph but never accumulate into `grad`.
class Parameter {
 public:
  Parameter() = default;
  Parameter(Tensor value, bool requires_grad)
      : value(std::move(value)), requires_grad(requires_grad), grad(Tensor(this->value.shape())) {}

  void zero_grad() { grad = Tensor(value.shape()); }

  Tensor value;
  bool requires_grad = false;
  Tensor grad;
};

class Tape;

/// Handle to a node on a tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
};

enum class OpKind {
  kMatMul,
  kAddBias,
  kMulRow,
  kRelu,
  kSoftmax,
  kLog,
  kMul,
  kAdd,
  kSub,
  kDiv,
  kSum,
  kMean,
  kColMean,
  kColVariance,
  kRowSum,
  kColSum,
  kL2Norm,
  kCosine,
  kConcat,
  kTranspose,
};

std::string_view op_name(OpKind kind);

/// Records forward operations and replays them in reverse to compute
/// gradients. One tape per optimization step; throw it away afterwards.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Tensor& out_grad)>;

  Var constant(Tensor value);
  Var parameter(Parameter& param);
  /// Read-only view of a frozen parameter; throws if it is trainable.
  Var parameter(const Parameter& param);

  const Tensor& value(Var v) const { return nodes_[v.id].value; }
  /// Gradient of the last backward() loss with respect to node `v`.
  /// Zero-shaped if the node does not depend on any trainable input.
  const Tensor& grad(Var v) const { return nodes_[v.id].grad; }
  bool needs_grad(Var v) const { return nodes_[v.id].needs_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Fills node gradients in reverse recording order and accumulates into
  /// every trainable Parameter referenced on this tape.
  void backward(Var loss);

  /// Appends a derived node. `fn` runs during backward() only when some
  /// input needs a gradient.
  Var record(OpKind kind, Tensor value, std::span<const Var> inputs, BackwardFn fn);

  /// Adds `g` into the gradient buffer of `v`, allocating it on first use.
  void accumulate(Var v, const Tensor& g);
  void accumulate(Var v, std::span<const double> g);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool needs_grad = false;
    Parameter* param = nullptr;
    BackwardFn backward;
  };

  std::deque<Node> nodes_;  // stable addresses: Var::value() hands out references
};

// Differentiable operations. Inputs must share a tape.

Var matmul(Var a, Var b);
/// a (m x n) plus row vector b (1 x n) on every row.
Var add_bias(Var a, Var b);
/// a (m x n) times row vector r (1 x n) elementwise on every row.
Var mul_row(Var a, Var r);
Var relu(Var a);
/// Row-wise softmax with max subtraction.
Var softmax(Var a);
/// Elementwise natural log of max(a, kLogFloor).
Var log(Var a);
Var mul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var div(Var a, Var b);
Var scale(Var a, double c);
Var sum(Var a);
Var mean(Var a);
Var col_mean(Var a);
/// Population variance of each column (divisor = rows).
Var col_variance(Var a);
Var row_sum(Var a);
Var col_sum(Var a);
/// Euclidean norm of each row, as an m x 1 column.
Var l2_norm(Var a);
/// Cosine similarity of matching rows of a and b, as an m x 1 column.
Var cosine(Var a, Var b);
Var concat_rows(Var a, Var b);
Var transpose(Var a);

/// Generic dispatch by op kind; validates arity.
Var forward_op(OpKind kind, std::span<const Var> inputs);

/// Scalar function of one tensor, built on the supplied tape.
using ScalarFn = std::function<Var(Tape&, Var)>;

/// Max over coordinates of |analytic - central difference| / max(1, |analytic|).
double grad_check(const ScalarFn& fn, const Tensor& point, double step = 1e-4);

}  // namespace spt::ad
