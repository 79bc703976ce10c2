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


#include "spt/autodiff.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "spt/errors.hpp"

namespace spt::ad {

const Tensor& Var::value() const { return tape->value(*this); }

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::kMatMul: return "matmul";
    case OpKind::kAddBias: return "add_bias";
    case OpKind::kMulRow: return "mul_row";
    case OpKind::kRelu: return "relu";
    case OpKind::kSoftmax: return "softmax";
    case OpKind::kLog: return "log";
    case OpKind::kMul: return "mul";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kDiv: return "div";
    case OpKind::kSum: return "sum";
    case OpKind::kMean: return "mean";
    case OpKind::kColMean: return "col_mean";
    case OpKind::kColVariance: return "col_variance";
    case OpKind::kRowSum: return "row_sum";
    case OpKind::kColSum: return "col_sum";
    case OpKind::kL2Norm: return "l2_norm";
    case OpKind::kCosine: return "cosine";
    case OpKind::kConcat: return "concat_rows";
    case OpKind::kTranspose: return "transpose";
  }
  return "unknown";
}

Var Tape::constant(Tensor value) {
  if (!value.all_finite()) throw NumericError("constant: non-finite input");
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

Var Tape::parameter(Parameter& param) {
  if (!param.value.all_finite()) throw NumericError("parameter: non-finite value");
  Node n;
  n.value = param.value;
  n.needs_grad = param.requires_grad;
  n.param = &param;
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

Var Tape::parameter(const Parameter& param) {
  if (param.requires_grad) throw ContractError("parameter: trainable parameter passed as const");
  return constant(param.value);
}

Var Tape::record(OpKind kind, Tensor value, std::span<const Var> inputs, BackwardFn fn) {
  if (!value.all_finite()) {
    throw NumericError(std::string(op_name(kind)) + ": non-finite output");
  }
  Node n;
  n.value = std::move(value);
  for (const Var& in : inputs) {
    if (in.tape != this) throw ContractError(std::string(op_name(kind)) + ": input from another tape");
    n.needs_grad = n.needs_grad || nodes_[in.id].needs_grad;
  }
  if (n.needs_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

void Tape::accumulate(Var v, std::span<const double> g) {
  Node& n = nodes_[v.id];
  if (!n.needs_grad) return;
  if (n.grad.empty()) n.grad = Tensor(n.value.shape());
  auto dst = n.grad.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
}

void Tape::accumulate(Var v, const Tensor& g) { accumulate(v, g.data()); }

void Tape::backward(Var loss) {
  if (loss.tape != this || loss.id >= nodes_.size()) {
    throw ContractError("backward: loss is not on this tape");
  }
  if (nodes_[loss.id].value.size() != 1) {
    throw ContractError("backward: loss must be scalar, got shape " +
                        nodes_[loss.id].value.shape_string());
  }
  for (Node& n : nodes_) n.grad = Tensor();
  if (!nodes_[loss.id].needs_grad) return;
  nodes_[loss.id].grad = Tensor(nodes_[loss.id].value.shape(), 1.0);
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.needs_grad || n.grad.empty()) continue;
    // Closures only touch earlier nodes, so `n` stays put.
    if (n.backward) n.backward(*this, n.grad);
  }
  for (Node& n : nodes_) {
    if (n.param != nullptr && n.param->requires_grad && !n.grad.empty()) {
      auto dst = n.param->grad.data();
      auto src = n.grad.data();
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
    }
  }
}

namespace {

Tape& tape_of(Var a, Var b, OpKind kind) {
  if (a.tape == nullptr || a.tape != b.tape) {
    throw ContractError(std::string(op_name(kind)) + ": inputs on different tapes");
  }
  return *a.tape;
}

[[noreturn]] void shape_error(OpKind kind, const Tensor& a, const Tensor& b) {
  throw DimensionError(std::string(op_name(kind)) + ": incompatible shapes " + a.shape_string() +
                       " and " + b.shape_string());
}

void require_rank2(OpKind kind, const Tensor& a) {
  if (a.rank() != 2) {
    throw DimensionError(std::string(op_name(kind)) + ": expected a matrix, got shape " +
                         a.shape_string());
  }
}

Tensor matmul_raw(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out = Tensor::matrix(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = &out(i, 0);
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a(i, p);
      if (av == 0.0) continue;
      const double* brow = b.row_span(p).data();
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  return out;
}

// a^T * b without materializing the transpose.
Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out = Tensor::matrix(k, n);
  for (std::size_t i = 0; i < m; ++i) {
    const double* brow = b.row_span(i).data();
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a(i, p);
      if (av == 0.0) continue;
      double* orow = &out(p, 0);
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  return out;
}

// a * b^T.
Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  Tensor out = Tensor::matrix(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a.row_span(i).data();
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b.row_span(j).data();
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
      out(i, j) = s;
    }
  }
  return out;
}

template <typename F>
Tensor map(const Tensor& a, F f) {
  Tensor out(a.shape());
  auto src = a.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = f(src[i]);
  return out;
}

template <typename F>
Tensor zip(const Tensor& a, const Tensor& b, F f) {
  Tensor out(a.shape());
  auto x = a.data();
  auto y = b.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < x.size(); ++i) dst[i] = f(x[i], y[i]);
  return out;
}

Tensor colsum_raw(const Tensor& a) {
  Tensor out = Tensor::matrix(1, a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out[j] += a(i, j);
  return out;
}

Var elementwise(OpKind kind, Var a, Var b) {
  Tape& t = tape_of(a, b, kind);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  if (!x.same_shape(y)) shape_error(kind, x, y);
  Tensor out;
  switch (kind) {
    case OpKind::kMul: out = zip(x, y, [](double u, double v) { return u * v; }); break;
    case OpKind::kAdd: out = zip(x, y, [](double u, double v) { return u + v; }); break;
    case OpKind::kSub: out = zip(x, y, [](double u, double v) { return u - v; }); break;
    case OpKind::kDiv:
      out = zip(x, y, [](double u, double v) { return u / v; });
      break;
    default: throw ContractError("elementwise: bad op kind");
  }
  const std::array<Var, 2> ins{a, b};
  return t.record(kind, std::move(out), ins, [a, b, kind](Tape& tp, const Tensor& g) {
    const Tensor& x = tp.value(a);
    const Tensor& y = tp.value(b);
    switch (kind) {
      case OpKind::kMul:
        if (tp.needs_grad(a)) tp.accumulate(a, zip(g, y, [](double u, double v) { return u * v; }));
        if (tp.needs_grad(b)) tp.accumulate(b, zip(g, x, [](double u, double v) { return u * v; }));
        break;
      case OpKind::kAdd:
        tp.accumulate(a, g);
        tp.accumulate(b, g);
        break;
      case OpKind::kSub:
        tp.accumulate(a, g);
        if (tp.needs_grad(b)) tp.accumulate(b, map(g, [](double u) { return -u; }));
        break;
      case OpKind::kDiv:
        if (tp.needs_grad(a)) tp.accumulate(a, zip(g, y, [](double u, double v) { return u / v; }));
        if (tp.needs_grad(b)) {
          Tensor gb(g.shape());
          for (std::size_t i = 0; i < g.size(); ++i) gb[i] = -g[i] * x[i] / (y[i] * y[i]);
          tp.accumulate(b, gb);
        }
        break;
      default: break;
    }
  });
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a, b, OpKind::kMatMul);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  require_rank2(OpKind::kMatMul, x);
  require_rank2(OpKind::kMatMul, y);
  if (x.cols() != y.rows()) shape_error(OpKind::kMatMul, x, y);
  const std::array<Var, 2> ins{a, b};
  return t.record(OpKind::kMatMul, matmul_raw(x, y), ins, [a, b](Tape& tp, const Tensor& g) {
    if (tp.needs_grad(a)) tp.accumulate(a, matmul_nt(g, tp.value(b)));
    if (tp.needs_grad(b)) tp.accumulate(b, matmul_tn(tp.value(a), g));
  });
}

Var add_bias(Var a, Var b) {
  Tape& t = tape_of(a, b, OpKind::kAddBias);
  const Tensor& x = a.value();
  const Tensor& bias = b.value();
  require_rank2(OpKind::kAddBias, x);
  if (bias.rows() != 1 || bias.cols() != x.cols()) shape_error(OpKind::kAddBias, x, bias);
  Tensor out = x;
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) out(i, j) += bias[j];
  const std::array<Var, 2> ins{a, b};
  return t.record(OpKind::kAddBias, std::move(out), ins, [a, b](Tape& tp, const Tensor& g) {
    tp.accumulate(a, g);
    if (tp.needs_grad(b)) tp.accumulate(b, colsum_raw(g));
  });
}

Var mul_row(Var a, Var r) {
  Tape& t = tape_of(a, r, OpKind::kMulRow);
  const Tensor& x = a.value();
  const Tensor& w = r.value();
  require_rank2(OpKind::kMulRow, x);
  if (w.rows() != 1 || w.cols() != x.cols()) shape_error(OpKind::kMulRow, x, w);
  Tensor out = x;
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) out(i, j) *= w[j];
  const std::array<Var, 2> ins{a, r};
  return t.record(OpKind::kMulRow, std::move(out), ins, [a, r](Tape& tp, const Tensor& g) {
    const Tensor& x = tp.value(a);
    const Tensor& w = tp.value(r);
    if (tp.needs_grad(a)) {
      Tensor ga = g;
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) ga(i, j) *= w[j];
      tp.accumulate(a, ga);
    }
    if (tp.needs_grad(r)) {
      Tensor gr = Tensor::matrix(1, g.cols());
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) gr[j] += g(i, j) * x(i, j);
      tp.accumulate(r, gr);
    }
  });
}

Var relu(Var a) {
  Tape& t = *a.tape;
  Tensor out = map(a.value(), [](double v) { return v > 0.0 ? v : 0.0; });
  const std::array<Var, 1> ins{a};
  return t.record(OpKind::kRelu, std::move(out), ins, [a](Tape& tp, const Tensor& g) {
    tp.accumulate(a, zip(g, tp.value(a), [](double u, double v) { return v > 0.0 ? u : 0.0; }));
  });
}

Var softmax(Var a) {
  Tape& t = *a.tape;
  const Tensor& x = a.value();
  require_rank2(OpKind::kSoftmax, x);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto in = x.row_span(i);
    auto o = out.row_span(i);
    const double mx = *std::max_element(in.begin(), in.end());
    double z = 0.0;
    for (std::size_t j = 0; j < in.size(); ++j) z += (o[j] = std::exp(in[j] - mx));
    for (double& v : o) v /= z;
  }
  const std::array<Var, 1> ins{a};
  const std::size_t self = t.size();
  return t.record(OpKind::kSoftmax, std::move(out), ins, [a, self](Tape& tp, const Tensor& g) {
    const Tensor& y = tp.value(Var{&tp, self});
    Tensor ga(g.shape());
    for (std::size_t i = 0; i < g.rows(); ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < g.cols(); ++j) dot += g(i, j) * y(i, j);
      for (std::size_t j = 0; j < g.cols(); ++j) ga(i, j) = y(i, j) * (g(i, j) - dot);
    }
    tp.accumulate(a, ga);
  });
}

Var log(Var a) {
  Tape& t = *a.tape;
  Tensor out = map(a.value(), [](double v) { return std::log(std::max(v, kLogFloor)); });
  const std::array<Var, 1> ins{a};
  return t.record(OpKind::kLog, std::move(out), ins, [a](Tape& tp, const Tensor& g) {
    tp.accumulate(a, zip(g, tp.value(a), [](double u, double v) { return v >= kLogFloor ? u / v : 0.0; }));
  });
}

Var mul(Var a, Var b) { return elementwise(OpKind::kMul, a, b); }
Var add(Var a, Var b) { return elementwise(OpKind::kAdd, a, b); }
Var sub(Var a, Var b) { return elementwise(OpKind::kSub, a, b); }
Var div(Var a, Var b) { return elementwise(OpKind::kDiv, a, b); }

Var scale(Var a, double c) {
  // Recorded as an elementwise product with a constant.
  Tape& t = *a.tape;
  Var k = t.constant(Tensor(a.value().shape(), c));
  return mul(a, k);
}

Var sum(Var a) {
  Tape& t = *a.tape;
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  const std::array<Var, 1> ins{a};
  return t.record(OpKind::kSum, Tensor::scalar(s), ins, [a](Tape& tp, const Tensor& g) {
    tp.accumulate(a, Tensor(tp.value(a).shape(), g[0]));
  });
}

Var mean(Var a) {
  Tape& t = *a.tape;
  const double n = static_cast<double>(a.value().size());
  if (n == 0) throw DimensionError("mean: empty tensor");
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  const std::array<Var, 1> ins{a};
  return t.record(OpKind::kMean, Tensor::scalar(s / n), ins, [a, n](Tape& tp, const Tensor& g) {
    tp.accumulate(a, Tensor(tp.value(a).shape(), g[0] / n));
  });
}

Var col_mean(Var a) {
  Tape& t = *a.tape;
  const Tensor& x = a.value();
  require_rank2(OpKind::kColMean, x);
  if (x.rows() == 0) throw DimensionError("col_mean: no rows");
  const double m = static_cast<double>(x.rows());
  Tensor out = colsum_raw(x);
  for (double& v : out.data()) v /= m;
  const std::array<Var, 1> ins{a};
  return t.record(OpKind::kColMean, std::move(out), ins, [a, m](Tape& tp, const Tensor& g) {
    const Tensor& x = tp.value(a);
    Tensor ga(x.shape());
    for (std::size_t i = 0; i < x.rows(); ++i)
      for (std::size_t j = 0; j < x.cols(); ++j) ga(i, j) = g[j] / m;
    tp.accumulate(a, ga);
  });
}

Var col_variance(Var a) {
  Tape& t = *a.tape;
  const Tensor& x = a.value();
  require_rank2(OpKind::kColVariance, x);
  if (x.rows() == 0) throw DimensionError("col_variance: no rows");
  const double m = static_cast<double>(x.rows());
  Tensor mu = colsum_raw(x);
  for (double& v : mu.data()) v /= m;
  Tensor out = Tensor::matrix(1, x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) {
      const double d = x(i, j) - mu[j];
      out[j] += d * d;
    }
  for (double& v : out.data()) v /= m;
  const std::array<Var, 1> ins{a};
  return t.record(OpKind::kColVariance, std::move(out), ins,
                  [a, m, mu = std::move(mu)](Tape& tp, const Tensor& g) {
                    const Tensor& x = tp.value(a);
                    Tensor ga(x.shape());
                    for (std::size_t i = 0; i < x.rows(); ++i)
                      for (std::size_t j = 0; j < x.cols(); ++j)
                        ga(i, j) = g[j] * 2.0 * (x(i, j) - mu[j]) / m;
                    tp.accumulate(a, ga);
                  });
}

Var row_sum(Var a) {
  Tape& t = *a.tape;
  const Tensor& x = a.value();
  require_rank2(OpKind::kRowSum, x);
  Tensor out = Tensor::matrix(x.rows(), 1);
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (double v : x.row_span(i)) out[i] += v;
  const std::array<Var, 1> ins{a};
  return t.record(OpKind::kRowSum, std::move(out), ins, [a](Tape& tp, const Tensor& g) {
    const Tensor& x = tp.value(a);
    Tensor ga(x.shape());
    for (std::size_t i = 0; i < x.rows(); ++i)
      for (std::size_t j = 0; j < x.cols(); ++j) ga(i, j) = g[i];
    tp.accumulate(a, ga);
  });
}

Var col_sum(Var a) {
  Tape& t = *a.tape;
  const Tensor& x = a.value();
  require_rank2(OpKind::kColSum, x);
  const std::array<Var, 1> ins{a};
  return t.record(OpKind::kColSum, colsum_raw(x), ins, [a](Tape& tp, const Tensor& g) {
    const Tensor& x = tp.value(a);
    Tensor ga(x.shape());
    for (std::size_t i = 0; i < x.rows(); ++i)
      for (std::size_t j = 0; j < x.cols(); ++j) ga(i, j) = g[j];
    tp.accumulate(a, ga);
  });
}

Var l2_norm(Var a) {
  Tape& t = *a.tape;
  const Tensor& x = a.value();
  require_rank2(OpKind::kL2Norm, x);
  Tensor out = Tensor::matrix(x.rows(), 1);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double s = 0.0;
    for (double v : x.row_span(i)) s += v * v;
    out[i] = std::sqrt(s);
  }
  const std::array<Var, 1> ins{a};
  const std::size_t self = t.size();
  return t.record(OpKind::kL2Norm, std::move(out), ins, [a, self](Tape& tp, const Tensor& g) {
    const Tensor& x = tp.value(a);
    const Tensor& n = tp.value(Var{&tp, self});
    Tensor ga(x.shape());
    for (std::size_t i = 0; i < x.rows(); ++i) {
      if (n[i] == 0.0) continue;  // subgradient 0 at the origin
      for (std::size_t j = 0; j < x.cols(); ++j) ga(i, j) = g[i] * x(i, j) / n[i];
    }
    tp.accumulate(a, ga);
  });
}

Var cosine(Var a, Var b) {
  Tape& t = tape_of(a, b, OpKind::kCosine);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  require_rank2(OpKind::kCosine, x);
  if (!x.same_shape(y)) shape_error(OpKind::kCosine, x, y);
  const std::size_t m = x.rows(), n = x.cols();
  // Per row: dot, |x|, |y|.
  std::vector<double> dots(m), nx(m), ny(m);
  Tensor out = Tensor::matrix(m, 1);
  for (std::size_t i = 0; i < m; ++i) {
    double d = 0, sx = 0, sy = 0;
    for (std::size_t j = 0; j < n; ++j) {
      d += x(i, j) * y(i, j);
      sx += x(i, j) * x(i, j);
      sy += y(i, j) * y(i, j);
    }
    if (sx == 0.0 || sy == 0.0) throw NumericError("cosine: zero-norm row " + std::to_string(i));
    dots[i] = d;
    nx[i] = std::sqrt(sx);
    ny[i] = std::sqrt(sy);
    out[i] = d / (nx[i] * ny[i]);
  }
  const std::array<Var, 2> ins{a, b};
  return t.record(OpKind::kCosine, std::move(out), ins,
                  [a, b, dots, nx, ny](Tape& tp, const Tensor& g) {
                    const Tensor& x = tp.value(a);
                    const Tensor& y = tp.value(b);
                    const bool ga_on = tp.needs_grad(a), gb_on = tp.needs_grad(b);
                    Tensor ga(x.shape()), gb(y.shape());
                    for (std::size_t i = 0; i < x.rows(); ++i) {
                      const double c = dots[i] / (nx[i] * ny[i]);
                      for (std::size_t j = 0; j < x.cols(); ++j) {
                        if (ga_on)
                          ga(i, j) = g[i] * (y(i, j) / (nx[i] * ny[i]) - c * x(i, j) / (nx[i] * nx[i]));
                        if (gb_on)
                          gb(i, j) = g[i] * (x(i, j) / (nx[i] * ny[i]) - c * y(i, j) / (ny[i] * ny[i]));
                      }
                    }
                    if (ga_on) tp.accumulate(a, ga);
                    if (gb_on) tp.accumulate(b, gb);
                  });
}

Var concat_rows(Var a, Var b) {
  Tape& t = tape_of(a, b, OpKind::kConcat);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  require_rank2(OpKind::kConcat, x);
  require_rank2(OpKind::kConcat, y);
  if (x.cols() != y.cols()) shape_error(OpKind::kConcat, x, y);
  std::vector<double> v(x.values());
  v.insert(v.end(), y.values().begin(), y.values().end());
  const std::size_t top = x.size();
  const std::array<Var, 2> ins{a, b};
  return t.record(OpKind::kConcat, Tensor({x.rows() + y.rows(), x.cols()}, std::move(v)), ins,
                  [a, b, top](Tape& tp, const Tensor& g) {
                    tp.accumulate(a, g.data().subspan(0, top));
                    tp.accumulate(b, g.data().subspan(top));
                  });
}

Var transpose(Var a) {
  Tape& t = *a.tape;
  const Tensor& x = a.value();
  require_rank2(OpKind::kTranspose, x);
  Tensor out = Tensor::matrix(x.cols(), x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) out(j, i) = x(i, j);
  const std::array<Var, 1> ins{a};
  return t.record(OpKind::kTranspose, std::move(out), ins, [a](Tape& tp, const Tensor& g) {
    Tensor ga = Tensor::matrix(g.cols(), g.rows());
    for (std::size_t i = 0; i < g.rows(); ++i)
      for (std::size_t j = 0; j < g.cols(); ++j) ga(j, i) = g(i, j);
    tp.accumulate(a, ga);
  });
}

Var forward_op(OpKind kind, std::span<const Var> in) {
  auto need = [&](std::size_t n) {
    if (in.size() != n) {
      throw ContractError(std::string(op_name(kind)) + ": expected " + std::to_string(n) +
                          " inputs, got " + std::to_string(in.size()));
    }
  };
  switch (kind) {
    case OpKind::kMatMul: need(2); return matmul(in[0], in[1]);
    case OpKind::kAddBias: need(2); return add_bias(in[0], in[1]);
    case OpKind::kMulRow: need(2); return mul_row(in[0], in[1]);
    case OpKind::kRelu: need(1); return relu(in[0]);
    case OpKind::kSoftmax: need(1); return softmax(in[0]);
    case OpKind::kLog: need(1); return log(in[0]);
    case OpKind::kMul: need(2); return mul(in[0], in[1]);
    case OpKind::kAdd: need(2); return add(in[0], in[1]);
    case OpKind::kSub: need(2); return sub(in[0], in[1]);
    case OpKind::kDiv: need(2); return div(in[0], in[1]);
    case OpKind::kSum: need(1); return sum(in[0]);
    case OpKind::kMean: need(1); return mean(in[0]);
    case OpKind::kColMean: need(1); return col_mean(in[0]);
    case OpKind::kColVariance: need(1); return col_variance(in[0]);
    case OpKind::kRowSum: need(1); return row_sum(in[0]);
    case OpKind::kColSum: need(1); return col_sum(in[0]);
    case OpKind::kL2Norm: need(1); return l2_norm(in[0]);
    case OpKind::kCosine: need(2); return cosine(in[0], in[1]);
    case OpKind::kConcat: need(2); return concat_rows(in[0], in[1]);
    case OpKind::kTranspose: need(1); return transpose(in[0]);
  }
  throw ContractError("forward_op: unknown op kind");
}

double grad_check(const ScalarFn& fn, const Tensor& point, double step) {
  Parameter p(point, true);
  Tensor analytic;
  {
    Tape tape;
    Var loss = fn(tape, tape.parameter(p));
    tape.backward(loss);
    analytic = p.grad;
  }
  auto eval = [&](const Tensor& at) {
    Tape tape;
    Var loss = fn(tape, tape.constant(at));
    return loss.value()[0];
  };
  double worst = 0.0;
  Tensor probe = point;
  for (std::size_t i = 0; i < point.size(); ++i) {
    probe[i] = point[i] + step;
    const double up = eval(probe);
    probe[i] = point[i] - step;
    const double down = eval(probe);
    probe[i] = point[i];
    const double numeric = (up - down) / (2.0 * step);
    const double err = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(analytic[i]));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace spt::ad
