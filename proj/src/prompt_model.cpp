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


#include "spt/prompt_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <string>

#include "binary_io.hpp"
#include "spt/errors.hpp"
#include "spt/sgd.hpp"

namespace spt {

namespace {

constexpr std::string_view kCheckpointMagic = "SPTM";
constexpr std::uint32_t kCheckpointVersion = 1;

void check_channels(std::size_t got, std::size_t want, const char* what) {
  if (got != want) {
    throw DimensionError(std::string("style prompt: ") + what + " has " + std::to_string(got) +
                         " channels, expected " + std::to_string(want));
  }
}

Tensor one_hot(std::span<const std::uint32_t> labels, std::size_t classes) {
  Tensor t = Tensor::matrix(labels.size(), classes);
  for (std::size_t i = 0; i < labels.size(); ++i) t(i, labels[i]) = 1.0;
  return t;
}

}  // namespace

TargetStats compute_target_stats(const Tensor& samples) {
  const std::size_t m = samples.rows();
  const std::size_t d = samples.cols();
  if (samples.rank() != 2 || m < 2) {
    throw ContractError("compute_target_stats: need at least 2 samples, got " + std::to_string(m));
  }
  TargetStats s;
  s.sample_count = m;
  s.mu.assign(d, 0.0);
  s.sigma2.assign(d, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t c = 0; c < d; ++c) s.mu[c] += samples(i, c);
  for (double& v : s.mu) v /= static_cast<double>(m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t c = 0; c < d; ++c) {
      const double e = samples(i, c) - s.mu[c];
      s.sigma2[c] += e * e;
    }
  for (double& v : s.sigma2) v /= static_cast<double>(m);
  return s;
}

StylePrompt StylePrompt::initial(std::size_t channels, double epsilon) {
  if (!(epsilon > 0.0)) throw ConfigError("epsilon", "must be positive");
  StylePrompt p;
  p.omega1 = ad::Parameter(Tensor::matrix(1, channels, 1.0), true);
  p.omega2 = ad::Parameter(Tensor::matrix(1, channels, 0.0), true);
  p.epsilon = epsilon;
  return p;
}

Tensor standardize(const Tensor& x, const TargetStats& stats, double epsilon) {
  check_channels(stats.mu.size(), x.cols(), "stats");
  Tensor z = x;
  for (std::size_t c = 0; c < x.cols(); ++c) {
    const double inv = 1.0 / std::sqrt(stats.sigma2[c] + epsilon);
    for (std::size_t i = 0; i < x.rows(); ++i) z(i, c) = (x(i, c) - stats.mu[c]) * inv;
  }
  return z;
}

ad::Var apply_style_prompt(ad::Tape& tape, const Tensor& x, const TargetStats& stats,
                           StylePrompt& prompt) {
  check_channels(prompt.channels(), x.cols(), "omega");
  check_channels(prompt.omega2.value.cols(), x.cols(), "omega2");
  ad::Var z = tape.constant(standardize(x, stats, prompt.epsilon));
  ad::Var w1 = prompt.omega1.requires_grad ? tape.parameter(prompt.omega1)
                                           : tape.parameter(std::as_const(prompt.omega1));
  ad::Var w2 = prompt.omega2.requires_grad ? tape.parameter(prompt.omega2)
                                           : tape.parameter(std::as_const(prompt.omega2));
  return ad::add_bias(ad::mul_row(z, w1), w2);
}

Tensor apply_style_prompt(const Tensor& x, const TargetStats& stats, const StylePrompt& prompt) {
  StylePrompt frozen = prompt;
  frozen.set_trainable(false);
  ad::Tape tape;
  return apply_style_prompt(tape, x, stats, frozen).value();
}

FrozenBackbone::FrozenBackbone(std::vector<Layer> layers) : layers_(std::move(layers)) {
  std::size_t in = layers_.empty() ? 0 : layers_.front().weight.value.rows();
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Layer& layer = layers_[l];
    const Tensor& w = layer.weight.value;
    if (w.rows() != in || layer.bias.value.rows() != 1 || layer.bias.value.cols() != w.cols()) {
      throw DimensionError("backbone: layer " + std::to_string(l) + " has inconsistent shapes " +
                           w.shape_string() + " / " + layer.bias.value.shape_string());
    }
    in = w.cols();
    layer.weight.requires_grad = false;
    layer.bias.requires_grad = false;
    layer.weight.zero_grad();
    layer.bias.zero_grad();
  }
}

namespace {

std::vector<FrozenBackbone::Layer> init_layers(const BackboneSpec& spec, std::uint64_t seed) {
  if (spec.input_dim == 0 || spec.hidden.empty()) {
    throw ConfigError("backbone", "need an input dimension and at least one layer");
  }
  std::mt19937_64 rng(seed);
  std::vector<FrozenBackbone::Layer> layers;
  std::size_t in = spec.input_dim;
  for (std::size_t width : spec.hidden) {
    if (width == 0) throw ConfigError("backbone_hidden", "layer width must be positive");
    const double bound = std::sqrt(6.0 / static_cast<double>(in));
    std::uniform_real_distribution<double> u(-bound, bound);
    Tensor w = Tensor::matrix(in, width);
    for (double& v : w.data()) v = u(rng);
    layers.push_back({ad::Parameter(std::move(w), true), ad::Parameter(Tensor::matrix(1, width), true)});
    in = width;
  }
  return layers;
}

ad::Var mlp_forward(ad::Tape& tape, ad::Var x, std::vector<FrozenBackbone::Layer>& layers) {
  for (auto& layer : layers) {
    x = ad::relu(ad::add_bias(ad::matmul(x, tape.parameter(layer.weight)), tape.parameter(layer.bias)));
  }
  return x;
}

}  // namespace

FrozenBackbone FrozenBackbone::initialize(const BackboneSpec& spec, std::uint64_t seed) {
  return FrozenBackbone(init_layers(spec, seed));
}

ad::Var FrozenBackbone::forward(ad::Tape& tape, ad::Var x) const {
  if (x.value().cols() != input_dim()) {
    throw DimensionError("backbone: input has " + std::to_string(x.value().cols()) +
                         " channels, expected " + std::to_string(input_dim()));
  }
  for (const auto& layer : layers_) {
    x = ad::relu(ad::add_bias(ad::matmul(x, tape.parameter(layer.weight)), tape.parameter(layer.bias)));
  }
  return x;
}

Tensor FrozenBackbone::features(const Tensor& x) const {
  ad::Tape tape;
  return forward(tape, tape.constant(x)).value();
}

std::size_t FrozenBackbone::input_dim() const {
  return layers_.empty() ? 0 : layers_.front().weight.value.rows();
}

std::size_t FrozenBackbone::feature_dim() const {
  return layers_.empty() ? 0 : layers_.back().weight.value.cols();
}

bool operator==(const FrozenBackbone& a, const FrozenBackbone& b) {
  if (a.layers_.size() != b.layers_.size()) return false;
  for (std::size_t l = 0; l < a.layers_.size(); ++l) {
    if (a.layers_[l].weight.value != b.layers_[l].weight.value) return false;
    if (a.layers_[l].bias.value != b.layers_[l].bias.value) return false;
  }
  return true;
}

void FrozenBackbone::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("backbone save: cannot open " + path.string());
  io::Writer w(out);
  w.magic(kCheckpointMagic);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(layers_.size()));
  for (const auto& layer : layers_) {
    w.u32(static_cast<std::uint32_t>(layer.weight.value.rows()));
    w.u32(static_cast<std::uint32_t>(layer.weight.value.cols()));
    for (double v : layer.weight.value.data()) w.f64(v);
    for (double v : layer.bias.value.data()) w.f64(v);
  }
  if (!out) throw Error("backbone save: write failed for " + path.string());
}

FrozenBackbone FrozenBackbone::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("backbone load: cannot open " + path.string());
  io::Reader r(in);
  r.expect_magic(kCheckpointMagic);
  const std::uint64_t version_at = r.offset();
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion) {
    throw FormatError(version_at, "unsupported checkpoint version " + std::to_string(version));
  }
  const std::uint32_t count = r.u32("layer count");
  std::vector<Layer> layers;
  std::size_t prev_cols = 0;
  for (std::uint32_t l = 0; l < count; ++l) {
    const std::uint64_t at = r.offset();
    const std::uint32_t rows = r.u32("layer rows");
    const std::uint32_t cols = r.u32("layer cols");
    if (rows == 0 || cols == 0 || (l > 0 && rows != prev_cols)) {
      throw FormatError(at, "layer " + std::to_string(l) + " has inconsistent shape");
    }
    std::vector<double> w, b;
    for (std::size_t i = 0; i < std::size_t{rows} * cols; ++i) w.push_back(r.f64("weights"));
    for (std::size_t i = 0; i < cols; ++i) b.push_back(r.f64("biases"));
    layers.push_back({ad::Parameter(Tensor({rows, cols}, std::move(w)), false),
                      ad::Parameter(Tensor({1, cols}, std::move(b)), false)});
    prev_cols = cols;
  }
  if (!r.at_end()) throw FormatError(r.offset(), "trailing bytes after checkpoint");
  return FrozenBackbone(std::move(layers));
}

LinearClassifier LinearClassifier::zeros(std::size_t feature_dim, std::size_t way) {
  return LinearClassifier{ad::Parameter(Tensor::matrix(feature_dim, way), true),
                          ad::Parameter(Tensor::matrix(1, way), true)};
}

ad::Var LinearClassifier::logits(ad::Tape& tape, ad::Var features) {
  if (features.value().cols() != weight.value.rows()) {
    throw DimensionError("classifier: features have width " + std::to_string(features.value().cols()) +
                         ", weight expects " + std::to_string(weight.value.rows()));
  }
  ad::Var w = weight.requires_grad ? tape.parameter(weight) : tape.parameter(std::as_const(weight));
  ad::Var b = bias.requires_grad ? tape.parameter(bias) : tape.parameter(std::as_const(bias));
  return ad::add_bias(ad::matmul(features, w), b);
}

Tensor predict(const Tensor& x, const TargetStats& stats, const StylePrompt& prompt,
               const FrozenBackbone& backbone, const LinearClassifier& clf) {
  StylePrompt p = prompt;
  p.set_trainable(false);
  LinearClassifier c = clf;
  c.set_trainable(false);
  ad::Tape tape;
  ad::Var feats = backbone.forward(tape, apply_style_prompt(tape, x, stats, p));
  return ad::softmax(c.logits(tape, feats)).value();
}

Tensor predict_unprompted(const Tensor& x, const FrozenBackbone& backbone,
                          const LinearClassifier& clf) {
  LinearClassifier c = clf;
  c.set_trainable(false);
  ad::Tape tape;
  ad::Var feats = backbone.forward(tape, tape.constant(x));
  return ad::softmax(c.logits(tape, feats)).value();
}

PretrainResult pretrain_and_freeze(const LabeledDataset& source,
                                   std::span<const std::uint32_t> target_class_ids,
                                   const BackboneSpec& spec, const PretrainOptions& options,
                                   std::uint64_t seed) {
  for (auto id : target_class_ids) {
    if (std::find(source.class_ids.begin(), source.class_ids.end(), id) != source.class_ids.end()) {
      throw ConfigError("target_classes", "source and target label spaces overlap at class id " +
                                              std::to_string(id));
    }
  }
  if (source.dim() != spec.input_dim) {
    throw ConfigError("backbone", "source dimension " + std::to_string(source.dim()) +
                                      " does not match backbone input " + std::to_string(spec.input_dim));
  }
  if (options.batch_size == 0) throw ConfigError("pretrain_batch", "must be positive");

  std::vector<FrozenBackbone::Layer> layers = init_layers(spec, seed);
  const std::size_t classes = source.class_count;
  LinearClassifier head = LinearClassifier::zeros(spec.hidden.back(), classes);
  std::vector<ad::Parameter*> params;
  for (auto& l : layers) {
    params.push_back(&l.weight);
    params.push_back(&l.bias);
  }
  params.push_back(&head.weight);
  params.push_back(&head.bias);
  SGDState sgd{options.learning_rate, options.momentum, options.weight_decay, {}};

  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(source.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t d = source.dim();
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
      const std::size_t end = std::min(order.size(), start + options.batch_size);
      Tensor xb = Tensor::matrix(end - start, d);
      std::vector<std::uint32_t> yb;
      for (std::size_t k = start; k < end; ++k) {
        auto src = source.features.row_span(order[k]);
        std::copy(src.begin(), src.end(), xb.row_span(k - start).begin());
        yb.push_back(source.labels[order[k]]);
      }
      for (auto* p : params) p->zero_grad();
      ad::Tape tape;
      ad::Var probs = ad::softmax(head.logits(tape, mlp_forward(tape, tape.constant(std::move(xb)), layers)));
      ad::Var ll = ad::sum(ad::mul(tape.constant(one_hot(yb, classes)), ad::log(probs)));
      tape.backward(ad::scale(ll, -1.0 / static_cast<double>(yb.size())));
      sgd_update(sgd, params);
    }
  }

  PretrainResult result{FrozenBackbone(std::move(layers)), 0.0};
  if (source.size() > 0) {
    head.set_trainable(false);
    ad::Tape tape;
    const Tensor probs =
        ad::softmax(head.logits(tape, result.backbone.forward(tape, tape.constant(source.features)))).value();
    std::size_t correct = 0;
    for (std::size_t i = 0; i < source.size(); ++i) {
      auto row = probs.row_span(i);
      const auto arg = static_cast<std::uint32_t>(std::max_element(row.begin(), row.end()) - row.begin());
      correct += arg == source.labels[i];
    }
    result.source_accuracy = static_cast<double>(correct) / static_cast<double>(source.size());
  }
  return result;
}

}  // namespace spt
