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
#include <filesystem>
#include <span>
#include <vector>

#include "spt/autodiff.hpp"
#include "spt/episode_data.hpp"

namespace spt {

/// Per-channel population mean and variance of one episode's samples.
struct TargetStats {
  std::vector<double> mu;
  std::vector<double> sigma2;
  std::size_t sample_count = 0;
};

/// Rows of `samples` are support and query inputs together. Needs m >= 2.
TargetStats compute_target_stats(const Tensor& samples);

/// Learnable per-channel affine applied to target-standardized inputs:
///   x_p = omega1 * (x - mu) / sqrt(sigma2 + epsilon) + omega2
struct StylePrompt {
  ad::Parameter omega1;
  ad::Parameter omega2;
  double epsilon = 1e-5;

  /// omega1 = 1, omega2 = 0.
  static StylePrompt initial(std::size_t channels, double epsilon = 1e-5);
  std::size_t channels() const noexcept { return omega1.value.cols(); }
  void set_trainable(bool on) {
    omega1.requires_grad = on;
    omega2.requires_grad = on;
  }
};

/// (x - mu) / sqrt(sigma2 + epsilon) per channel. Constant for the episode.
Tensor standardize(const Tensor& x, const TargetStats& stats, double epsilon);

ad::Var apply_style_prompt(ad::Tape& tape, const Tensor& x, const TargetStats& stats,
                           StylePrompt& prompt);
/// Tape-free evaluation.
Tensor apply_style_prompt(const Tensor& x, const TargetStats& stats, const StylePrompt& prompt);

struct BackboneSpec {
  std::size_t input_dim = 16;
  std::vector<std::size_t> hidden = {64, 64, 32};
};

/// Frozen multi-layer perceptron: every layer is affine followed by ReLU.
/// The output width is the feature dimension.
class FrozenBackbone {
 public:
  struct Layer {
    ad::Parameter weight;  // in x out
    ad::Parameter bias;    // 1 x out
  };

  FrozenBackbone() = default;
  explicit FrozenBackbone(std::vector<Layer> layers);

  /// He-uniform initialization from `seed`, already frozen.
  static FrozenBackbone initialize(const BackboneSpec& spec, std::uint64_t seed);

  ad::Var forward(ad::Tape& tape, ad::Var x) const;
  Tensor features(const Tensor& x) const;

  std::size_t input_dim() const;
  std::size_t feature_dim() const;
  const std::vector<Layer>& layers() const noexcept { return layers_; }

  void save(const std::filesystem::path& path) const;
  static FrozenBackbone load(const std::filesystem::path& path);

  friend bool operator==(const FrozenBackbone& a, const FrozenBackbone& b);

 private:
  std::vector<Layer> layers_;
};

/// psi: feature_dim -> way. Zero-initialized.
struct LinearClassifier {
  ad::Parameter weight;  // feature_dim x way
  ad::Parameter bias;    // 1 x way

  static LinearClassifier zeros(std::size_t feature_dim, std::size_t way);
  std::size_t way() const noexcept { return weight.value.cols(); }
  ad::Var logits(ad::Tape& tape, ad::Var features);
  void set_trainable(bool on) {
    weight.requires_grad = on;
    bias.requires_grad = on;
  }
};

/// softmax(psi(theta(omega(x)))) for every row of x.
Tensor predict(const Tensor& x, const TargetStats& stats, const StylePrompt& prompt,
               const FrozenBackbone& backbone, const LinearClassifier& clf);
/// Same, with the raw input fed straight to the backbone.
Tensor predict_unprompted(const Tensor& x, const FrozenBackbone& backbone,
                          const LinearClassifier& clf);

struct PretrainOptions {
  std::size_t epochs = 30;
  std::size_t batch_size = 64;
  double learning_rate = 0.05;
  double momentum = 0.9;
  double weight_decay = 1e-4;
};

struct PretrainResult {
  FrozenBackbone backbone;
  /// Accuracy of backbone + throwaway source head on the source data.
  double source_accuracy = 0.0;
};

/// Trains backbone and a throwaway head with SGD + cross-entropy on the
/// source task, then freezes the backbone. Rejects overlapping label spaces.
PretrainResult pretrain_and_freeze(const LabeledDataset& source,
                                   std::span<const std::uint32_t> target_class_ids,
                                   const BackboneSpec& spec, const PretrainOptions& options,
                                   std::uint64_t seed);

}  // namespace spt
