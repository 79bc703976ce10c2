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
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "spt/alignment.hpp"
#include "spt/episode_data.hpp"
#include "spt/prompt_model.hpp"
#include "spt/sgd.hpp"

namespace spt {

/// Which parts of the method are active for a run. `kCeOnly` is the
/// frozen-backbone linear-probe reference: raw inputs, cross-entropy on the
/// support set, no alignment.
enum class AblationMode {
  kFull,
  kNoStep,
  kNoStyle,
  kEntropyGroupOnly,
  kPrototypeGroupOnly,
  kNoMi,
  kNoKl,
  kNoLabelPropagation,
  kCeOnly,
};

std::string_view to_string(AblationMode mode);
/// Accepts the snake_case names printed by to_string(). Throws ConfigError.
AblationMode parse_ablation(std::string_view name);
std::span<const AblationMode> all_ablation_modes();

struct StepSchedule {
  std::size_t total_steps = 20;   // E
  std::size_t max_epochs = 20;
  std::size_t support_batch_size = 0;  // 0 means the whole support set

  /// max_epochs / E; validate() guarantees exact division.
  std::size_t internal_epochs_per_step() const { return max_epochs / total_steps; }
  void validate() const;
};

struct LabelPropagationConfig {
  bool enabled = true;
  std::size_t k_neighbors = 10;
  double alpha = 0.75;
  std::size_t iterations = 20;
};

struct TrainerConfig {
  StepSchedule schedule;
  double alpha = 0.7;  // entropy group fraction
  double gamma = 0.4;  // prototype group fraction
  double sigma = 2.0;  // KL weight
  double learning_rate = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-3;
  double epsilon = 1e-5;
  LabelPropagationConfig lp;
  bool track_shift = true;

  // Behaviour switches, normally set through apply_ablation().
  AblationMode mode = AblationMode::kFull;
  bool use_prompt = true;
  bool external_enabled = true;
  bool use_mi = true;
  GroupRule group_rule = GroupRule::kIntersection;
};

/// Resolves `mode` into the behaviour switches and schedule of `config`.
TrainerConfig apply_ablation(AblationMode mode, TrainerConfig config);

/// Per-episode trainable state around a shared frozen backbone.
struct EpisodeModel {
  const FrozenBackbone* backbone = nullptr;
  TargetStats stats;
  std::optional<StylePrompt> prompt;
  LinearClassifier classifier;

  static EpisodeModel create(const FrozenBackbone& backbone, const Episode& episode,
                             const TrainerConfig& config);

  /// Class probabilities for the rows of x, recorded on `tape`.
  ad::Var forward(ad::Tape& tape, const Tensor& x);
  /// Backbone features of the prompted (or raw) inputs; no gradient.
  Tensor features(const Tensor& x) const;
  Tensor predict(const Tensor& x) const;
};

/// Mini-batch SGD on the support cross-entropy for `epochs` epochs with the
/// prompt and backbone frozen. Returns the mean per-batch loss of the last
/// epoch, or nullopt when no epoch ran.
std::optional<double> internal_phase(const Episode& episode, EpisodeModel& model, std::size_t epochs,
                                     std::size_t batch_size, SGDState& sgd);

struct ExternalStep {
  PredictionSet current;  // predictions before the update
  double loss = 0.0;
  double mi = 0.0;
  double kl = 0.0;
  std::size_t group_size = 0;
  bool group_fell_back = false;
  double mean_hops = 0.0;
};

/// Builds the credible group from `prev`, pairs the current predictions of
/// every sample with it, and applies one full-batch SGD step on L_ex. The
/// step targets the prompt, or the classifier when the model has no prompt.
ExternalStep external_phase(const Episode& episode, EpisodeModel& model, const PredictionSet& prev,
                            const TrainerConfig& config, SGDState& sgd);

/// Graph propagation over prediction vectors. Rows of `preds` are support
/// then query; returns the refined query rows, each summing to 1.
Tensor label_propagation(const Tensor& preds, std::span<const std::uint32_t> support_labels,
                         std::size_t k_neighbors, double alpha, std::size_t iterations);

struct StepTrace {
  std::size_t step = 0;
  double ce_loss = 0.0;
  double external_loss = 0.0;
  double mi = 0.0;
  double kl = 0.0;
  std::size_t group_size = 0;
  bool group_fell_back = false;
  double mean_hops = 0.0;
  double shift = -1.0;  // W-inf between consecutive steps, -1 if untracked
};

struct EpisodeResult {
  double accuracy = 0.0;
  std::optional<double> accuracy_lp;
  std::vector<StepTrace> trace;
  std::size_t internal_epochs = 0;
  std::size_t external_updates = 0;
  std::optional<StylePrompt> prompt;
  LinearClassifier classifier;
  Tensor query_probs;
};

/// Accuracy of argmax rows (lowest index on ties) against labels.
double accuracy(const Tensor& probs, std::span<const std::uint32_t> labels);

/// Runs the full dual-phase schedule on one episode. `config` should already
/// have apply_ablation() applied.
EpisodeResult run_episode(const Episode& episode, const FrozenBackbone& backbone, const TrainerConfig& config);

}  // namespace spt
