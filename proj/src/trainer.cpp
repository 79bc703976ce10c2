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


#include "spt/trainer.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "spt/errors.hpp"
#include "spt/losses.hpp"
#include "spt/theory.hpp"

namespace spt {

namespace {

constexpr std::array kModes = {
    AblationMode::kFull,       AblationMode::kNoStep, AblationMode::kNoStyle,
    AblationMode::kEntropyGroupOnly, AblationMode::kPrototypeGroupOnly,
    AblationMode::kNoMi,       AblationMode::kNoKl,   AblationMode::kNoLabelPropagation,
    AblationMode::kCeOnly,
};

Tensor gather_rows(const Tensor& x, std::size_t begin, std::size_t end) {
  const std::size_t d = x.cols();
  std::vector<double> v(x.values().begin() + static_cast<std::ptrdiff_t>(begin * d),
                        x.values().begin() + static_cast<std::ptrdiff_t>(end * d));
  return Tensor({end - begin, d}, std::move(v));
}

}  // namespace

std::string_view to_string(AblationMode mode) {
  switch (mode) {
    case AblationMode::kFull: return "full";
    case AblationMode::kNoStep: return "no_step";
    case AblationMode::kNoStyle: return "no_style";
    case AblationMode::kEntropyGroupOnly: return "entropy_group_only";
    case AblationMode::kPrototypeGroupOnly: return "prototype_group_only";
    case AblationMode::kNoMi: return "no_mi";
    case AblationMode::kNoKl: return "no_kl";
    case AblationMode::kNoLabelPropagation: return "no_label_propagation";
    case AblationMode::kCeOnly: return "ce_only";
  }
  return "unknown";
}

AblationMode parse_ablation(std::string_view name) {
  for (AblationMode m : kModes) {
    if (to_string(m) == name) return m;
  }
  throw ConfigError("ablation", "unknown ablation mode '" + std::string(name) + "'");
}

std::span<const AblationMode> all_ablation_modes() { return kModes; }

void StepSchedule::validate() const {
  if (total_steps < 1) throw ConfigError("steps", "must be at least 1");
  if (max_epochs < total_steps) throw ConfigError("max_epochs", "must be at least the step count");
  if (max_epochs % total_steps != 0) {
    throw ConfigError("max_epochs", "must be a multiple of the step count (" + std::to_string(max_epochs) +
                                        " % " + std::to_string(total_steps) + " != 0)");
  }
}

TrainerConfig apply_ablation(AblationMode mode, TrainerConfig config) {
  config.mode = mode;
  config.use_prompt = true;
  config.external_enabled = true;
  config.use_mi = true;
  config.group_rule = GroupRule::kIntersection;
  switch (mode) {
    case AblationMode::kFull: break;
    case AblationMode::kNoStep:
      config.schedule.total_steps = 1;
      break;
    case AblationMode::kNoStyle: config.use_prompt = false; break;
    case AblationMode::kEntropyGroupOnly: config.group_rule = GroupRule::kEntropyOnly; break;
    case AblationMode::kPrototypeGroupOnly: config.group_rule = GroupRule::kPrototypeOnly; break;
    case AblationMode::kNoMi: config.use_mi = false; break;
    case AblationMode::kNoKl: config.sigma = 0.0; break;
    case AblationMode::kNoLabelPropagation: config.lp.enabled = false; break;
    case AblationMode::kCeOnly:
      config.use_prompt = false;
      config.external_enabled = false;
      break;
  }
  return config;
}

EpisodeModel EpisodeModel::create(const FrozenBackbone& backbone, const Episode& episode,
                                  const TrainerConfig& config) {
  EpisodeModel m;
  m.backbone = &backbone;
  const Tensor all = episode.all_samples();
  if (all.cols() != backbone.input_dim()) {
    throw DimensionError("episode dimension " + std::to_string(all.cols()) + " does not match backbone input " +
                         std::to_string(backbone.input_dim()));
  }
  m.stats = compute_target_stats(all);
  if (config.use_prompt) m.prompt = StylePrompt::initial(all.cols(), config.epsilon);
  m.classifier = LinearClassifier::zeros(backbone.feature_dim(), episode.way);
  return m;
}

ad::Var EpisodeModel::forward(ad::Tape& tape, const Tensor& x) {
  ad::Var in = prompt ? apply_style_prompt(tape, x, stats, *prompt) : tape.constant(x);
  return ad::softmax(classifier.logits(tape, backbone->forward(tape, in)));
}

Tensor EpisodeModel::features(const Tensor& x) const {
  if (!prompt) return backbone->features(x);
  return backbone->features(apply_style_prompt(x, stats, *prompt));
}

Tensor EpisodeModel::predict(const Tensor& x) const {
  if (prompt) return spt::predict(x, stats, *prompt, *backbone, classifier);
  return predict_unprompted(x, *backbone, classifier);
}

std::optional<double> internal_phase(const Episode& episode, EpisodeModel& model, std::size_t epochs,
                                     std::size_t batch_size, SGDState& sgd) {
  if (epochs == 0) return std::nullopt;
  const std::size_t n = episode.support_labels.size();
  if (batch_size == 0 || batch_size > n) batch_size = n;
  // Prompt and backbone are frozen here, so features are fixed for the phase.
  const Tensor feats = model.features(episode.support);
  const std::span<const std::uint32_t> labels(episode.support_labels);
  model.classifier.set_trainable(true);
  std::array<ad::Parameter*, 2> params{&model.classifier.weight, &model.classifier.bias};
  double epoch_loss = 0.0;
  for (std::size_t e = 0; e < epochs; ++e) {
    epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n; start += batch_size, ++batches) {
      const std::size_t end = std::min(n, start + batch_size);
      for (auto* p : params) p->zero_grad();
      ad::Tape tape;
      ad::Var probs = ad::softmax(model.classifier.logits(tape, tape.constant(gather_rows(feats, start, end))));
      ad::Var loss = ad::cross_entropy_loss(probs, labels.subspan(start, end - start));
      tape.backward(loss);
      sgd_update(sgd, params);
      epoch_loss += loss.value()[0];
    }
    epoch_loss /= static_cast<double>(batches);
  }
  return epoch_loss;
}

ExternalStep external_phase(const Episode& episode, EpisodeModel& model, const PredictionSet& prev,
                            const TrainerConfig& config, SGDState& sgd) {
  const Tensor all = episode.all_samples();
  if (prev.size() != all.rows()) throw DimensionError("external_phase: previous predictions do not cover the episode");

  std::vector<ad::Parameter*> params;
  if (model.prompt) {
    model.prompt->set_trainable(true);
    model.classifier.set_trainable(false);
    params = {&model.prompt->omega1, &model.prompt->omega2};
  } else {
    model.classifier.set_trainable(true);
    params = {&model.classifier.weight, &model.classifier.bias};
  }
  for (auto* p : params) p->zero_grad();

  ad::Tape tape;
  ad::Var probs = model.forward(tape, all);
  ExternalStep out;
  out.current = PredictionSet{probs.value(), prev.step + 1};

  const CredibleGroup group =
      credible_group(prev, config.alpha, config.gamma, episode.support_labels, config.group_rule);
  const PairSet pairs = pair_all(out.current, prev, group);
  const ExternalLoss loss = external_loss(probs, pairs, prev, config.sigma, config.use_mi);
  tape.backward(loss.total);
  sgd_update(sgd, params);

  if (model.prompt) model.prompt->set_trainable(false);
  model.classifier.set_trainable(false);

  out.loss = loss.total.value()[0];
  out.mi = loss.mi;
  out.kl = loss.kl;
  out.group_size = group.members.size();
  out.group_fell_back = group.fell_back;
  out.mean_hops = static_cast<double>(std::accumulate(pairs.hops.begin(), pairs.hops.end(), std::size_t{0})) /
                  static_cast<double>(pairs.size());
  return out;
}

Tensor label_propagation(const Tensor& preds, std::span<const std::uint32_t> support_labels,
                         std::size_t k_neighbors, double alpha, std::size_t iterations) {
  if (k_neighbors < 1) throw ConfigError("lp_k", "must be at least 1");
  if (!(alpha >= 0.0 && alpha < 1.0)) throw ConfigError("lp_alpha", "must lie in [0, 1)");
  const std::size_t m = preds.rows();
  const std::size_t way = preds.cols();
  const std::size_t s = support_labels.size();
  if (s > m) throw ContractError("label_propagation: more support labels than rows");

  Tensor Y = preds;
  for (std::size_t i = 0; i < s; ++i) {
    if (support_labels[i] >= way) throw ContractError("label_propagation: label out of range");
    auto row = Y.row_span(i);
    std::fill(row.begin(), row.end(), 0.0);
    row[support_labels[i]] = 1.0;
  }

  Tensor F = Y;
  if (iterations > 0 && m > 1) {
    // Symmetric kNN affinity on cosine similarity, then row normalization.
    const std::size_t k = std::min(k_neighbors, m - 1);
    Tensor W = Tensor::matrix(m, m);
    std::vector<double> sim(m);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < m; ++j) {
        sim[j] = j == i ? -std::numeric_limits<double>::infinity()
                        : cosine_similarity(preds.row_span(i), preds.row_span(j));
      }
      for (std::size_t j : rank_select(sim, k, false)) {
        const double w = std::max(sim[j], 0.0);
        W(i, j) += 0.5 * w;
        W(j, i) += 0.5 * w;
      }
    }
    for (std::size_t i = 0; i < m; ++i) {
      auto row = W.row_span(i);
      const double z = std::accumulate(row.begin(), row.end(), 0.0);
      if (z > 0.0)
        for (double& v : row) v /= z;
    }
    Tensor next = F;
    for (std::size_t it = 0; it < iterations; ++it) {
      double delta = 0.0;
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t c = 0; c < way; ++c) {
          double acc = 0.0;
          for (std::size_t j = 0; j < m; ++j) acc += W(i, j) * F(j, c);
          next(i, c) = alpha * acc + (1.0 - alpha) * Y(i, c);
          delta = std::max(delta, std::abs(next(i, c) - F(i, c)));
        }
      }
      std::swap(F, next);
      if (delta < 1e-12) break;
    }
  }

  Tensor out = Tensor::matrix(m - s, way);
  for (std::size_t i = s; i < m; ++i) {
    auto src = F.row_span(i);
    const double z = std::accumulate(src.begin(), src.end(), 0.0);
    auto dst = out.row_span(i - s);
    for (std::size_t c = 0; c < way; ++c) dst[c] = z > 0.0 ? src[c] / z : 1.0 / static_cast<double>(way);
  }
  return out;
}

double accuracy(const Tensor& probs, std::span<const std::uint32_t> labels) {
  if (probs.rows() != labels.size()) throw DimensionError("accuracy: row/label count mismatch");
  if (labels.empty()) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto row = probs.row_span(i);
    correct += static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin()) == labels[i];
  }
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

EpisodeResult run_episode(const Episode& episode, const FrozenBackbone& backbone, const TrainerConfig& config) {
  config.schedule.validate();
  EpisodeModel model = EpisodeModel::create(backbone, episode, config);
  const Tensor all = episode.all_samples();
  const std::size_t support = episode.support_labels.size();
  const std::size_t epochs_per_step = config.schedule.internal_epochs_per_step();

  SGDState sgd_internal{config.learning_rate, config.momentum, config.weight_decay, {}};
  SGDState sgd_external{config.learning_rate, config.momentum, config.weight_decay, {}};

  EpisodeResult result;
  PredictionSet prev{model.predict(all), 0};
  for (std::size_t e = 1; e <= config.schedule.total_steps; ++e) {
    StepTrace trace;
    trace.step = e;
    const auto ce = internal_phase(episode, model, epochs_per_step, config.schedule.support_batch_size, sgd_internal);
    result.internal_epochs += epochs_per_step;
    trace.ce_loss = ce.value_or(0.0);

    PredictionSet curr;
    if (config.external_enabled) {
      ExternalStep step = external_phase(episode, model, prev, config, sgd_external);
      ++result.external_updates;
      trace.external_loss = step.loss;
      trace.mi = step.mi;
      trace.kl = step.kl;
      trace.group_size = step.group_size;
      trace.group_fell_back = step.group_fell_back;
      trace.mean_hops = step.mean_hops;
      curr = std::move(step.current);
    } else if (config.track_shift) {
      curr = PredictionSet{model.predict(all), e};
    }
    if (!curr.probs.empty()) {
      if (config.track_shift) trace.shift = theory::distribution_shift(prev, curr).value;
      prev = std::move(curr);
    }
    result.trace.push_back(trace);
  }

  const Tensor final_probs = model.predict(all);
  result.query_probs = gather_rows(final_probs, support, final_probs.rows());
  result.accuracy = accuracy(result.query_probs, episode.query_labels);
  if (config.lp.enabled) {
    const Tensor refined = label_propagation(final_probs, episode.support_labels, config.lp.k_neighbors,
                                             config.lp.alpha, config.lp.iterations);
    result.accuracy_lp = accuracy(refined, episode.query_labels);
  }
  result.prompt = model.prompt;
  result.classifier = model.classifier;
  return result;
}

}  // namespace spt
