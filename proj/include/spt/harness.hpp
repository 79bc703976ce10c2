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
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "spt/config.hpp"
#include "spt/episode_data.hpp"
#include "spt/prompt_model.hpp"
#include "spt/trainer.hpp"

namespace spt {

/// Source data, shifted target data and the frozen backbone for a config.
struct World {
  LabeledDataset source;
  LabeledDataset target;
  FrozenBackbone backbone;
  double source_accuracy = 0.0;  // -1 when the backbone was loaded
};

/// The source set is only generated when the backbone has to be pretrained.
World prepare_world(const RunConfig& config);
LabeledDataset prepare_source(const RunConfig& config);
LabeledDataset prepare_target(const RunConfig& config);

struct Summary {
  double mean = 0.0;
  double ci95 = 0.0;
  bool degenerate = false;  // fewer than two values, ci95 forced to 0
};

/// Mean and 1.96 * s / sqrt(n) with the sample standard deviation.
Summary summarize(std::span<const double> values);

struct EpisodeRecord {
  std::size_t index = 0;
  std::uint64_t membership_hash = 0;
  double accuracy = 0.0;
  std::optional<double> accuracy_lp;
  double final_ce = 0.0;
  double final_external = 0.0;
  double final_mi = 0.0;
  double final_kl = 0.0;
  double mean_group_size = 0.0;
  std::size_t group_fallbacks = 0;
  double max_shift = -1.0;
};

struct RunReport {
  static constexpr int kFormatVersion = 1;

  std::string ablation;
  ConfigMap config;
  double source_accuracy = 0.0;
  std::vector<EpisodeRecord> episodes;
  Summary accuracy;
  std::optional<Summary> accuracy_lp;
  double mean_final_ce = 0.0;
  double mean_final_external = 0.0;
  std::string timestamp_utc;
  double wall_seconds = 0.0;

  std::vector<double> accuracies() const;
  std::vector<double> accuracies_lp() const;
};

/// Samples config.episode_count episodes and runs each through the trainer.
RunReport run(const RunConfig& config);
RunReport run(const RunConfig& config, const World& world);

/// Versioned JSON. Everything time-dependent lives under "timestamp".
std::string report_json(const RunReport& report);
void write_report(const std::filesystem::path& path, const RunReport& report);

/// One report per mode over the same episodes.
std::vector<RunReport> run_ablation_matrix(const RunConfig& config, std::span<const AblationMode> modes);
std::vector<RunReport> run_ablation_matrix(const RunConfig& config, const World& world,
                                           std::span<const AblationMode> modes);
/// mode,mean,ci95,mean_lp,ci95_lp
std::string comparison_csv(std::span<const RunReport> reports);

/// Full-mode reports for each step count E. max_epochs is rounded up to a
/// multiple of E.
std::vector<RunReport> run_step_sweep(const RunConfig& config, const World& world,
                                      std::span<const std::size_t> steps);
std::string sweep_csv(std::span<const std::size_t> steps, std::span<const RunReport> reports);

/// Per-channel histograms of the episode inputs under two prompts, sharing
/// one range per channel. A missing `before` prompt means the raw inputs.
/// Rows: channel,bin_left,count_before,count_after.
std::string emit_style_histogram(const Episode& episode, const TargetStats& stats,
                                 const std::optional<StylePrompt>& before, const StylePrompt& after,
                                 std::size_t bins);

/// Bound values over a grid of tau_m*R and E, with R fixed to 1. Each bound
/// is only evaluated inside its own regime: "single" for tau_R < 1, "stepwise"
/// for tau_R > 3, "none" (empty bound) in between. tau_R = 1 is skipped.
/// Columns: tau_R,E,regime,factor,bound.
std::string theory_grid_csv(std::span<const double> tau_r, std::span<const int> steps, double alpha0,
                            double c_order, std::uint64_t n);

}  // namespace spt
