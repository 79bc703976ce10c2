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
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "spt/episode_data.hpp"
#include "spt/prompt_model.hpp"
#include "spt/trainer.hpp"

namespace spt {

/// Everything a run needs. Field defaults are the documented defaults.
struct RunConfig {
  std::uint64_t seed = 0;
  std::size_t episode_count = 100;
  std::uint32_t way = 5;
  std::uint32_t shot = 1;
  std::uint32_t query_per_class = 15;

  // Synthetic data.
  std::size_t dim = 16;
  std::uint32_t source_classes = 64;
  std::size_t source_per_class = 100;
  std::uint32_t target_classes = 20;
  std::size_t target_per_class = 40;
  double cluster_spread = 0.6;
  std::string preset = "distant";  // near | distant | custom
  DomainShiftSpec custom_shift;    // used when preset == custom
  std::optional<std::filesystem::path> target_path;
  std::optional<std::filesystem::path> backbone_path;

  BackboneSpec backbone;
  PretrainOptions pretrain;

  /// Preset-dependent KL weight unless set explicitly.
  std::optional<double> sigma;
  TrainerConfig trainer;
  AblationMode ablation = AblationMode::kFull;

  std::size_t workers = 0;  // 0 = hardware concurrency
  std::filesystem::path out = "report.json";

  /// Trainer settings with the preset sigma and ablation applied.
  TrainerConfig resolved_trainer() const;
  double resolved_sigma() const;
};

using ConfigMap = std::map<std::string, std::string>;

/// Parses "key = value" lines; '#' starts a comment. Duplicate keys are
/// rejected.
ConfigMap parse_config_text(const std::string& text);

/// Builds a validated config from key/value pairs. Unknown keys, malformed
/// values and out-of-range values raise ConfigError naming the key.
RunConfig config_from_map(const ConfigMap& values);

/// Reads `path` (if given), applies `overrides` on top, validates.
RunConfig load_config(const std::optional<std::filesystem::path>& path, const ConfigMap& overrides = {});

/// Flat key/value snapshot of a config, suitable for reports. Feeding it
/// back through config_from_map() reproduces the config.
ConfigMap to_map(const RunConfig& config);

}  // namespace spt
