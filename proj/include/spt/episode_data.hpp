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
#include <string_view>
#include <vector>

#include "spt/tensor.hpp"

namespace spt {

/// Features (m x d) with integer labels in [0, class_count).
///
/// `class_ids` gives each local label a global identity so that source and
/// target label spaces can be checked for overlap. It is not persisted by
/// save_dataset(); a loaded dataset gets ids 0..class_count-1.
struct LabeledDataset {
  Tensor features;
  std::vector<std::uint32_t> labels;
  std::uint32_t class_count = 0;
  std::vector<std::uint32_t> class_ids;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t dim() const noexcept { return features.cols(); }

  friend bool operator==(const LabeledDataset&, const LabeledDataset&) = default;
};

/// Per-channel style distortion applied to a dataset.
struct DomainShiftSpec {
  std::vector<double> scale;
  std::vector<double> shift;
  double warp_gamma = 1.0;
  double noise_sigma = 0.0;

  static DomainShiftSpec identity(std::size_t dim);
  /// "near": mild affine restyle. "distant": strong scale spread, squared
  /// warp and additive noise. Channel values are drawn from `seed`.
  static DomainShiftSpec preset(std::string_view name, std::size_t dim, std::uint64_t seed);
  void validate(std::size_t dim) const;
};

/// Seeded Gaussian class centers, one row per class.
Tensor class_centers(std::uint32_t class_count, std::size_t dim, std::uint64_t seed);

/// Gaussian blobs around class_centers(); samples are stored class-major.
/// Global class ids start at `class_id_base`.
LabeledDataset generate_source_dataset(std::uint32_t class_count, std::size_t dim,
                                       std::size_t per_class, double cluster_spread,
                                       std::uint64_t seed, std::uint32_t class_id_base = 0);

/// Per channel c with z the channel-standardized value:
///   x' = mean_c + std_c * (scale_c * sign(z) * |z|^gamma) + shift_c + noise
/// Labels and sample order are unchanged.
LabeledDataset apply_domain_shift(const LabeledDataset& data, const DomainShiftSpec& spec,
                                  std::uint64_t seed);

/// One N-way K-shot task. Support rows are class-major; query rows are
/// shuffled. Labels are remapped to [0, N).
struct Episode {
  std::uint32_t way = 0;
  std::uint32_t shot = 0;
  Tensor support;
  std::vector<std::uint32_t> support_labels;
  Tensor query;
  /// Held out from training; used for scoring only.
  std::vector<std::uint32_t> query_labels;
  /// Row indices into the source dataset.
  std::vector<std::size_t> support_index;
  std::vector<std::size_t> query_index;
  /// Original dataset labels of the N chosen classes, in remapped order.
  std::vector<std::uint32_t> classes;

  std::size_t sample_count() const noexcept { return support_labels.size() + query_labels.size(); }
  /// Support rows followed by query rows.
  Tensor all_samples() const;
  /// FNV-1a over classes and sample indices; equal hashes mean equal membership.
  std::uint64_t membership_hash() const;
};

/// Mixes a global seed and an episode index into an independent stream seed.
std::uint64_t episode_seed(std::uint64_t global_seed, std::uint64_t episode_index);

Episode sample_episode(const LabeledDataset& target, std::uint32_t way, std::uint32_t shot,
                       std::uint32_t query_per_class, std::uint64_t seed);

void save_dataset(const std::filesystem::path& path, const LabeledDataset& data);
LabeledDataset load_dataset(const std::filesystem::path& path);

}  // namespace spt
