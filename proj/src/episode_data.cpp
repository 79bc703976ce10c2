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


#include "spt/episode_data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <string>

#include "binary_io.hpp"
#include "spt/errors.hpp"

namespace spt {

namespace {

constexpr std::string_view kDatasetMagic = "SPTD";
constexpr std::uint32_t kDatasetVersion = 1;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t episode_seed(std::uint64_t global_seed, std::uint64_t episode_index) {
  return splitmix64(global_seed ^ splitmix64(episode_index + 0x51ed2701ULL));
}

DomainShiftSpec DomainShiftSpec::identity(std::size_t dim) {
  return DomainShiftSpec{std::vector<double>(dim, 1.0), std::vector<double>(dim, 0.0), 1.0, 0.0};
}

DomainShiftSpec DomainShiftSpec::preset(std::string_view name, std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 rng(splitmix64(seed ^ 0xd1b54a32d192ed03ULL));
  DomainShiftSpec spec;
  spec.scale.resize(dim);
  spec.shift.resize(dim);
  if (name == "near") {
    std::uniform_real_distribution<double> scale(0.8, 1.2);
    std::uniform_real_distribution<double> shift(-0.5, 0.5);
    for (std::size_t c = 0; c < dim; ++c) {
      spec.scale[c] = scale(rng);
      spec.shift[c] = shift(rng);
    }
    spec.warp_gamma = 1.0;
    spec.noise_sigma = 0.0;
  } else if (name == "distant") {
    // Log-uniform scale in [0.25, 4].
    std::uniform_real_distribution<double> log_scale(std::log(0.25), std::log(4.0));
    std::uniform_real_distribution<double> shift(-2.0, 2.0);
    for (std::size_t c = 0; c < dim; ++c) {
      spec.scale[c] = std::exp(log_scale(rng));
      spec.shift[c] = shift(rng);
    }
    spec.warp_gamma = 2.0;
    spec.noise_sigma = 0.1;
  } else {
    throw ConfigError("preset", "unknown domain preset '" + std::string(name) + "'");
  }
  return spec;
}

void DomainShiftSpec::validate(std::size_t dim) const {
  if (scale.size() != dim || shift.size() != dim) {
    throw DimensionError("domain shift: spec has " + std::to_string(scale.size()) + "/" +
                         std::to_string(shift.size()) + " channels, data has " + std::to_string(dim));
  }
  for (double s : scale) {
    if (!(s > 0.0)) throw ConfigError("scale", "must be positive");
  }
  if (!(warp_gamma > 0.0)) throw ConfigError("warp_gamma", "must be positive");
  if (!(noise_sigma >= 0.0)) throw ConfigError("noise_sigma", "must be nonnegative");
}

Tensor class_centers(std::uint32_t class_count, std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 rng(splitmix64(seed));
  std::normal_distribution<double> gauss(0.0, 1.0);
  Tensor centers = Tensor::matrix(class_count, dim);
  for (double& v : centers.data()) v = gauss(rng);
  return centers;
}

LabeledDataset generate_source_dataset(std::uint32_t class_count, std::size_t dim,
                                       std::size_t per_class, double cluster_spread,
                                       std::uint64_t seed, std::uint32_t class_id_base) {
  if (class_count < 2) throw ConfigError("class_count", "need at least 2 classes");
  if (per_class < 1) throw ConfigError("per_class", "need at least 1 sample per class");
  if (!(cluster_spread >= 0.0)) throw ConfigError("cluster_spread", "must be nonnegative");

  const Tensor centers = class_centers(class_count, dim, seed);
  std::mt19937_64 rng(splitmix64(seed + 1));
  std::normal_distribution<double> gauss(0.0, 1.0);

  LabeledDataset out;
  out.class_count = class_count;
  out.features = Tensor::matrix(class_count * per_class, dim);
  out.labels.reserve(class_count * per_class);
  out.class_ids.resize(class_count);
  std::iota(out.class_ids.begin(), out.class_ids.end(), class_id_base);
  std::size_t row = 0;
  for (std::uint32_t c = 0; c < class_count; ++c) {
    for (std::size_t k = 0; k < per_class; ++k, ++row) {
      for (std::size_t j = 0; j < dim; ++j) {
        out.features(row, j) = centers(c, j) + cluster_spread * gauss(rng);
      }
      out.labels.push_back(c);
    }
  }
  return out;
}

LabeledDataset apply_domain_shift(const LabeledDataset& data, const DomainShiftSpec& spec,
                                  std::uint64_t seed) {
  const std::size_t m = data.size();
  const std::size_t d = data.dim();
  spec.validate(d);
  LabeledDataset out = data;
  if (m == 0) return out;

  std::mt19937_64 rng(splitmix64(seed ^ 0x2545f4914f6cdd1dULL));
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> mean(d, 0.0), sd(d, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t c = 0; c < d; ++c) mean[c] += data.features(i, c);
  for (double& v : mean) v /= static_cast<double>(m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t c = 0; c < d; ++c) {
      const double e = data.features(i, c) - mean[c];
      sd[c] += e * e;
    }
  for (double& v : sd) v = std::sqrt(v / static_cast<double>(m));

  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t c = 0; c < d; ++c) {
      double warped = 0.0;
      if (sd[c] > 0.0) {
        const double z = (data.features(i, c) - mean[c]) / sd[c];
        const double w = spec.warp_gamma == 1.0 ? z : std::copysign(std::pow(std::abs(z), spec.warp_gamma), z);
        warped = sd[c] * spec.scale[c] * w;
      }
      const double noise = spec.noise_sigma > 0.0 ? spec.noise_sigma * gauss(rng) : 0.0;
      out.features(i, c) = mean[c] + warped + spec.shift[c] + noise;
    }
  }
  return out;
}

Tensor Episode::all_samples() const {
  const std::size_t d = support.cols();
  std::vector<double> v;
  v.reserve(support.size() + query.size());
  v.insert(v.end(), support.values().begin(), support.values().end());
  v.insert(v.end(), query.values().begin(), query.values().end());
  return Tensor({sample_count(), d}, std::move(v));
}

std::uint64_t Episode::membership_hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](std::uint64_t v) {
    for (int b = 0; b < 8; ++b) {
      h ^= (v >> (8 * b)) & 0xffU;
      h *= 0x100000001b3ULL;
    }
  };
  mix(way);
  mix(shot);
  for (auto c : classes) mix(c);
  for (auto i : support_index) mix(i);
  mix(0xffffffffffffffffULL);
  for (auto i : query_index) mix(i);
  return h;
}

Episode sample_episode(const LabeledDataset& target, std::uint32_t way, std::uint32_t shot,
                       std::uint32_t query_per_class, std::uint64_t seed) {
  if (way < 1 || shot < 1) throw ConfigError("way/shot", "must be at least 1");
  if (target.class_count < way) {
    throw SamplingError("sample_episode: dataset has " + std::to_string(target.class_count) +
                        " classes, episode needs " + std::to_string(way));
  }
  std::vector<std::vector<std::size_t>> by_class(target.class_count);
  for (std::size_t i = 0; i < target.size(); ++i) by_class[target.labels[i]].push_back(i);

  std::mt19937_64 rng(seed);
  std::vector<std::uint32_t> classes(target.class_count);
  std::iota(classes.begin(), classes.end(), 0U);
  std::shuffle(classes.begin(), classes.end(), rng);
  classes.resize(way);

  const std::size_t need = std::size_t{shot} + query_per_class;
  std::vector<std::string> deficient;
  for (auto c : classes) {
    if (by_class[c].size() < need) {
      deficient.push_back("class " + std::to_string(c) + " has " + std::to_string(by_class[c].size()));
    }
  }
  if (!deficient.empty()) {
    std::string msg = "sample_episode: need " + std::to_string(need) + " samples per class;";
    for (const auto& s : deficient) msg += " " + s + ";";
    throw SamplingError(msg);
  }

  Episode ep;
  ep.way = way;
  ep.shot = shot;
  ep.classes = classes;
  std::vector<std::pair<std::size_t, std::uint32_t>> query;
  for (std::uint32_t n = 0; n < way; ++n) {
    std::vector<std::size_t> pool = by_class[classes[n]];
    std::shuffle(pool.begin(), pool.end(), rng);
    for (std::uint32_t k = 0; k < shot; ++k) {
      ep.support_index.push_back(pool[k]);
      ep.support_labels.push_back(n);
    }
    for (std::uint32_t q = 0; q < query_per_class; ++q) query.emplace_back(pool[shot + q], n);
  }
  std::shuffle(query.begin(), query.end(), rng);
  for (const auto& [idx, lbl] : query) {
    ep.query_index.push_back(idx);
    ep.query_labels.push_back(lbl);
  }

  const std::size_t d = target.dim();
  auto gather = [&](const std::vector<std::size_t>& rows) {
    Tensor t = Tensor::matrix(rows.size(), d);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      auto src = target.features.row_span(rows[r]);
      std::copy(src.begin(), src.end(), t.row_span(r).begin());
    }
    return t;
  };
  ep.support = gather(ep.support_index);
  ep.query = gather(ep.query_index);
  return ep;
}

void save_dataset(const std::filesystem::path& path, const LabeledDataset& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("save_dataset: cannot open " + path.string());
  io::Writer w(out);
  w.magic(kDatasetMagic);
  w.u32(kDatasetVersion);
  w.u32(static_cast<std::uint32_t>(data.size()));
  w.u32(static_cast<std::uint32_t>(data.dim()));
  w.u32(data.class_count);
  for (double v : data.features.data()) w.f64(v);
  for (auto l : data.labels) w.u32(l);
  if (!out) throw Error("save_dataset: write failed for " + path.string());
}

LabeledDataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("load_dataset: cannot open " + path.string());
  io::Reader r(in);
  r.expect_magic(kDatasetMagic);
  const std::uint64_t version_at = r.offset();
  const std::uint32_t version = r.u32("version");
  if (version != kDatasetVersion) {
    throw FormatError(version_at, "unsupported dataset version " + std::to_string(version));
  }
  const std::uint32_t m = r.u32("sample count");
  const std::uint32_t d = r.u32("dimension");
  const std::uint32_t classes = r.u32("class count");

  LabeledDataset out;
  out.class_count = classes;
  out.class_ids.resize(classes);
  std::iota(out.class_ids.begin(), out.class_ids.end(), 0U);
  // Grow incrementally so a corrupt header cannot force a huge allocation.
  std::vector<double> values;
  const std::size_t count = std::size_t{m} * d;
  values.reserve(std::min<std::size_t>(count, std::size_t{1} << 20));
  for (std::size_t i = 0; i < count; ++i) values.push_back(r.f64("features"));
  out.features = Tensor({m, d}, std::move(values));
  out.labels.reserve(m);
  for (std::uint32_t i = 0; i < m; ++i) {
    const std::uint64_t at = r.offset();
    const std::uint32_t l = r.u32("labels");
    out.labels.push_back(l);
    if (l >= classes) {
      throw FormatError(at, "label " + std::to_string(l) + " out of range for " +
                                std::to_string(classes) + " classes");
    }
  }
  if (!r.at_end()) throw FormatError(r.offset(), "trailing bytes after dataset");
  return out;
}

}  // namespace spt
