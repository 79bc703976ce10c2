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


#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "spt/episode_data.hpp"
#include "spt/errors.hpp"

using namespace spt;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("spt_data_" + name);
}

std::vector<double> channel_means(const LabeledDataset& d) {
  std::vector<double> m(d.dim(), 0.0);
  for (std::size_t i = 0; i < d.size(); ++i)
    for (std::size_t c = 0; c < d.dim(); ++c) m[c] += d.features(i, c);
  for (double& v : m) v /= static_cast<double>(d.size());
  return m;
}

std::string read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

void write_bytes(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary);
  out << bytes;
}

}  // namespace

TEST_CASE("zero spread puts every sample on its class center") {
  const LabeledDataset d = generate_source_dataset(6, 4, 1, 0.0, 13);
  const Tensor centers = class_centers(6, 4, 13);
  REQUIRE(d.size() == 6);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t c = 0; c < 4; ++c) CHECK(d.features(i, c) == centers(d.labels[i], c));
}

TEST_CASE("generation is seeded and balanced") {
  const LabeledDataset a = generate_source_dataset(10, 16, 100, 0.6, 5);
  CHECK(a == generate_source_dataset(10, 16, 100, 0.6, 5));
  CHECK_FALSE(a == generate_source_dataset(10, 16, 100, 0.6, 6));
  CHECK(a.size() == 1000);
  CHECK(a.dim() == 16);
  for (std::uint32_t c = 0; c < 10; ++c) CHECK(std::count(a.labels.begin(), a.labels.end(), c) == 100);
}

TEST_CASE("generation rejects degenerate requests") {
  CHECK_THROWS_AS(generate_source_dataset(1, 4, 10, 0.5, 0), ConfigError);
  CHECK_THROWS_AS(generate_source_dataset(3, 4, 0, 0.5, 0), ConfigError);
}

TEST_CASE("class ids carry the base offset") {
  const LabeledDataset d = generate_source_dataset(3, 2, 2, 0.1, 0, 64);
  CHECK(d.class_ids == std::vector<std::uint32_t>{64, 65, 66});
}

TEST_CASE("identity shift is a round trip") {
  const LabeledDataset d = generate_source_dataset(5, 6, 20, 0.8, 1);
  const LabeledDataset s = apply_domain_shift(d, DomainShiftSpec::identity(6), 9);
  CHECK(s.labels == d.labels);
  double worst = 0;
  for (std::size_t k = 0; k < d.features.size(); ++k)
    worst = std::max(worst, std::abs(s.features[k] - d.features[k]));
  CHECK(worst <= 1e-9);
}

TEST_CASE("constant shift moves each channel mean by exactly that amount") {
  const LabeledDataset d = generate_source_dataset(5, 3, 20, 0.8, 2);
  DomainShiftSpec spec = DomainShiftSpec::identity(3);
  spec.shift = {5, 5, 5};
  const auto before = channel_means(d);
  const auto after = channel_means(apply_domain_shift(d, spec, 0));
  for (std::size_t c = 0; c < 3; ++c) CHECK(std::abs(after[c] - before[c] - 5.0) < 1e-9);
}

TEST_CASE("squared warp keeps the mean of symmetric data and changes its spread") {
  // Symmetric by construction: every row has its mirror image.
  LabeledDataset d;
  d.class_count = 2;
  d.class_ids = {0, 1};
  const LabeledDataset half = generate_source_dataset(2, 2, 200, 1.0, 3);
  d.features = Tensor::matrix(800, 2);
  for (std::size_t i = 0; i < 400; ++i)
    for (std::size_t c = 0; c < 2; ++c) {
      d.features(i, c) = half.features(i, c);
      d.features(i + 400, c) = -half.features(i, c);
    }
  d.labels.assign(800, 0);
  DomainShiftSpec spec = DomainShiftSpec::identity(2);
  spec.warp_gamma = 2.0;
  const LabeledDataset s = apply_domain_shift(d, spec, 0);
  const auto m = channel_means(s);
  for (double v : m) CHECK(std::abs(v) < 1e-9);
  auto variance = [](const LabeledDataset& x, std::size_t c) {
    double s = 0;
    for (std::size_t i = 0; i < x.size(); ++i) s += x.features(i, c) * x.features(i, c);
    return s / static_cast<double>(x.size());
  };
  CHECK(std::abs(variance(s, 0) - variance(d, 0)) > 1e-3);
}

TEST_CASE("shift spec must match the data") {
  const LabeledDataset d = generate_source_dataset(2, 3, 4, 0.5, 0);
  CHECK_THROWS_AS(apply_domain_shift(d, DomainShiftSpec::identity(2), 0), DimensionError);
  DomainShiftSpec bad = DomainShiftSpec::identity(3);
  bad.scale[1] = 0.0;
  CHECK_THROWS_AS(apply_domain_shift(d, bad, 0), ConfigError);
  bad = DomainShiftSpec::identity(3);
  bad.warp_gamma = 0.0;
  CHECK_THROWS_AS(apply_domain_shift(d, bad, 0), ConfigError);
}

TEST_CASE("presets stay within their documented ranges") {
  const DomainShiftSpec near = DomainShiftSpec::preset("near", 50, 1);
  const DomainShiftSpec far = DomainShiftSpec::preset("distant", 50, 1);
  for (std::size_t c = 0; c < 50; ++c) {
    CHECK(near.scale[c] >= 0.8);
    CHECK(near.scale[c] <= 1.2);
    CHECK(std::abs(near.shift[c]) <= 0.5);
    CHECK(far.scale[c] >= 0.25);
    CHECK(far.scale[c] <= 4.0);
    CHECK(std::abs(far.shift[c]) <= 2.0);
  }
  CHECK(near.warp_gamma == 1.0);
  CHECK(far.warp_gamma == 2.0);
  CHECK(far.noise_sigma == 0.1);
  CHECK_THROWS_AS(DomainShiftSpec::preset("sideways", 3, 0), ConfigError);
}

TEST_CASE("episode sizes") {
  const LabeledDataset t = generate_source_dataset(20, 8, 40, 0.5, 4);
  const Episode one = sample_episode(t, 5, 1, 15, 77);
  CHECK(one.support_labels.size() == 5);
  CHECK(one.query_labels.size() == 75);
  CHECK(one.sample_count() == 80);
  const Episode five = sample_episode(t, 5, 5, 15, 77);
  CHECK(five.support_labels.size() == 25);
  CHECK(five.query_labels.size() == 75);
  CHECK(five.all_samples().rows() == 100);
}

TEST_CASE("episode structure") {
  const LabeledDataset t = generate_source_dataset(12, 4, 30, 0.5, 4);
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const Episode ep = sample_episode(t, 5, 3, 7, seed);
    std::vector<int> per_class(5, 0);
    for (auto y : ep.support_labels) ++per_class[y];
    for (int c : per_class) CHECK(c == 3);
    for (auto y : ep.query_labels) CHECK(y < 5);

    std::set<std::size_t> s(ep.support_index.begin(), ep.support_index.end());
    for (auto q : ep.query_index) CHECK(s.count(q) == 0);
    CHECK(std::set<std::uint32_t>(ep.classes.begin(), ep.classes.end()).size() == 5);
    // Remapped labels point back at the chosen source classes.
    for (std::size_t i = 0; i < ep.support_index.size(); ++i)
      CHECK(t.labels[ep.support_index[i]] == ep.classes[ep.support_labels[i]]);
    for (std::size_t i = 0; i < ep.query_index.size(); ++i)
      CHECK(t.labels[ep.query_index[i]] == ep.classes[ep.query_labels[i]]);
    // Support rows are class-major.
    CHECK(std::is_sorted(ep.support_labels.begin(), ep.support_labels.end()));
  }
}

TEST_CASE("episode sampling is seeded") {
  const LabeledDataset t = generate_source_dataset(12, 4, 30, 0.5, 4);
  const Episode a = sample_episode(t, 5, 1, 15, episode_seed(3, 10));
  const Episode b = sample_episode(t, 5, 1, 15, episode_seed(3, 10));
  CHECK(a.membership_hash() == b.membership_hash());
  CHECK(a.support == b.support);
  CHECK(a.query == b.query);
  CHECK(a.membership_hash() != sample_episode(t, 5, 1, 15, episode_seed(3, 11)).membership_hash());
  CHECK(episode_seed(3, 10) != episode_seed(4, 10));
}

TEST_CASE("insufficient samples name the deficient class") {
  const LabeledDataset t = generate_source_dataset(5, 2, 4, 0.5, 4);
  try {
    sample_episode(t, 5, 1, 15, 0);
    FAIL("expected SamplingError");
  } catch (const SamplingError& e) {
    CHECK(std::string(e.what()).find("class") != std::string::npos);
  }
  CHECK_THROWS_AS(sample_episode(t, 6, 1, 1, 0), SamplingError);
}

TEST_CASE("dataset file round trip") {
  const LabeledDataset d = generate_source_dataset(3, 5, 7, 0.9, 8);
  const auto path = temp_file("rt.sptd");
  save_dataset(path, d);
  const LabeledDataset back = load_dataset(path);
  CHECK(back.features == d.features);
  CHECK(back.labels == d.labels);
  CHECK(back.class_count == d.class_count);
  CHECK(std::filesystem::file_size(path) == 4 + 16 + 8 * 21 * 5 + 4 * 21);
  std::filesystem::remove(path);
}

TEST_CASE("empty dataset round trip") {
  LabeledDataset d;
  d.features = Tensor::matrix(0, 3);
  d.class_count = 2;
  const auto path = temp_file("empty.sptd");
  save_dataset(path, d);
  const LabeledDataset back = load_dataset(path);
  CHECK(back.size() == 0);
  CHECK(back.dim() == 3);
  std::filesystem::remove(path);
}

TEST_CASE("malformed dataset files are format errors with offsets") {
  const LabeledDataset d = generate_source_dataset(2, 2, 3, 0.5, 8);
  const auto path = temp_file("src.sptd");
  const auto bad = temp_file("bad.sptd");
  save_dataset(path, d);
  const std::string bytes = read_bytes(path);

  write_bytes(bad, "SPTX" + bytes.substr(4));
  try {
    load_dataset(bad);
    FAIL("bad magic accepted");
  } catch (const FormatError& e) {
    CHECK(e.offset() == 0);
  }

  std::string v2 = bytes;
  v2[4] = 2;
  write_bytes(bad, v2);
  try {
    load_dataset(bad);
    FAIL("bad version accepted");
  } catch (const FormatError& e) {
    CHECK(e.offset() == 4);
  }

  write_bytes(bad, bytes.substr(0, 30));
  try {
    load_dataset(bad);
    FAIL("truncation accepted");
  } catch (const FormatError& e) {
    CHECK(e.offset() == 30);
    CHECK(std::string(e.what()).find("offset 30") != std::string::npos);
  }

  std::string badlabel = bytes;
  badlabel[badlabel.size() - 4] = 9;
  write_bytes(bad, badlabel);
  CHECK_THROWS_AS(load_dataset(bad), FormatError);

  write_bytes(bad, bytes + "x");
  CHECK_THROWS_AS(load_dataset(bad), FormatError);

  std::filesystem::remove(path);
  std::filesystem::remove(bad);
}
