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


#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "spt/episode_data.hpp"
#include "spt/errors.hpp"
#include "spt/prompt_model.hpp"

using namespace spt;

namespace {

Tensor random_matrix(std::uint64_t seed, std::size_t r, std::size_t c, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, scale);
  Tensor t = Tensor::matrix(r, c);
  for (double& v : t.data()) v = z(rng);
  return t;
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("spt_prompt_" + name);
}

}  // namespace

TEST_CASE("target statistics use the population divisor") {
  TargetStats s = compute_target_stats(Tensor::from_rows({{0}, {2}}));
  CHECK(s.mu[0] == 1.0);
  CHECK(s.sigma2[0] == 1.0);
  CHECK(s.sample_count == 2);

  s = compute_target_stats(Tensor::from_rows({{1, 0}, {3, 4}}));
  CHECK(s.mu == std::vector<double>{2, 2});
  CHECK(s.sigma2 == std::vector<double>{1, 4});

  s = compute_target_stats(Tensor::from_rows({{5, -1}, {5, -1}, {5, -1}}));
  CHECK(s.sigma2 == std::vector<double>{0, 0});
}

TEST_CASE("target statistics need two samples") {
  CHECK_THROWS_AS(compute_target_stats(Tensor::from_rows({{1, 2}})), ContractError);
}

TEST_CASE("style prompt arithmetic") {
  TargetStats stats{{1.0}, {4.0}, 2};
  StylePrompt p;
  p.omega1 = ad::Parameter(Tensor::row({2.0}), false);
  p.omega2 = ad::Parameter(Tensor::row({5.0}), false);
  p.epsilon = 0.0;
  CHECK(apply_style_prompt(Tensor::row({3.0}), stats, p)[0] == 7.0);
}

TEST_CASE("unit prompt gives the standardized input") {
  const Tensor x = random_matrix(1, 6, 3, 2.0);
  const TargetStats stats = compute_target_stats(x);
  const StylePrompt p = StylePrompt::initial(3);
  const Tensor xp = apply_style_prompt(x, stats, p);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t c = 0; c < 3; ++c) {
      const double want = (x(i, c) - stats.mu[c]) / std::sqrt(stats.sigma2[c] + 1e-5);
      CHECK(std::abs(xp(i, c) - want) < 1e-12);
    }
}

TEST_CASE("inverse prompt is the identity on random inputs") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Tensor x = random_matrix(seed, 10, 5, 3.0);
    const TargetStats stats = compute_target_stats(x);
    StylePrompt p = StylePrompt::initial(5);
    for (std::size_t c = 0; c < 5; ++c) {
      p.omega1.value[c] = std::sqrt(stats.sigma2[c] + p.epsilon);
      p.omega2.value[c] = stats.mu[c];
    }
    const Tensor xp = apply_style_prompt(x, stats, p);
    double worst = 0;
    for (std::size_t k = 0; k < x.size(); ++k) worst = std::max(worst, std::abs(xp[k] - x[k]));
    CHECK(worst <= 1e-9);
  }
}

TEST_CASE("prompt channel mismatch is a dimension error") {
  const Tensor x = random_matrix(2, 4, 3);
  const TargetStats stats = compute_target_stats(x);
  CHECK_THROWS_AS(apply_style_prompt(x, stats, StylePrompt::initial(2)), DimensionError);
  CHECK_THROWS_AS(StylePrompt::initial(3, 0.0), ConfigError);
}

TEST_CASE("prediction is a distribution") {
  const FrozenBackbone net = FrozenBackbone::initialize({4, {8, 6}}, 9);
  const Tensor x = random_matrix(3, 12, 4);
  const TargetStats stats = compute_target_stats(x);
  LinearClassifier clf = LinearClassifier::zeros(6, 5);
  for (double& v : clf.weight.value.data()) v = 0.8;
  clf.weight.value[3] = -2.0;
  const Tensor p = predict(x, stats, StylePrompt::initial(4), net, clf);
  for (std::size_t i = 0; i < p.rows(); ++i) {
    double s = 0;
    for (double v : p.row_span(i)) {
      CHECK(v > 0.0);
      CHECK(v < 1.0);
      s += v;
    }
    CHECK(std::abs(s - 1.0) <= 1e-12);
  }
  CHECK(predict(x, stats, StylePrompt::initial(4), net, clf) == p);
}

TEST_CASE("zero classifier predicts uniformly") {
  const FrozenBackbone net = FrozenBackbone::initialize({4, {8}}, 1);
  const Tensor x = random_matrix(4, 5, 4);
  const Tensor p = predict(x, compute_target_stats(x), StylePrompt::initial(4), net, LinearClassifier::zeros(8, 5));
  for (double v : p.data()) CHECK(v == 0.2);
}

TEST_CASE("backbone features match a hand-written forward pass") {
  const FrozenBackbone net = FrozenBackbone::initialize({5, {7, 3}}, 4);
  const Tensor x = random_matrix(8, 6, 5);
  const Tensor want = oracle::mlp_forward(net, x);
  const Tensor got = net.features(x);
  CHECK(got.same_shape(want));
  for (std::size_t k = 0; k < want.size(); ++k) CHECK(std::abs(got[k] - want[k]) < 1e-12);
  CHECK(net.input_dim() == 5);
  CHECK(net.feature_dim() == 3);
}

TEST_CASE("backbone is frozen on construction") {
  const FrozenBackbone net = FrozenBackbone::initialize({3, {4}}, 2);
  for (const auto& l : net.layers()) {
    CHECK_FALSE(l.weight.requires_grad);
    CHECK_FALSE(l.bias.requires_grad);
  }
}

TEST_CASE("checkpoint round trip and corruption") {
  const FrozenBackbone net = FrozenBackbone::initialize({4, {6, 5}}, 3);
  const auto path = temp_file("ckpt.sptm");
  net.save(path);
  CHECK(FrozenBackbone::load(path) == net);

  // header: magic, version, layer count, rows, cols
  CHECK(std::filesystem::file_size(path) == 4 + 4 + 4 + (8 + 8 * (24 + 6)) + (8 + 8 * (30 + 5)));

  std::string bytes;
  {
    std::ifstream in(path, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  const auto bad = temp_file("bad.sptm");
  {
    std::ofstream out(bad, std::ios::binary);
    out << "XXXX" << bytes.substr(4);
  }
  CHECK_THROWS_AS(FrozenBackbone::load(bad), FormatError);
  {
    std::ofstream out(bad, std::ios::binary);
    out << bytes.substr(0, bytes.size() - 3);
  }
  try {
    FrozenBackbone::load(bad);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(e.offset() > 0);
  }
  std::filesystem::remove(path);
  std::filesystem::remove(bad);
}

TEST_CASE("pretraining") {
  const LabeledDataset source = generate_source_dataset(4, 5, 30, 0.5, 7, 0);
  const std::vector<std::uint32_t> target_ids = {100, 101};
  const BackboneSpec spec{5, {12, 8}};

  SUBCASE("zero epochs leaves the seeded initialization") {
    PretrainOptions opt;
    opt.epochs = 0;
    const PretrainResult r = pretrain_and_freeze(source, target_ids, spec, opt, 21);
    CHECK(r.backbone == FrozenBackbone::initialize(spec, 21));
  }
  SUBCASE("default training beats chance and is deterministic") {
    const PretrainResult a = pretrain_and_freeze(source, target_ids, spec, {}, 21);
    const PretrainResult b = pretrain_and_freeze(source, target_ids, spec, {}, 21);
    CHECK(a.source_accuracy > 0.25);
    CHECK(a.backbone == b.backbone);
    for (const auto& l : a.backbone.layers()) CHECK_FALSE(l.weight.requires_grad);
  }
  SUBCASE("overlapping label spaces are a config error") {
    const std::vector<std::uint32_t> overlap = {3, 50};
    CHECK_THROWS_AS(pretrain_and_freeze(source, overlap, spec, {}, 1), ConfigError);
  }
}
