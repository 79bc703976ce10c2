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


// steplab: command line front end for episodic runs, ablations and the
// bound calculator.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "spt/config.hpp"
#include "spt/errors.hpp"
#include "spt/harness.hpp"
#include "spt/theory.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct Common {
  std::optional<std::string> config;
  std::optional<std::string> seed;
  std::optional<std::string> episodes;
  std::optional<std::string> out;
  std::optional<std::string> ablation;
  std::optional<std::string> preset;
  std::optional<std::string> workers;
  std::vector<std::string> set;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "key=value config file");
  cmd->add_option("--seed", c.seed, "global seed");
  cmd->add_option("--episodes", c.episodes, "episode count");
  cmd->add_option("--out", c.out, "output path");
  cmd->add_option("--ablation", c.ablation, "ablation mode");
  cmd->add_option("--preset", c.preset, "near | distant | custom");
  cmd->add_option("--workers", c.workers, "worker threads, 0 = all cores");
  cmd->add_option("--set", c.set, "extra key=value override (repeatable)");
}

spt::RunConfig resolve(const Common& c) {
  spt::ConfigMap overrides;
  for (const std::string& kv : c.set) {
    const auto parsed = spt::parse_config_text(kv);
    if (parsed.empty()) throw spt::ConfigError("", "--set expects key=value, got '" + kv + "'");
    for (const auto& [k, v] : parsed) overrides[k] = v;
  }
  auto put = [&](const char* key, const std::optional<std::string>& v) {
    if (v) overrides[key] = *v;
  };
  put("seed", c.seed);
  put("episodes", c.episodes);
  put("out", c.out);
  put("ablation", c.ablation);
  put("preset", c.preset);
  put("workers", c.workers);
  if (c.preset && *c.preset == "custom") throw spt::ConfigError("preset", "--preset takes near or distant");
  std::optional<std::filesystem::path> path;
  if (c.config) path = *c.config;
  return spt::load_config(path, overrides);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw spt::Error("cannot write " + path.string());
  out << text;
}

void print_summary(const spt::RunReport& r) {
  std::printf("%-22s acc %.4f +- %.4f", r.ablation.c_str(), r.accuracy.mean, r.accuracy.ci95);
  if (r.accuracy_lp) std::printf("   lp %.4f +- %.4f", r.accuracy_lp->mean, r.accuracy_lp->ci95);
  if (r.accuracy.degenerate) std::printf("   (single episode, ci95 reported as 0)");
  std::printf("\n");
}

std::vector<std::size_t> parse_sizes(const std::string& key, const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t pos = 0;
      const unsigned long long v = std::stoull(item, &pos);
      if (pos != item.size()) throw std::invalid_argument(item);
      out.push_back(static_cast<std::size_t>(v));
    } catch (const std::logic_error&) {
      throw spt::ConfigError(key, "expected a comma separated list of integers, got '" + text + "'");
    }
  }
  return out;
}

int cmd_run(const Common& c) {
  const spt::RunConfig config = resolve(c);
  const spt::RunReport report = spt::run(config);
  spt::write_report(config.out, report);
  print_summary(report);
  std::printf("report: %s\n", config.out.string().c_str());
  return 0;
}

int cmd_ablate(const Common& c, const std::string& modes_text, const std::string& sweep_text) {
  Common local = c;
  const std::string dir = c.out.value_or("ablation");
  local.out.reset();
  local.ablation.reset();
  const spt::RunConfig config = resolve(local);
  const spt::World world = spt::prepare_world(config);

  std::vector<spt::AblationMode> modes;
  if (modes_text.empty()) {
    const auto all = spt::all_ablation_modes();
    modes.assign(all.begin(), all.end());
  } else {
    std::stringstream ss(modes_text);
    std::string item;
    while (std::getline(ss, item, ',')) modes.push_back(spt::parse_ablation(item));
  }
  const auto reports = spt::run_ablation_matrix(config, world, modes);
  for (const auto& r : reports) {
    spt::write_report(std::filesystem::path(dir) / (r.ablation + ".json"), r);
    print_summary(r);
  }
  write_text(std::filesystem::path(dir) / "comparison.csv", spt::comparison_csv(reports));

  if (!sweep_text.empty()) {
    const auto steps = parse_sizes("sweep", sweep_text);
    const auto sweep = spt::run_step_sweep(config, world, steps);
    for (std::size_t i = 0; i < steps.size(); ++i) {
      std::printf("E=%-4zu acc %.4f +- %.4f\n", steps[i], sweep[i].accuracy.mean, sweep[i].accuracy.ci95);
    }
    write_text(std::filesystem::path(dir) / "step_sweep.csv", spt::sweep_csv(steps, sweep));
  }
  std::printf("outputs: %s\n", dir.c_str());
  return 0;
}

int cmd_theory(const Common& c, const std::vector<double>& tau_r, const std::vector<int>& steps, double alpha0,
               double c_order, std::uint64_t n) {
  bool flipped = false;
  for (double t : tau_r) flipped = flipped || t > 3.0;
  if (flipped) {
    std::fprintf(stderr, "note: the recursive factor is negative for tau_R > 3; bounds use its magnitude\n");
  }
  for (double t : tau_r) {
    if (t == 1.0) std::fprintf(stderr, "note: tau_R = 1 is singular and was skipped\n");
  }
  const std::string csv = spt::theory_grid_csv(tau_r, steps, alpha0, c_order, n);
  if (c.out) {
    write_text(*c.out, csv);
  } else {
    std::fputs(csv.c_str(), stdout);
  }
  return 0;
}

int cmd_histogram(const Common& c, std::size_t episode_index, std::size_t bins, bool raw_before) {
  Common local = c;
  const std::string out = c.out.value_or("histogram.csv");
  local.out.reset();
  spt::RunConfig config = resolve(local);
  const spt::World world = spt::prepare_world(config);
  const spt::Episode ep = spt::sample_episode(world.target, config.way, config.shot, config.query_per_class,
                                              spt::episode_seed(config.seed, episode_index));
  const spt::TrainerConfig trainer = config.resolved_trainer();
  if (!trainer.use_prompt) throw spt::ConfigError("ablation", "histogram needs a mode with a style prompt");
  const spt::EpisodeResult result = spt::run_episode(ep, world.backbone, trainer);
  const spt::TargetStats stats = spt::compute_target_stats(ep.all_samples());
  std::optional<spt::StylePrompt> before;
  if (!raw_before) before = spt::StylePrompt::initial(ep.support.cols(), trainer.epsilon);
  write_text(out, spt::emit_style_histogram(ep, stats, before, *result.prompt, bins));
  std::printf("episode %zu acc %.4f, histogram: %s\n", episode_index, result.accuracy, out.c_str());
  return 0;
}

int cmd_gen_data(const Common& c, const std::optional<std::string>& backbone_out) {
  Common local = c;
  const std::string out = c.out.value_or("target.sptd");
  local.out.reset();
  const spt::RunConfig config = resolve(local);
  const spt::LabeledDataset target = spt::prepare_target(config);
  spt::save_dataset(out, target);
  std::printf("target: %s (%zu samples, %u classes)\n", out.c_str(), target.size(), target.class_count);
  if (backbone_out) {
    const spt::World world = spt::prepare_world(config);
    world.backbone.save(*backbone_out);
    std::printf("backbone: %s (source accuracy %.4f)\n", backbone_out->c_str(), world.source_accuracy);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"steplab: step-wise style prompt tuning on synthetic few-shot episodes"};
  app.require_subcommand(1);
  Common common;

  auto* run = app.add_subcommand("run", "run episodes and write a JSON report");
  add_common(run, common);

  auto* ablate = app.add_subcommand("ablate", "ablation matrix over shared episodes");
  add_common(ablate, common);
  std::string modes, sweep;
  ablate->add_option("--modes", modes, "comma separated modes (default: all)");
  ablate->add_option("--sweep", sweep, "comma separated step counts, e.g. 2,5,10,20,50,100");

  auto* theory = app.add_subcommand("theory", "bound values over a grid, as CSV");
  add_common(theory, common);
  std::vector<double> tau_r = {0.5, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 5.0, 10.0};
  std::vector<int> steps = {0, 1, 2, 5, 10, 20, 40};
  double alpha0 = 1.0, c_order = 0.0;
  std::uint64_t n = 1;
  theory->add_option("--tau-r", tau_r, "tau_m * R values")->delimiter(',');
  theory->add_option("--steps", steps, "step counts E")->delimiter(',');
  theory->add_option("--alpha0", alpha0, "source loss");
  theory->add_option("--c", c_order, "O(1/sqrt(n)) constant");
  theory->add_option("--n", n, "unlabeled sample count")->check(CLI::PositiveNumber);

  auto* hist = app.add_subcommand("histogram", "per-channel input histograms before and after tuning");
  add_common(hist, common);
  std::size_t episode_index = 0, bins = 20;
  bool raw_before = false;
  hist->add_option("--episode", episode_index, "episode index");
  hist->add_option("--bins", bins, "bins per channel")->check(CLI::Range(std::size_t{2}, std::size_t{100000}));
  hist->add_flag("--raw", raw_before, "compare against raw inputs instead of the initial prompt");

  auto* gen = app.add_subcommand("gen-data", "write the shifted target dataset (and optionally the backbone)");
  add_common(gen, common);
  std::optional<std::string> backbone_out;
  gen->add_option("--backbone-out", backbone_out, "also pretrain and save the backbone here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*run) return cmd_run(common);
    if (*ablate) return cmd_ablate(common, modes, sweep);
    if (*theory) return cmd_theory(common, tau_r, steps, alpha0, c_order, n);
    if (*hist) return cmd_histogram(common, episode_index, bins, raw_before);
    if (*gen) return cmd_gen_data(common, backbone_out);
  } catch (const spt::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  }
  return 0;
}
