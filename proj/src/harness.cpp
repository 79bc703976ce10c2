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


#include "spt/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <ctime>
#include <exception>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "spt/errors.hpp"
#include "spt/theory.hpp"

namespace spt {

namespace {

// Fixed stream tags so world construction never collides with episode seeds.
constexpr std::uint64_t kSourceStream = 0xFFFF'FFFF'0000'0001ULL;
constexpr std::uint64_t kTargetStream = 0xFFFF'FFFF'0000'0002ULL;
constexpr std::uint64_t kShiftSpecStream = 0xFFFF'FFFF'0000'0003ULL;
constexpr std::uint64_t kShiftNoiseStream = 0xFFFF'FFFF'0000'0004ULL;
constexpr std::uint64_t kBackboneStream = 0xFFFF'FFFF'0000'0005ULL;

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

[[noreturn]] void rethrow_tagged(std::exception_ptr error, std::size_t index) {
  const std::string tag = "episode " + std::to_string(index) + ": ";
  try {
    std::rethrow_exception(error);
  } catch (const ConfigError& e) {
    throw ConfigError(e.key(), tag + e.what());
  } catch (const SamplingError& e) {
    throw SamplingError(tag + e.what());
  } catch (const NumericError& e) {
    throw NumericError(tag + e.what());
  } catch (const std::exception& e) {
    throw Error(tag + e.what());
  }
}

std::size_t worker_count(const RunConfig& config, std::size_t jobs) {
  std::size_t w = config.workers;
  if (w == 0) w = std::max(1u, std::thread::hardware_concurrency());
  return std::max<std::size_t>(1, std::min(w, jobs));
}

// Runs job(i) for i in [0, n) on a bounded pool. Results land by index; the
// lowest failing index wins.
template <typename Job>
void parallel_for(std::size_t n, std::size_t workers, Job job) {
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  auto loop = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        job(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (workers <= 1) {
    loop();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(loop);
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (errors[i]) rethrow_tagged(errors[i], i);
  }
}

EpisodeRecord make_record(std::size_t index, const Episode& ep, const EpisodeResult& r) {
  EpisodeRecord rec;
  rec.index = index;
  rec.membership_hash = ep.membership_hash();
  rec.accuracy = r.accuracy;
  rec.accuracy_lp = r.accuracy_lp;
  if (!r.trace.empty()) {
    const StepTrace& last = r.trace.back();
    rec.final_ce = last.ce_loss;
    rec.final_external = last.external_loss;
    rec.final_mi = last.mi;
    rec.final_kl = last.kl;
  }
  double groups = 0.0;
  for (const StepTrace& t : r.trace) {
    groups += static_cast<double>(t.group_size);
    rec.group_fallbacks += t.group_fell_back ? 1 : 0;
    rec.max_shift = std::max(rec.max_shift, t.shift);
  }
  if (!r.trace.empty()) rec.mean_group_size = groups / static_cast<double>(r.trace.size());
  return rec;
}

std::vector<Episode> sample_all(const RunConfig& config, const World& world) {
  std::vector<Episode> episodes;
  episodes.reserve(config.episode_count);
  for (std::size_t i = 0; i < config.episode_count; ++i) {
    try {
      episodes.push_back(sample_episode(world.target, config.way, config.shot, config.query_per_class,
                                        episode_seed(config.seed, i)));
    } catch (...) {
      rethrow_tagged(std::current_exception(), i);
    }
  }
  return episodes;
}

RunReport run_on(const RunConfig& config, const World& world, const std::vector<Episode>& episodes,
                 AblationMode mode) {
  const auto start = std::chrono::steady_clock::now();
  RunConfig snapshot = config;
  snapshot.ablation = mode;
  const TrainerConfig trainer = snapshot.resolved_trainer();

  RunReport report;
  report.ablation = std::string(to_string(mode));
  report.config = to_map(snapshot);
  report.config.erase("workers");
  report.source_accuracy = world.source_accuracy;
  report.episodes.resize(episodes.size());

  parallel_for(episodes.size(), worker_count(config, episodes.size()), [&](std::size_t i) {
    const EpisodeResult r = run_episode(episodes[i], world.backbone, trainer);
    report.episodes[i] = make_record(i, episodes[i], r);
  });

  const auto acc = report.accuracies();
  report.accuracy = summarize(acc);
  if (trainer.lp.enabled) {
    const auto lp = report.accuracies_lp();
    report.accuracy_lp = summarize(lp);
  }
  double ce = 0.0, ex = 0.0;
  for (const auto& e : report.episodes) {
    ce += e.final_ce;
    ex += e.final_external;
  }
  if (!report.episodes.empty()) {
    report.mean_final_ce = ce / static_cast<double>(report.episodes.size());
    report.mean_final_external = ex / static_cast<double>(report.episodes.size());
  }
  report.timestamp_utc = utc_now();
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

nlohmann::json summary_json(const Summary& s) {
  return {{"mean", s.mean}, {"ci95", s.ci95}, {"degenerate", s.degenerate}};
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

}  // namespace

LabeledDataset prepare_source(const RunConfig& config) {
  return generate_source_dataset(config.source_classes, config.dim, config.source_per_class, config.cluster_spread,
                                 episode_seed(config.seed, kSourceStream), 0);
}

LabeledDataset prepare_target(const RunConfig& config) {
  const std::uint32_t base = config.source_classes;
  if (config.target_path) {
    LabeledDataset t = load_dataset(*config.target_path);
    if (t.dim() != config.dim) {
      throw ConfigError("target_path", "dataset has dimension " + std::to_string(t.dim()) + " but dim is " +
                                           std::to_string(config.dim));
    }
    std::iota(t.class_ids.begin(), t.class_ids.end(), base);
    return t;
  }
  const LabeledDataset clean =
      generate_source_dataset(config.target_classes, config.dim, config.target_per_class, config.cluster_spread,
                              episode_seed(config.seed, kTargetStream), base);
  const DomainShiftSpec spec = config.preset == "custom"
                                   ? config.custom_shift
                                   : DomainShiftSpec::preset(config.preset, config.dim,
                                                             episode_seed(config.seed, kShiftSpecStream));
  return apply_domain_shift(clean, spec, episode_seed(config.seed, kShiftNoiseStream));
}

World prepare_world(const RunConfig& config) {
  World w;
  w.target = prepare_target(config);
  if (config.backbone_path) {
    w.backbone = FrozenBackbone::load(*config.backbone_path);
    if (w.backbone.input_dim() != config.dim) {
      throw ConfigError("backbone_path", "backbone expects input dimension " +
                                             std::to_string(w.backbone.input_dim()));
    }
    w.source_accuracy = -1.0;
  } else {
    BackboneSpec spec = config.backbone;
    spec.input_dim = config.dim;
    w.source = prepare_source(config);
    PretrainResult p = pretrain_and_freeze(w.source, w.target.class_ids, spec, config.pretrain,
                                           episode_seed(config.seed, kBackboneStream));
    w.backbone = std::move(p.backbone);
    w.source_accuracy = p.source_accuracy;
  }
  return w;
}

Summary summarize(std::span<const double> values) {
  Summary s;
  if (values.empty()) {
    s.degenerate = true;
    return s;
  }
  const double n = static_cast<double>(values.size());
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  if (values.size() < 2) {
    s.degenerate = true;
    return s;
  }
  double ss = 0.0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  s.ci95 = 1.96 * std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  return s;
}

std::vector<double> RunReport::accuracies() const {
  std::vector<double> out;
  for (const auto& e : episodes) out.push_back(e.accuracy);
  return out;
}

std::vector<double> RunReport::accuracies_lp() const {
  std::vector<double> out;
  for (const auto& e : episodes) {
    if (e.accuracy_lp) out.push_back(*e.accuracy_lp);
  }
  return out;
}

RunReport run(const RunConfig& config) { return run(config, prepare_world(config)); }

RunReport run(const RunConfig& config, const World& world) {
  return run_on(config, world, sample_all(config, world), config.ablation);
}

std::string report_json(const RunReport& r) {
  nlohmann::json j;
  j["format_version"] = RunReport::kFormatVersion;
  j["ablation"] = r.ablation;
  j["config"] = r.config;
  j["source_accuracy"] = r.source_accuracy;
  j["episode_count"] = r.episodes.size();
  j["accuracy"] = summary_json(r.accuracy);
  j["accuracy_lp"] = r.accuracy_lp ? summary_json(*r.accuracy_lp) : nlohmann::json(nullptr);
  j["losses"] = {{"mean_final_ce", r.mean_final_ce}, {"mean_final_external", r.mean_final_external}};
  auto& eps = j["episodes"] = nlohmann::json::array();
  for (const auto& e : r.episodes) {
    std::ostringstream hash;
    hash << std::hex << std::setw(16) << std::setfill('0') << e.membership_hash;
    eps.push_back({{"index", e.index},
                   {"membership_hash", hash.str()},
                   {"accuracy", e.accuracy},
                   {"accuracy_lp", e.accuracy_lp ? nlohmann::json(*e.accuracy_lp) : nlohmann::json(nullptr)},
                   {"final_ce", e.final_ce},
                   {"final_external", e.final_external},
                   {"final_mi", e.final_mi},
                   {"final_kl", e.final_kl},
                   {"mean_group_size", e.mean_group_size},
                   {"group_fallbacks", e.group_fallbacks},
                   {"max_shift", e.max_shift}});
  }
  j["timestamp"] = {{"utc", r.timestamp_utc}, {"wall_seconds", r.wall_seconds}};
  return j.dump(2) + "\n";
}

void write_report(const std::filesystem::path& path, const RunReport& report) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << report_json(report);
}

std::vector<RunReport> run_ablation_matrix(const RunConfig& config, std::span<const AblationMode> modes) {
  return run_ablation_matrix(config, prepare_world(config), modes);
}

std::vector<RunReport> run_ablation_matrix(const RunConfig& config, const World& world,
                                           std::span<const AblationMode> modes) {
  const std::vector<Episode> episodes = sample_all(config, world);
  std::vector<RunReport> reports;
  for (AblationMode m : modes) reports.push_back(run_on(config, world, episodes, m));
  return reports;
}

std::string comparison_csv(std::span<const RunReport> reports) {
  std::ostringstream os;
  os << "mode,mean,ci95,mean_lp,ci95_lp\n";
  for (const auto& r : reports) {
    os << r.ablation << ',' << fmt(r.accuracy.mean) << ',' << fmt(r.accuracy.ci95) << ',';
    if (r.accuracy_lp) {
      os << fmt(r.accuracy_lp->mean) << ',' << fmt(r.accuracy_lp->ci95);
    } else {
      os << ',';
    }
    os << '\n';
  }
  return os.str();
}

std::vector<RunReport> run_step_sweep(const RunConfig& config, const World& world,
                                      std::span<const std::size_t> steps) {
  const std::vector<Episode> episodes = sample_all(config, world);
  std::vector<RunReport> reports;
  for (std::size_t e : steps) {
    if (e == 0) throw ConfigError("steps", "sweep values must be at least 1");
    RunConfig c = config;
    c.trainer.schedule.total_steps = e;
    const std::size_t max = std::max(c.trainer.schedule.max_epochs, e);
    c.trainer.schedule.max_epochs = (max + e - 1) / e * e;
    reports.push_back(run_on(c, world, episodes, AblationMode::kFull));
  }
  return reports;
}

std::string sweep_csv(std::span<const std::size_t> steps, std::span<const RunReport> reports) {
  std::ostringstream os;
  os << "E,mean,ci95,mean_lp,ci95_lp\n";
  for (std::size_t i = 0; i < steps.size() && i < reports.size(); ++i) {
    const auto& r = reports[i];
    os << steps[i] << ',' << fmt(r.accuracy.mean) << ',' << fmt(r.accuracy.ci95) << ',';
    if (r.accuracy_lp) os << fmt(r.accuracy_lp->mean) << ',' << fmt(r.accuracy_lp->ci95);
    else os << ',';
    os << '\n';
  }
  return os.str();
}

std::string emit_style_histogram(const Episode& episode, const TargetStats& stats,
                                 const std::optional<StylePrompt>& before, const StylePrompt& after,
                                 std::size_t bins) {
  if (bins < 2) throw ContractError("emit_style_histogram: bins must be at least 2");
  const Tensor x = episode.all_samples();
  const Tensor a = before ? apply_style_prompt(x, stats, *before) : x;
  const Tensor b = apply_style_prompt(x, stats, after);
  const std::size_t m = x.rows(), d = x.cols();

  std::ostringstream os;
  os << "channel,bin_left,count_before,count_after\n";
  for (std::size_t c = 0; c < d; ++c) {
    double lo = a(0, c), hi = a(0, c);
    for (std::size_t i = 0; i < m; ++i) {
      lo = std::min({lo, a(i, c), b(i, c)});
      hi = std::max({hi, a(i, c), b(i, c)});
    }
    const double width = hi > lo ? (hi - lo) / static_cast<double>(bins) : 1.0;
    auto bin_of = [&](double v) {
      const auto k = static_cast<std::size_t>(std::floor((v - lo) / width));
      return std::min(k, bins - 1);
    };
    std::vector<std::size_t> ca(bins, 0), cb(bins, 0);
    for (std::size_t i = 0; i < m; ++i) {
      ++ca[bin_of(a(i, c))];
      ++cb[bin_of(b(i, c))];
    }
    for (std::size_t k = 0; k < bins; ++k) {
      os << c << ',' << fmt(lo + width * static_cast<double>(k)) << ',' << ca[k] << ',' << cb[k] << '\n';
    }
  }
  return os.str();
}

std::string theory_grid_csv(std::span<const double> tau_r, std::span<const int> steps, double alpha0,
                            double c_order, std::uint64_t n) {
  std::ostringstream os;
  os << "tau_R,E,regime,factor,bound\n";
  for (double t : tau_r) {
    if (t == 1.0) continue;
    const double factor = theory::recursive_factor(t, 1.0);
    for (int e : steps) {
      os << fmt(t) << ',' << e << ',';
      if (t < 1.0) {
        os << "single," << fmt(factor) << ',' << fmt(theory::theorem1_bound(t, 1.0, alpha0, 0.0, n, c_order));
      } else if (t > 3.0) {
        const double bound = theory::theorem2_bound(
            {.tau_m = t, .R = 1.0, .E = e, .alpha0 = alpha0, .n = n, .c_order = c_order});
        os << "stepwise," << fmt(factor) << ',' << fmt(bound);
      } else {
        os << "none," << fmt(factor) << ',';
      }
      os << '\n';
    }
  }
  return os.str();
}

}  // namespace spt
