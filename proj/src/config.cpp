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


#include "spt/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include "spt/errors.hpp"

namespace spt {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_int(const std::string& key, const std::string& v) {
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError(key, "expected a nonnegative integer, got '" + v + "'");
  }
  return out;
}

double parse_real(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(out)) {
    throw ConfigError(key, "expected a finite number, got '" + v + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw ConfigError(key, "expected a boolean, got '" + v + "'");
}

std::vector<double> parse_real_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_real(key, trim(item)));
  return out;
}

std::string fmt_real(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string fmt_list(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + fmt_real(v[i]);
  return s;
}

struct Field {
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename T, typename Get>
Field int_field(const std::string& key, Get get) {
  return Field{[key, get](RunConfig& c, const std::string& v) { get(c) = parse_int<T>(key, v); },
               [get](const RunConfig& c) { return std::to_string(get(const_cast<RunConfig&>(c))); }};
}

template <typename Get>
Field real_field(const std::string& key, Get get) {
  return Field{[key, get](RunConfig& c, const std::string& v) { get(c) = parse_real(key, v); },
               [get](const RunConfig& c) { return fmt_real(get(const_cast<RunConfig&>(c))); }};
}

template <typename Get>
Field bool_field(const std::string& key, Get get) {
  return Field{[key, get](RunConfig& c, const std::string& v) { get(c) = parse_bool(key, v); },
               [get](const RunConfig& c) { return std::string(get(const_cast<RunConfig&>(c)) ? "true" : "false"); }};
}

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = [] {
    std::map<std::string, Field> f;
    f["seed"] = int_field<std::uint64_t>("seed", [](RunConfig& c) -> auto& { return c.seed; });
    f["episodes"] = int_field<std::size_t>("episodes", [](RunConfig& c) -> auto& { return c.episode_count; });
    f["way"] = int_field<std::uint32_t>("way", [](RunConfig& c) -> auto& { return c.way; });
    f["shot"] = int_field<std::uint32_t>("shot", [](RunConfig& c) -> auto& { return c.shot; });
    f["query_per_class"] =
        int_field<std::uint32_t>("query_per_class", [](RunConfig& c) -> auto& { return c.query_per_class; });
    f["dim"] = int_field<std::size_t>("dim", [](RunConfig& c) -> auto& { return c.dim; });
    f["source_classes"] =
        int_field<std::uint32_t>("source_classes", [](RunConfig& c) -> auto& { return c.source_classes; });
    f["source_per_class"] =
        int_field<std::size_t>("source_per_class", [](RunConfig& c) -> auto& { return c.source_per_class; });
    f["target_classes"] =
        int_field<std::uint32_t>("target_classes", [](RunConfig& c) -> auto& { return c.target_classes; });
    f["target_per_class"] =
        int_field<std::size_t>("target_per_class", [](RunConfig& c) -> auto& { return c.target_per_class; });
    f["cluster_spread"] = real_field("cluster_spread", [](RunConfig& c) -> auto& { return c.cluster_spread; });
    f["preset"] = Field{[](RunConfig& c, const std::string& v) {
                          if (v != "near" && v != "distant" && v != "custom") {
                            throw ConfigError("preset", "expected near, distant or custom, got '" + v + "'");
                          }
                          c.preset = v;
                        },
                        [](const RunConfig& c) { return c.preset; }};
    f["shift_scale"] = Field{[](RunConfig& c, const std::string& v) { c.custom_shift.scale = parse_real_list("shift_scale", v); },
                             [](const RunConfig& c) { return fmt_list(c.custom_shift.scale); }};
    f["shift_offset"] = Field{[](RunConfig& c, const std::string& v) { c.custom_shift.shift = parse_real_list("shift_offset", v); },
                              [](const RunConfig& c) { return fmt_list(c.custom_shift.shift); }};
    f["warp_gamma"] = real_field("warp_gamma", [](RunConfig& c) -> auto& { return c.custom_shift.warp_gamma; });
    f["noise_sigma"] = real_field("noise_sigma", [](RunConfig& c) -> auto& { return c.custom_shift.noise_sigma; });
    f["target_path"] = Field{[](RunConfig& c, const std::string& v) {
                               if (v.empty()) c.target_path.reset(); else c.target_path = v;
                             },
                             [](const RunConfig& c) { return c.target_path ? c.target_path->string() : std::string(); }};
    f["backbone_path"] = Field{[](RunConfig& c, const std::string& v) {
                                 if (v.empty()) c.backbone_path.reset(); else c.backbone_path = v;
                               },
                               [](const RunConfig& c) { return c.backbone_path ? c.backbone_path->string() : std::string(); }};
    f["backbone_hidden"] = Field{[](RunConfig& c, const std::string& v) {
                                   c.backbone.hidden.clear();
                                   for (double w : parse_real_list("backbone_hidden", v)) {
                                     if (w < 1 || w != std::floor(w)) throw ConfigError("backbone_hidden", "widths must be positive integers");
                                     c.backbone.hidden.push_back(static_cast<std::size_t>(w));
                                   }
                                 },
                                 [](const RunConfig& c) {
                                   std::string s;
                                   for (std::size_t i = 0; i < c.backbone.hidden.size(); ++i)
                                     s += (i ? "," : "") + std::to_string(c.backbone.hidden[i]);
                                   return s;
                                 }};
    f["pretrain_epochs"] =
        int_field<std::size_t>("pretrain_epochs", [](RunConfig& c) -> auto& { return c.pretrain.epochs; });
    f["pretrain_batch"] =
        int_field<std::size_t>("pretrain_batch", [](RunConfig& c) -> auto& { return c.pretrain.batch_size; });
    f["pretrain_lr"] = real_field("pretrain_lr", [](RunConfig& c) -> auto& { return c.pretrain.learning_rate; });
    f["steps"] = int_field<std::size_t>("steps", [](RunConfig& c) -> auto& { return c.trainer.schedule.total_steps; });
    f["max_epochs"] =
        int_field<std::size_t>("max_epochs", [](RunConfig& c) -> auto& { return c.trainer.schedule.max_epochs; });
    f["batch_size"] = int_field<std::size_t>(
        "batch_size", [](RunConfig& c) -> auto& { return c.trainer.schedule.support_batch_size; });
    f["alpha"] = real_field("alpha", [](RunConfig& c) -> auto& { return c.trainer.alpha; });
    f["gamma"] = real_field("gamma", [](RunConfig& c) -> auto& { return c.trainer.gamma; });
    f["sigma"] = Field{[](RunConfig& c, const std::string& v) {
                         if (v.empty()) c.sigma.reset(); else c.sigma = parse_real("sigma", v);
                       },
                       [](const RunConfig& c) { return c.sigma ? fmt_real(*c.sigma) : std::string(); }};
    f["lr"] = real_field("lr", [](RunConfig& c) -> auto& { return c.trainer.learning_rate; });
    f["momentum"] = real_field("momentum", [](RunConfig& c) -> auto& { return c.trainer.momentum; });
    f["weight_decay"] = real_field("weight_decay", [](RunConfig& c) -> auto& { return c.trainer.weight_decay; });
    f["epsilon"] = real_field("epsilon", [](RunConfig& c) -> auto& { return c.trainer.epsilon; });
    f["ablation"] = Field{[](RunConfig& c, const std::string& v) { c.ablation = parse_ablation(v); },
                          [](const RunConfig& c) { return std::string(to_string(c.ablation)); }};
    f["lp_enabled"] = bool_field("lp_enabled", [](RunConfig& c) -> auto& { return c.trainer.lp.enabled; });
    f["lp_k"] = int_field<std::size_t>("lp_k", [](RunConfig& c) -> auto& { return c.trainer.lp.k_neighbors; });
    f["lp_alpha"] = real_field("lp_alpha", [](RunConfig& c) -> auto& { return c.trainer.lp.alpha; });
    f["lp_iterations"] =
        int_field<std::size_t>("lp_iterations", [](RunConfig& c) -> auto& { return c.trainer.lp.iterations; });
    f["track_shift"] = bool_field("track_shift", [](RunConfig& c) -> auto& { return c.trainer.track_shift; });
    f["workers"] = int_field<std::size_t>("workers", [](RunConfig& c) -> auto& { return c.workers; });
    f["out"] = Field{[](RunConfig& c, const std::string& v) { c.out = v; },
                     [](const RunConfig& c) { return c.out.string(); }};
    return f;
  }();
  return table;
}

void require(bool ok, const std::string& key, const std::string& what) {
  if (!ok) throw ConfigError(key, what);
}

void validate(const RunConfig& c) {
  require(c.episode_count >= 1, "episodes", "must be at least 1");
  require(c.way >= 2, "way", "must be at least 2");
  require(c.shot >= 1, "shot", "must be at least 1");
  require(c.query_per_class >= 1, "query_per_class", "must be at least 1");
  require(c.dim >= 1, "dim", "must be at least 1");
  require(c.source_classes >= 2, "source_classes", "must be at least 2");
  require(c.source_per_class >= 1, "source_per_class", "must be at least 1");
  require(c.target_classes >= c.way, "target_classes", "must be at least the way count");
  require(c.target_per_class >= std::size_t{c.shot} + c.query_per_class, "target_per_class",
          "must cover shot + query_per_class");
  require(c.cluster_spread >= 0.0, "cluster_spread", "must be nonnegative");
  require(!c.backbone.hidden.empty(), "backbone_hidden", "needs at least one layer");
  require(c.pretrain.batch_size >= 1, "pretrain_batch", "must be at least 1");
  require(c.pretrain.learning_rate >= 0.0, "pretrain_lr", "must be nonnegative");
  const TrainerConfig& t = c.trainer;
  require(t.alpha > 0.0 && t.alpha <= 1.0, "alpha", "must lie in (0, 1]");
  require(t.gamma > 0.0 && t.gamma <= 1.0, "gamma", "must lie in (0, 1]");
  if (c.sigma) require(*c.sigma >= 0.0, "sigma", "must be nonnegative");
  require(t.learning_rate >= 0.0, "lr", "must be nonnegative");
  require(t.momentum >= 0.0 && t.momentum < 1.0, "momentum", "must lie in [0, 1)");
  require(t.weight_decay >= 0.0, "weight_decay", "must be nonnegative");
  require(t.epsilon > 0.0, "epsilon", "must be positive");
  require(t.lp.k_neighbors >= 1, "lp_k", "must be at least 1");
  require(t.lp.alpha >= 0.0 && t.lp.alpha < 1.0, "lp_alpha", "must lie in [0, 1)");
  require(t.schedule.total_steps >= 1, "steps", "must be at least 1");
  t.schedule.validate();
  if (c.preset == "custom") {
    try {
      c.custom_shift.validate(c.dim);
    } catch (const ConfigError& e) {
      throw ConfigError(e.key() == "scale" ? "shift_scale" : e.key(), e.what());
    } catch (const DimensionError& e) {
      throw ConfigError("shift_scale", e.what());
    }
  }
}

}  // namespace

TrainerConfig RunConfig::resolved_trainer() const {
  TrainerConfig t = trainer;
  t.sigma = resolved_sigma();
  return apply_ablation(ablation, t);
}

double RunConfig::resolved_sigma() const {
  if (sigma) return *sigma;
  return preset == "distant" ? 0.1 : 2.0;
}

ConfigMap parse_config_text(const std::string& text) {
  ConfigMap out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("", "line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    const std::string key = trim(std::string_view(body).substr(0, eq));
    if (key.empty()) throw ConfigError("", "line " + std::to_string(lineno) + ": empty key");
    if (!out.emplace(key, trim(std::string_view(body).substr(eq + 1))).second) {
      throw ConfigError(key, "duplicate key on line " + std::to_string(lineno));
    }
  }
  return out;
}

namespace {

constexpr const char* kCustomShiftKeys[] = {"shift_scale", "shift_offset", "warp_gamma", "noise_sigma"};

bool key_is_custom_shift(std::string_view key) {
  return std::find(std::begin(kCustomShiftKeys), std::end(kCustomShiftKeys), key) != std::end(kCustomShiftKeys);
}

}  // namespace

RunConfig config_from_map(const ConfigMap& values) {
  RunConfig c;
  c.custom_shift = DomainShiftSpec::identity(c.dim);
  const auto& table = fields();
  for (const auto& [key, value] : values) {
    const auto it = table.find(key);
    if (it == table.end()) throw ConfigError(key, "unknown key");
    it->second.set(c, value);
  }
  for (const char* key : kCustomShiftKeys) {
    if (values.contains(key) && c.preset != "custom") throw ConfigError(key, "only applies with preset = custom");
  }
  if (c.preset == "custom") {
    if (!values.contains("shift_scale")) c.custom_shift.scale.assign(c.dim, 1.0);
    if (!values.contains("shift_offset")) c.custom_shift.shift.assign(c.dim, 0.0);
  }
  c.backbone.input_dim = c.dim;
  validate(c);
  return c;
}

RunConfig load_config(const std::optional<std::filesystem::path>& path, const ConfigMap& overrides) {
  ConfigMap values;
  if (path) {
    std::ifstream in(*path);
    if (!in) throw ConfigError("config", "cannot read " + path->string());
    std::stringstream ss;
    ss << in.rdbuf();
    values = parse_config_text(ss.str());
  }
  for (const auto& [k, v] : overrides) values[k] = v;
  return config_from_map(values);
}

ConfigMap to_map(const RunConfig& config) {
  ConfigMap out;
  for (const auto& [key, field] : fields()) {
    if (config.preset != "custom" && key_is_custom_shift(key)) continue;
    out[key] = field.get(config);
  }
  return out;
}

}  // namespace spt
