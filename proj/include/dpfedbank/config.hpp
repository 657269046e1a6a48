// Copyright 2026 The dpfedbank-sim Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#pragma once

// Experiment configuration: a JSON document (comments allowed) with strict
// unknown-key rejection. Every field has a documented default; see
// configs/example.jsonc.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dpfedbank/aggregation.hpp"
#include "dpfedbank/data_synth.hpp"
#include "dpfedbank/threat.hpp"

namespace dpfedbank {

using Json = nlohmann::ordered_json;

enum class PrivacyMode { kAnalytic, kSimple, kOff };

struct PrivacyConfig {
  PrivacyMode mode = PrivacyMode::kAnalytic;
  double epsilon = 1.0;
  double delta = 1e-5;
  double clip_norm = 1.0;
  double eps_budget = 1000.0;
  double delta_budget = 0.01;
  std::map<ClientId, double> client_epsilon;  // per-client overrides

  double epsilon_for(ClientId id) const {
    auto it = client_epsilon.find(id);
    return it == client_epsilon.end() ? epsilon : it->second;
  }

  PrivacyParams params_for(ClientId id) const {
    return {epsilon_for(id), delta, clip_norm,
            mode == PrivacyMode::kSimple ? CalibrationMode::kSimple : CalibrationMode::kAnalytic};
  }
};

enum class CompressionKind { kNone, kTopK, kQuantize };

struct CompressionConfig {
  CompressionKind kind = CompressionKind::kNone;
  std::size_t k = 1;
  unsigned bits = 8;
  double range = 1.0;
};

struct TamperSpec {
  std::size_t byte_index = 0;
  std::uint8_t value = 0xff;
};

struct TransportAdversary {
  double drop_prob = 0.0;
  std::optional<TamperSpec> tamper;
  bool replay = false;
  // Man-in-the-middle rewrite with a recomputed digest but a MAC under the
  // adversary's own key.
  bool forge = false;
  std::set<ClientId> targets;  // empty: every client

  bool targets_client(ClientId id) const { return targets.empty() || targets.contains(id); }
};

struct DefenseConfig {
  bool anomaly_detection = true;
  double tau = 3.0;
  bool reputation = true;
  double reward = 0.05;
  double penalty = 0.25;
  double theta_min = 0.2;
  double initial_trust = 0.5;
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::size_t rounds = 50;
  double client_fraction = 1.0;
  std::size_t threads = 0;  // 0: DPFB_THREADS or hardware concurrency
  std::string output = "rounds.jsonl";

  PopulationSpec population;
  std::size_t n_eval = 1000;
  PartitionSpec partition;
  double l2_lambda = 0.05;
  bool intercept = false;
  TrainConfig train{0.5, 1, 16};
  PrivacyConfig privacy;
  CompressionConfig compression;
  AggregationRule rule = MeanRule{};
  AttackSpec attack;
  TransportAdversary transport;
  DefenseConfig defense;

  ModelSpec model_spec() const { return ModelSpec(population.dim, l2_lambda, intercept); }
};

/// "mean" | "median" | "trimmed_mean:k" | "multi_krum:f:m".
inline AggregationRule parse_rule(const std::string& text) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ':');) parts.push_back(item);
  auto number = [&](std::size_t i) -> std::size_t {
    try {
      std::size_t used = 0;
      long long v = std::stoll(parts.at(i), &used);
      if (used != parts[i].size() || v < 0) throw std::invalid_argument("negative");
      return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
      throw ConfigError("aggregation.rule", "bad rule '" + text + "'");
    }
  };
  if (parts.size() == 1 && parts[0] == "mean") return MeanRule{};
  if (parts.size() == 1 && parts[0] == "median") return CoordMedianRule{};
  if (parts.size() == 2 && parts[0] == "trimmed_mean") return TrimmedMeanRule{number(1)};
  if (parts.size() == 3 && parts[0] == "multi_krum") return MultiKrumRule{number(1), number(2)};
  throw ConfigError("aggregation.rule", "unknown rule '" + text + "'");
}

namespace detail {

// Walks one JSON object, remembering which keys were read so that anything
// left over can be rejected.
class ObjectReader {
 public:
  ObjectReader(const Json& node, std::string path) : node_(node), path_(std::move(path)) {
    if (!node_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "must be an object");
  }

  ~ObjectReader() = default;

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const Json* get(const std::string& key) {
    seen_.insert(key);
    auto it = node_.find(key);
    return it == node_.end() ? nullptr : &*it;
  }

  bool has(const std::string& key) const { return node_.contains(key); }

  double real(const std::string& key, double fallback) {
    const Json* v = get(key);
    if (!v) return fallback;
    if (!v->is_number()) throw ConfigError(field(key), "must be a number");
    return v->get<double>();
  }

  std::uint64_t uint(const std::string& key, std::uint64_t fallback) {
    const Json* v = get(key);
    if (!v) return fallback;
    if (v->is_number_unsigned()) return v->get<std::uint64_t>();
    if (v->is_number_integer()) throw ConfigError(field(key), "must be nonnegative");
    throw ConfigError(field(key), "must be an integer");
  }

  bool boolean(const std::string& key, bool fallback) {
    const Json* v = get(key);
    if (!v) return fallback;
    if (!v->is_boolean()) throw ConfigError(field(key), "must be true or false");
    return v->get<bool>();
  }

  std::string string(const std::string& key, const std::string& fallback) {
    const Json* v = get(key);
    if (!v) return fallback;
    if (!v->is_string()) throw ConfigError(field(key), "must be a string");
    return v->get<std::string>();
  }

  std::set<ClientId> id_set(const std::string& key) {
    std::set<ClientId> out;
    const Json* v = get(key);
    if (!v) return out;
    if (!v->is_array()) throw ConfigError(field(key), "must be a list of client ids");
    for (const auto& item : *v) {
      if (!item.is_number_unsigned() || item.get<std::uint64_t>() > 0xffffffffULL) {
        throw ConfigError(field(key), "client ids must be 32-bit unsigned integers");
      }
      out.insert(item.get<ClientId>());
    }
    return out;
  }

  std::vector<double> reals(const std::string& key) {
    std::vector<double> out;
    const Json* v = get(key);
    if (!v) return out;
    if (!v->is_array()) throw ConfigError(field(key), "must be a list of numbers");
    for (const auto& item : *v) {
      if (!item.is_number()) throw ConfigError(field(key), "must be a list of numbers");
      out.push_back(item.get<double>());
    }
    return out;
  }

  /// Nested object reader; an absent key yields an empty object.
  ObjectReader child(const std::string& key) {
    const Json* v = get(key);
    return ObjectReader(v ? *v : empty(), field(key));
  }

  void finish() const {
    for (const auto& [key, value] : node_.items()) {
      if (!seen_.contains(key)) throw ConfigError(field(key), "unknown key");
    }
  }

 private:
  static const Json& empty() {
    static const Json kEmpty = Json::object();
    return kEmpty;
  }

  const Json& node_;
  std::string path_;
  std::set<std::string> seen_;
};

inline void require(bool ok, const std::string& field, const std::string& reason) {
  if (!ok) throw ConfigError(field, reason);
}

}  // namespace detail

inline void validate_config(const ExperimentConfig& c) {
  using detail::require;
  require(c.client_fraction > 0.0 && c.client_fraction <= 1.0, "client_fraction",
          "must lie in (0,1]");
  require(c.population.n_total >= 1, "population.n_total", "must be positive");
  require(c.population.dim >= 1, "population.d", "must be positive");
  require(c.population.dim <= 0xffffffffULL - 1, "population.d", "too large");
  require(c.population.class_sep > 0.0, "population.class_sep", "must be positive");
  require(c.population.positive_frac > 0.0 && c.population.positive_frac < 1.0,
          "population.positive_frac", "must lie in (0,1)");
  require(c.n_eval >= 1, "population.n_eval", "must be positive");
  require(c.partition.n_clients >= 1, "partition.n_clients", "must be positive");
  require(c.partition.n_clients <= c.population.n_total, "partition.n_clients",
          "must not exceed population.n_total");
  require(c.partition.n_clients * c.partition.min_shard <= c.population.n_total,
          "partition.min_shard", "n_clients * min_shard exceeds population.n_total");
  require(c.partition.dirichlet_alpha > 0.0, "partition.dirichlet_alpha", "must be positive");
  require(c.l2_lambda >= 0.0, "model.l2_lambda", "must be nonnegative");
  require(c.train.learning_rate > 0.0, "train.learning_rate", "must be positive");
  require(c.train.batch_size >= 1, "train.batch_size", "must be positive");

  const auto& p = c.privacy;
  require(p.epsilon > 0.0 && std::isfinite(p.epsilon), "privacy.epsilon", "must be positive");
  require(p.delta > 0.0 && p.delta < 1.0, "privacy.delta", "must lie in (0,1)");
  require(p.clip_norm > 0.0 && std::isfinite(p.clip_norm), "privacy.clip_norm",
          "must be positive");
  require(p.eps_budget > 0.0, "privacy.eps_budget", "must be positive");
  require(p.delta_budget > 0.0 && p.delta_budget < 1.0, "privacy.delta_budget",
          "must lie in (0,1)");
  for (const auto& [id, eps] : p.client_epsilon) {
    require(id < c.partition.n_clients, "privacy.client_epsilon",
            "client " + std::to_string(id) + " is not enrolled");
    require(eps > 0.0 && std::isfinite(eps), "privacy.client_epsilon",
            "client " + std::to_string(id) + " epsilon must be positive");
  }

  const std::size_t param_dim = c.population.dim + (c.intercept ? 1 : 0);
  const auto& comp = c.compression;
  if (comp.kind == CompressionKind::kTopK) {
    require(comp.k >= 1 && comp.k <= param_dim, "compression.k", "must lie in [1, parameter count]");
  }
  if (comp.kind == CompressionKind::kQuantize) {
    require(comp.bits >= 1 && comp.bits <= 52, "compression.bits", "must lie in [1, 52]");
    require(comp.range > 0.0, "compression.range", "must be positive");
  }

  const std::size_t n = c.partition.n_clients;
  if (const auto* t = std::get_if<TrimmedMeanRule>(&c.rule)) {
    require(2 * t->trim < n, "aggregation.trim", "needs 2*trim < partition.n_clients");
  }
  if (const auto* k = std::get_if<MultiKrumRule>(&c.rule)) {
    require(n >= k->f + 3, "aggregation.f", "needs n_clients - f - 2 >= 1");
    require(k->m >= 1 && k->m <= n - k->f, "aggregation.m", "needs 1 <= m <= n_clients - f");
  }

  for (ClientId id : c.attack.attackers) {
    require(id < n, "attack.attackers", "client " + std::to_string(id) + " is not enrolled");
  }
  if (const auto* flip = std::get_if<LabelFlipAttack>(&c.attack.variant)) {
    require(flip->fraction >= 0.0 && flip->fraction <= 1.0, "attack.fraction", "must lie in [0,1]");
  }
  if (const auto* poison = std::get_if<DataPoisonAttack>(&c.attack.variant)) {
    require(poison->fraction >= 0.0 && poison->fraction <= 1.0, "attack.fraction",
            "must lie in [0,1]");
    require(poison->target_shift.size() == c.population.dim, "attack.target_shift",
            "must have population.d entries");
  }
  if (const auto* rnd = std::get_if<RandomUpdateAttack>(&c.attack.variant)) {
    require(rnd->sigma > 0.0, "attack.sigma", "must be positive");
  }

  const auto& t = c.transport;
  require(t.drop_prob >= 0.0 && t.drop_prob <= 1.0, "transport.drop_prob", "must lie in [0,1]");
  if (t.tamper) {
    require(t.tamper->byte_index < 4 + 8 * param_dim, "transport.tamper.byte",
            "beyond the payload size");
  }
  for (ClientId id : t.targets) {
    require(id < n, "transport.targets", "client " + std::to_string(id) + " is not enrolled");
  }

  const auto& d = c.defense;
  require(d.tau > 0.0, "defense.tau", "must be positive");
  require(d.reward >= 0.0, "defense.reward", "must be nonnegative");
  require(d.penalty >= 0.0, "defense.penalty", "must be nonnegative");
  require(d.theta_min >= 0.0 && d.theta_min <= 1.0, "defense.theta_min", "must lie in [0,1]");
  require(d.initial_trust >= 0.0 && d.initial_trust <= 1.0, "defense.initial_trust",
          "must lie in [0,1]");
}

/// Builds a validated config from an already-parsed document.
inline ExperimentConfig config_from_json(const Json& doc) {
  ExperimentConfig c;
  detail::ObjectReader root(doc, "");
  c.seed = root.uint("seed", c.seed);
  c.rounds = root.uint("rounds", c.rounds);
  c.client_fraction = root.real("client_fraction", c.client_fraction);
  c.threads = root.uint("threads", c.threads);
  c.output = root.string("output", c.output);

  {
    auto r = root.child("population");
    c.population.n_total = r.uint("n_total", c.population.n_total);
    c.population.dim = r.uint("d", c.population.dim);
    c.population.class_sep = r.real("class_sep", c.population.class_sep);
    c.population.positive_frac = r.real("positive_frac", c.population.positive_frac);
    c.n_eval = r.uint("n_eval", c.n_eval);
    r.finish();
  }
  {
    auto r = root.child("partition");
    c.partition.n_clients = r.uint("n_clients", c.partition.n_clients);
    c.partition.dirichlet_alpha = r.real("dirichlet_alpha", c.partition.dirichlet_alpha);
    c.partition.min_shard = r.uint("min_shard", c.partition.min_shard);
    r.finish();
  }
  {
    auto r = root.child("model");
    c.l2_lambda = r.real("l2_lambda", c.l2_lambda);
    c.intercept = r.boolean("intercept", c.intercept);
    r.finish();
  }
  {
    auto r = root.child("train");
    c.train.learning_rate = r.real("learning_rate", c.train.learning_rate);
    c.train.local_epochs = r.uint("local_epochs", c.train.local_epochs);
    c.train.batch_size = r.uint("batch_size", c.train.batch_size);
    r.finish();
  }
  {
    auto r = root.child("privacy");
    std::string mode = r.string("mode", "analytic");
    if (mode == "analytic") {
      c.privacy.mode = PrivacyMode::kAnalytic;
    } else if (mode == "simple") {
      c.privacy.mode = PrivacyMode::kSimple;
    } else if (mode == "off") {
      c.privacy.mode = PrivacyMode::kOff;
    } else {
      throw ConfigError("privacy.mode", "must be analytic, simple or off");
    }
    c.privacy.epsilon = r.real("epsilon", c.privacy.epsilon);
    c.privacy.delta = r.real("delta", c.privacy.delta);
    c.privacy.clip_norm = r.real("clip_norm", c.privacy.clip_norm);
    c.privacy.eps_budget = r.real("eps_budget", c.privacy.eps_budget);
    c.privacy.delta_budget = r.real("delta_budget", c.privacy.delta_budget);
    if (const Json* overrides = r.get("client_epsilon")) {
      if (!overrides->is_object()) {
        throw ConfigError("privacy.client_epsilon", "must map client ids to epsilon");
      }
      for (const auto& [key, value] : overrides->items()) {
        std::size_t used = 0;
        unsigned long id = 0;
        try {
          id = std::stoul(key, &used);
        } catch (const std::exception&) {
          used = 0;
        }
        if (used == 0 || used != key.size() || id > 0xffffffffUL) {
          throw ConfigError("privacy.client_epsilon." + key, "key must be a client id");
        }
        if (!value.is_number()) {
          throw ConfigError("privacy.client_epsilon." + key, "must be a number");
        }
        c.privacy.client_epsilon[static_cast<ClientId>(id)] = value.get<double>();
      }
    }
    r.finish();
  }
  {
    auto r = root.child("compression");
    std::string kind = r.string("kind", "none");
    if (kind == "none") {
      c.compression.kind = CompressionKind::kNone;
    } else if (kind == "top_k") {
      c.compression.kind = CompressionKind::kTopK;
    } else if (kind == "quantize") {
      c.compression.kind = CompressionKind::kQuantize;
    } else {
      throw ConfigError("compression.kind", "must be none, top_k or quantize");
    }
    c.compression.k = r.uint("k", c.compression.k);
    c.compression.bits = static_cast<unsigned>(r.uint("bits", c.compression.bits));
    c.compression.range = r.real("range", c.compression.range);
    r.finish();
  }
  {
    auto r = root.child("aggregation");
    std::string rule = r.string("rule", "mean");
    // Rule parameters are read even when the rule ignores them so that a
    // sweep can switch rules without editing the file.
    std::size_t trim = r.uint("trim", 1);
    std::size_t f = r.uint("f", 1);
    std::size_t m = r.uint("m", c.partition.n_clients > f ? c.partition.n_clients - f : 1);
    if (rule == "trimmed_mean") {
      c.rule = TrimmedMeanRule{trim};
    } else if (rule == "multi_krum") {
      c.rule = MultiKrumRule{f, m};
    } else {
      c.rule = parse_rule(rule);
    }
    r.finish();
  }
  {
    auto r = root.child("attack");
    std::string kind = r.string("kind", "none");
    double fraction = r.real("fraction", 1.0);
    std::vector<double> shift = r.reals("target_shift");
    double factor = r.real("factor", 50.0);
    double sigma = r.real("sigma", 1.0);
    if (kind == "none") {
      c.attack.variant = NoAttack{};
    } else if (kind == "label_flip") {
      c.attack.variant = LabelFlipAttack{fraction};
    } else if (kind == "data_poison") {
      if (shift.empty()) shift.assign(c.population.dim, 0.0);
      c.attack.variant = DataPoisonAttack{fraction, shift};
    } else if (kind == "scale") {
      c.attack.variant = ScaleUpdateAttack{factor};
    } else if (kind == "random") {
      c.attack.variant = RandomUpdateAttack{sigma};
    } else {
      throw ConfigError("attack.kind", "must be none, label_flip, data_poison, scale or random");
    }
    c.attack.attackers = r.id_set("attackers");
    r.finish();
  }
  {
    auto r = root.child("transport");
    c.transport.drop_prob = r.real("drop_prob", 0.0);
    if (const Json* tamper = r.get("tamper"); tamper && !tamper->is_null()) {
      detail::ObjectReader t(*tamper, "transport.tamper");
      TamperSpec spec;
      spec.byte_index = t.uint("byte", 0);
      std::uint64_t value = t.uint("value", 0xff);
      if (value > 0xff) throw ConfigError("transport.tamper.value", "must be a byte");
      spec.value = static_cast<std::uint8_t>(value);
      t.finish();
      c.transport.tamper = spec;
    }
    c.transport.replay = r.boolean("replay", false);
    c.transport.forge = r.boolean("forge", false);
    c.transport.targets = r.id_set("targets");
    r.finish();
  }
  {
    auto r = root.child("defense");
    auto& d = c.defense;
    d.anomaly_detection = r.boolean("anomaly_detection", d.anomaly_detection);
    d.tau = r.real("tau", d.tau);
    d.reputation = r.boolean("reputation", d.reputation);
    d.reward = r.real("reward", d.reward);
    d.penalty = r.real("penalty", d.penalty);
    d.theta_min = r.real("theta_min", d.theta_min);
    d.initial_trust = r.real("initial_trust", d.initial_trust);
    r.finish();
  }
  root.finish();
  validate_config(c);
  return c;
}

inline Json parse_json_text(const std::string& text, const std::string& origin) {
  try {
    return Json::parse(text, nullptr, true, /*ignore_comments=*/true);
  } catch (const Json::parse_error& e) {
    throw ConfigError(origin, std::string("malformed JSON: ") + e.what());
  }
}

inline Json load_config_json(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kFileNotFound, path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_json_text(buf.str(), path.string());
}

/// Applies a `dotted.key=value` override. The value is read as JSON when it
/// parses as JSON, otherwise as a plain string.
inline void apply_override(Json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError(assignment, "override must look like key=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  Json value = Json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;

  Json* node = &doc;
  std::stringstream ss(key);
  std::vector<std::string> parts;
  for (std::string part; std::getline(ss, part, '.');) parts.push_back(part);
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    if (parts[i].empty()) throw ConfigError(key, "empty path segment");
    Json& next = (*node)[parts[i]];
    if (next.is_null()) next = Json::object();
    if (!next.is_object()) throw ConfigError(key, "'" + parts[i] + "' is not a section");
    node = &next;
  }
  if (parts.empty() || parts.back().empty()) throw ConfigError(key, "empty path segment");
  (*node)[parts.back()] = std::move(value);
}

inline ExperimentConfig parse_config(const std::filesystem::path& path,
                                     const std::vector<std::string>& overrides = {}) {
  Json doc = load_config_json(path);
  for (const auto& o : overrides) apply_override(doc, o);
  return config_from_json(doc);
}

}  // namespace dpfedbank
