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

// The federation round state machine: eligibility, selection, local training
// with LDP, simulated transport, verification and defences, aggregation,
// global update, evaluation.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "dpfedbank/config.hpp"
#include "dpfedbank/defense.hpp"

namespace dpfedbank {

using ClientSet = std::set<ClientId>;
using SecretKey = std::array<std::uint8_t, 32>;

/// Samples ceil(fraction * |eligible|) clients uniformly without replacement.
inline ClientSet select_clients(const ClientSet& eligible, double fraction, Rng& rng) {
  if (eligible.empty()) throw Error(ErrorCode::kEmptyEligibleSet, "no eligible clients");
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "fraction must lie in (0,1]");
  }
  // The small slack keeps products such as 0.3 * 10 from rounding up to 4.
  auto count = static_cast<std::size_t>(
      std::ceil(fraction * static_cast<double>(eligible.size()) - 1e-9));
  count = std::clamp<std::size_t>(count, 1, eligible.size());
  std::vector<ClientId> pool(eligible.begin(), eligible.end());
  ClientSet out;
  for (std::size_t i : sample_without_replacement(pool.size(), count, rng)) out.insert(pool[i]);
  return out;
}

struct TransportOutcome {
  std::optional<ClientUpdate> delivered;  // nullopt: dropped
  std::optional<ClientUpdate> replayed;   // stale envelope injected alongside

  bool dropped() const { return !delivered.has_value(); }
};

inline SecretKey adversary_key() {
  SecretKey key{};
  key.fill(0xad);
  return key;
}

/// Simulated channel. Tampering rewrites one payload byte without touching
/// the digest or tag; forging rewrites the payload, recomputes the digest
/// and signs with a key the adversary owns.
inline TransportOutcome transport_send(const ClientUpdate& env, const TransportAdversary& adv,
                                       Rng& rng, const ClientUpdate* previous = nullptr) {
  TransportOutcome out;
  if (!adv.targets_client(env.client_id)) {
    out.delivered = env;
    return out;
  }
  if (adv.drop_prob > 0.0 && uniform01(rng) < adv.drop_prob) return out;
  ClientUpdate sent = env;
  if (adv.tamper && adv.tamper->byte_index < sent.payload.size()) {
    sent.payload[adv.tamper->byte_index] = adv.tamper->value;
  }
  if (adv.forge) {
    if (auto v = decode_payload(sent.payload)) {
      for (double& x : *v) x = -x;
      sent.payload = encode_payload(*v);
    }
    sent.digest = sha256(sent.payload);
    const SecretKey key = adversary_key();
    sent.auth_tag = hmac_sha256(key, auth_preimage(sent.digest, sent.round, sent.client_id));
  }
  out.delivered = std::move(sent);
  if (adv.replay && previous != nullptr) out.replayed = *previous;
  return out;
}

struct RoundRecord {
  std::uint64_t round = 0;
  std::string rule;
  ClientSet selected;
  ClientSet budget_excluded;
  ClientSet trust_excluded;
  ClientSet attackers;  // selected clients configured as attackers
  ClientSet received;
  ClientSet verified;
  ClientSet flagged;
  ClientSet aggregated;
  ClientSet rejected_by_rule;
  std::map<ClientId, VerdictReason> envelope_failures;
  std::vector<ClientId> replays_rejected;
  std::vector<AnomalyVerdict> verdicts;
  NormStatistics norm_stats;
  std::map<ClientId, double> update_norms;
  std::map<ClientId, double> pre_clip_norms;
  std::map<ClientId, double> trust;
  std::map<ClientId, double> cumulative_epsilon;
  std::map<ClientId, double> cumulative_delta;
  std::size_t divisor = 0;
  bool empty = false;
  std::string note;
  double accuracy = 0.0;
  double loss = 0.0;

  // Norm-outlier detection outcome, attackers counted as positives.
  std::size_t true_positives = 0;
  std::size_t false_negatives = 0;
  std::size_t false_positives = 0;
  std::size_t true_negatives = 0;

  std::optional<double> tpr() const {
    const std::size_t p = true_positives + false_negatives;
    if (p == 0) return std::nullopt;
    return static_cast<double>(true_positives) / static_cast<double>(p);
  }
  std::optional<double> fpr() const {
    const std::size_t n = false_positives + true_negatives;
    if (n == 0) return std::nullopt;
    return static_cast<double>(false_positives) / static_cast<double>(n);
  }
};

/// Immutable per-experiment inputs.
struct Federation {
  ExperimentConfig config;
  ModelSpec spec;
  std::vector<DatasetShard> shards;  // indexed by client id, attacks applied
  DatasetShard eval;
  std::vector<SecretKey> keys;

  std::size_t n_clients() const { return shards.size(); }
};

struct FederationState {
  std::uint64_t round = 0;
  ParamVector theta;
  PrivacyLedger ledger;
  TrustScores trust;
  UpdateStats stats;
  std::map<ClientId, ClientUpdate> last_envelopes;

  FederationState(ParamVector initial, PrivacyLedger l)
      : theta(std::move(initial)), ledger(std::move(l)) {}
};

inline SecretKey derive_client_key(std::uint64_t master, ClientId id) {
  Bytes material;
  detail::put_le(material, master);
  detail::put_le(material, id);
  for (char ch : std::string_view("dpfedbank-client-key")) {
    material.push_back(static_cast<std::uint8_t>(ch));
  }
  return sha256(material);
}

inline Federation build_federation(const ExperimentConfig& cfg) {
  validate_config(cfg);
  Federation fed{cfg, cfg.model_spec(), {}, {}, {}};
  const std::uint64_t master = cfg.seed;
  DatasetShard population = generate_population(cfg.population, stream_seed(master, Stream::kPopulation));
  PopulationSpec eval_spec = cfg.population;
  eval_spec.n_total = cfg.n_eval;
  fed.eval = generate_population(eval_spec, stream_seed(master, Stream::kEvaluation));
  fed.shards = partition_non_iid(population, cfg.partition, stream_seed(master, Stream::kPartition));
  for (ClientId id = 0; id < fed.shards.size(); ++id) {
    fed.keys.push_back(derive_client_key(master, id));
    if (cfg.attack.is_attacker(id) && cfg.attack.is_data_attack()) {
      Rng rng(stream_seed(master, Stream::kAttackSetup, id));
      fed.shards[id] = apply_data_attack(cfg.attack, fed.shards[id], rng);
    }
  }
  return fed;
}

inline FederationState initial_state(const Federation& fed) {
  FederationState state(init_params(fed.spec),
                        PrivacyLedger(fed.config.privacy.eps_budget, fed.config.privacy.delta_budget));
  for (ClientId id = 0; id < fed.n_clients(); ++id) {
    state.trust[id] = fed.config.defense.initial_trust;
  }
  return state;
}

inline std::size_t resolve_threads(std::size_t requested) {
  std::size_t n = requested;
  if (n == 0) {
    n = std::max<std::size_t>(1, std::thread::hardware_concurrency());
  }
  if (const char* env = std::getenv("DPFB_THREADS")) {
    char* end = nullptr;
    unsigned long cap = std::strtoul(env, &end, 10);
    if (end != env && cap > 0) n = std::min<std::size_t>(n, cap);
  }
  return std::max<std::size_t>(1, n);
}

namespace detail {

struct ClientJob {
  ClientId id = 0;
  bool charged = false;  // honest client whose budget charge succeeded
};

struct ClientOutput {
  ClientUpdate envelope;
};

// Client-side work for one round. Depends only on the global model, the
// client's shard and its per-round stream, so it may run on any thread.
inline ClientOutput run_client(const Federation& fed, const ParamVector& theta, ClientId id,
                               std::uint64_t round) {
  const ExperimentConfig& cfg = fed.config;
  Rng rng(stream_seed(cfg.seed, Stream::kClient, id, round));
  const double eps = cfg.privacy.epsilon_for(id);

  if (cfg.attack.is_attacker(id)) {
    if (const auto* rnd = std::get_if<RandomUpdateAttack>(&cfg.attack.variant)) {
      ParamVector u = random_update(theta.size(), rnd->sigma, rng);
      return {seal_update(id, round, u, eps, u.norm(), fed.keys[id])};
    }
    if (const auto* scale = std::get_if<ScaleUpdateAttack>(&cfg.attack.variant)) {
      ParamVector delta = local_train(theta, fed.shards[id], cfg.train, fed.spec, rng);
      ClipResult clipped = clip_update(delta, cfg.privacy.clip_norm);
      ParamVector u = scale_update(clipped.clipped, scale->factor);
      return {seal_update(id, round, u, eps, clipped.pre_norm, fed.keys[id])};
    }
  }

  ParamVector delta = local_train(theta, fed.shards[id], cfg.train, fed.spec, rng);
  ClipResult clipped = clip_update(delta, cfg.privacy.clip_norm);
  ParamVector released = std::move(clipped.clipped);
  if (cfg.privacy.mode != PrivacyMode::kOff) {
    released = perturb(released, calibrate_sigma(cfg.privacy.params_for(id)), rng);
  }
  switch (cfg.compression.kind) {
    case CompressionKind::kNone: break;
    case CompressionKind::kTopK: released = top_k_sparsify(released, cfg.compression.k); break;
    case CompressionKind::kQuantize:
      released = quantize_uniform(released, cfg.compression.bits, cfg.compression.range);
      break;
  }
  return {seal_update(id, round, released, eps, clipped.pre_norm, fed.keys[id])};
}

// Honest clients charge the ledger; update attackers bypass the protocol.
inline bool charges_budget(const ExperimentConfig& cfg, ClientId id) {
  if (cfg.privacy.mode == PrivacyMode::kOff) return false;
  return !(cfg.attack.is_attacker(id) && cfg.attack.is_update_attack());
}

}  // namespace detail

/// Runs one full round and advances the state. Never throws for adversarial
/// outcomes; a round with nothing to aggregate is recorded as empty.
inline RoundRecord run_round(const Federation& fed, FederationState& state,
                             std::size_t threads = 1) {
  const ExperimentConfig& cfg = fed.config;
  const std::uint64_t t = state.round;
  RoundRecord rec;
  rec.round = t;
  rec.rule = rule_name(cfg.rule);

  // (1) eligibility: trust threshold, then remaining budget.
  ClientSet eligible;
  for (ClientId id = 0; id < fed.n_clients(); ++id) {
    if (cfg.defense.reputation && state.trust.at(id) < cfg.defense.theta_min) {
      rec.trust_excluded.insert(id);
      continue;
    }
    if (detail::charges_budget(cfg, id) &&
        !state.ledger.can_afford(id, cfg.privacy.epsilon_for(id), cfg.privacy.delta)) {
      rec.budget_excluded.insert(id);
      continue;
    }
    eligible.insert(id);
  }

  auto finish = [&](RoundRecord& r) -> RoundRecord {
    for (const auto& [id, spend] : state.ledger.entries()) {
      r.cumulative_epsilon[id] = spend.epsilon;
      r.cumulative_delta[id] = spend.delta;
    }
    r.trust = state.trust;
    Evaluation ev = evaluate(state.theta, fed.eval, fed.spec);
    r.accuracy = ev.accuracy;
    r.loss = ev.loss;
    state.round = t + 1;
    return r;
  };

  if (eligible.empty()) {
    rec.empty = true;
    rec.note = "no eligible clients";
    return finish(rec);
  }

  // (2) selection.
  Rng server_rng(stream_seed(cfg.seed, Stream::kSelection, 0, t));
  rec.selected = select_clients(eligible, cfg.client_fraction, server_rng);
  for (ClientId id : rec.selected) {
    if (cfg.attack.is_attacker(id)) rec.attackers.insert(id);
  }

  // (4a) budget charges, serialized.
  std::vector<ClientId> participants;
  for (ClientId id : rec.selected) {
    if (detail::charges_budget(cfg, id)) {
      try {
        state.ledger.charge(id, cfg.privacy.epsilon_for(id), cfg.privacy.delta);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kBudgetExhausted) throw;
        rec.budget_excluded.insert(id);
        continue;
      }
    }
    participants.push_back(id);
  }

  // (3, 4b) distribute theta and run clients, possibly in parallel.
  std::vector<std::optional<detail::ClientOutput>> outputs(participants.size());
  const std::size_t workers = std::min(std::max<std::size_t>(1, threads), participants.size());
  if (workers <= 1) {
    for (std::size_t i = 0; i < participants.size(); ++i) {
      outputs[i] = detail::run_client(fed, state.theta, participants[i], t);
    }
  } else {
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < participants.size(); i += workers) {
            outputs[i] = detail::run_client(fed, state.theta, participants[i], t);
          }
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  // (5) transport, in ascending client order.
  std::map<ClientId, std::vector<ClientUpdate>> inbox;
  std::map<ClientId, ClientUpdate> sent_this_round;
  for (std::size_t i = 0; i < participants.size(); ++i) {
    const ClientId id = participants[i];
    const ClientUpdate& env = outputs[i]->envelope;
    Rng channel_rng(stream_seed(cfg.seed, Stream::kTransport, id, t));
    auto prev = state.last_envelopes.find(id);
    TransportOutcome out = transport_send(
        env, cfg.transport, channel_rng, prev == state.last_envelopes.end() ? nullptr : &prev->second);
    sent_this_round[id] = env;
    if (out.dropped()) continue;
    rec.received.insert(id);
    inbox[id].push_back(std::move(*out.delivered));
    if (out.replayed) inbox[id].push_back(std::move(*out.replayed));
  }
  for (auto& [id, env] : sent_this_round) state.last_envelopes[id] = std::move(env);

  // (6) verification and decoding.
  UpdateMap verified;
  std::vector<AnomalyVerdict> verdicts;
  for (const auto& [id, envelopes] : inbox) {
    std::optional<ParamVector> accepted;
    VerdictReason failure = VerdictReason::kNone;
    for (const ClientUpdate& env : envelopes) {
      VerdictReason reason = VerdictReason::kNone;
      switch (verify_envelope(env, fed.keys[id], t)) {
        case EnvelopeStatus::kOk: break;
        case EnvelopeStatus::kIntegrityFail: reason = VerdictReason::kIntegrityFail; break;
        case EnvelopeStatus::kAuthFail: reason = VerdictReason::kAuthFail; break;
      }
      std::optional<ParamVector> decoded;
      if (reason == VerdictReason::kNone) {
        decoded = decode_payload(env.payload);
        if (!decoded || decoded->size() != fed.spec.param_dim() || !decoded->all_finite()) {
          reason = VerdictReason::kIntegrityFail;
        }
      }
      if (reason == VerdictReason::kNone && !accepted) {
        accepted = std::move(decoded);
      } else if (reason != VerdictReason::kNone) {
        if (env.round != t) {
          rec.replays_rejected.push_back(id);
        } else if (failure == VerdictReason::kNone) {
          failure = reason;
        }
      }
    }
    if (accepted) {
      rec.verified.insert(id);
      rec.update_norms[id] = accepted->norm();
      verified.emplace(id, std::move(*accepted));
    } else {
      if (failure == VerdictReason::kNone) failure = VerdictReason::kAuthFail;  // only replays
      rec.envelope_failures[id] = failure;
      verdicts.push_back({id, 0.0, true, failure});
    }
    rec.pre_clip_norms[id] = envelopes.front().pre_clip_norm;
  }

  // (7) anomaly detection over everything that verified.
  ClientSet flagged_norm;
  if (cfg.defense.anomaly_detection) {
    NormStatistics stats;
    for (const auto& v : detect_anomalies(verified, cfg.defense.tau, &stats)) {
      if (v.flagged) flagged_norm.insert(v.client_id);
      verdicts.push_back(v);
    }
    rec.norm_stats = stats;
    state.stats.append(rec.update_norms, stats);
  } else {
    for (const auto& [id, u] : verified) verdicts.push_back({id, 0.0, false, VerdictReason::kNone});
  }
  std::sort(verdicts.begin(), verdicts.end(),
            [](const auto& a, const auto& b) { return a.client_id < b.client_id; });
  for (const auto& v : verdicts) {
    if (v.flagged) rec.flagged.insert(v.client_id);
  }
  for (ClientId id : rec.verified) {
    const bool attacker = rec.attackers.contains(id);
    const bool flagged = flagged_norm.contains(id);
    if (attacker) {
      (flagged ? rec.true_positives : rec.false_negatives)++;
    } else {
      (flagged ? rec.false_positives : rec.true_negatives)++;
    }
  }
  rec.verdicts = verdicts;

  // (8, 9) aggregate what survived and update the global model.
  UpdateMap admitted;
  for (auto& [id, u] : verified) {
    if (!flagged_norm.contains(id)) admitted.emplace(id, u);
  }
  if (admitted.empty()) {
    rec.empty = true;
    rec.note = "no updates to aggregate";
  } else {
    try {
      AggregationOutcome outcome = aggregate(admitted, cfg.rule);
      rec.aggregated = outcome.contributors;
      rec.rejected_by_rule = outcome.rejected;
      rec.divisor = outcome.contributors.size();
      state.theta = apply_global_update(state.theta, outcome.aggregate);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kRuleInfeasible) throw;
      rec.empty = true;
      rec.note = std::string("aggregation skipped: ") + e.what();
    }
  }

  // (10) reputation.
  if (cfg.defense.reputation) {
    state.trust = update_trust(std::move(state.trust), verdicts, cfg.defense.reward,
                               cfg.defense.penalty);
  }

  // (11) evaluation.
  return finish(rec);
}

struct ExperimentResult {
  std::vector<RoundRecord> records;
  ParamVector final_theta;
};

inline ExperimentResult run_experiment(const ExperimentConfig& cfg, std::size_t threads = 1) {
  Federation fed = build_federation(cfg);
  FederationState state = initial_state(fed);
  ExperimentResult result;
  result.records.reserve(cfg.rounds);
  for (std::size_t r = 0; r < cfg.rounds; ++r) result.records.push_back(run_round(fed, state, threads));
  result.final_theta = state.theta;
  return result;
}

}  // namespace dpfedbank
