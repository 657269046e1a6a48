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

#include <gtest/gtest.h>

#include <algorithm>

#include "test_util.hpp"

namespace dpfedbank {
namespace {

ExperimentConfig small_config() {
  return config_from_json(parse_json_text(testing::small_config_json(), "inline"));
}

bool subset(const ClientSet& a, const ClientSet& b) {
  return std::includes(b.begin(), b.end(), a.begin(), a.end());
}

// Federation whose clients all hold the same single record.
Federation identical_clients(std::size_t n, const ExperimentConfig& base) {
  ExperimentConfig cfg = base;
  cfg.population = {n, 2, 2.0, 0.5};
  cfg.partition = {n, 1.0, 1};
  Federation fed{cfg, cfg.model_spec(), {}, {}, {}};
  DatasetShard one(2);
  one.push_back(std::vector<double>{1.0, -0.5}, 1);
  for (ClientId id = 0; id < n; ++id) {
    fed.shards.push_back(one);
    fed.keys.push_back(derive_client_key(cfg.seed, id));
  }
  fed.eval = one;
  return fed;
}

TEST(SelectClientsTest, FullAndHalfSelection) {
  ClientSet ten;
  for (ClientId i = 0; i < 10; ++i) ten.insert(i);
  Rng a(1), b(1);
  EXPECT_EQ(select_clients(ten, 1.0, a), ten);
  ClientSet half = select_clients(ten, 0.5, b);
  EXPECT_EQ(half.size(), 5u);
  EXPECT_TRUE(subset(half, ten));
}

TEST(SelectClientsTest, DeterministicAndCeiling) {
  ClientSet ten;
  for (ClientId i = 0; i < 10; ++i) ten.insert(i);
  Rng a(7), b(7);
  EXPECT_EQ(select_clients(ten, 0.5, a), select_clients(ten, 0.5, b));
  Rng r(3);
  EXPECT_EQ(select_clients(ten, 0.3, r).size(), 3u);
  EXPECT_EQ(select_clients(ten, 0.31, r).size(), 4u);
  EXPECT_EQ(select_clients({4}, 0.01, r), ClientSet{4});
  try {
    select_clients({}, 0.5, r);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kEmptyEligibleSet);
  }
}

class TransportTest : public ::testing::Test {
 protected:
  SecretKey key = derive_client_key(1, 2);
  ClientUpdate env = seal_update(2, 5, ParamVector({1.0, 2.0}), 1.0, 3.0, key);
  ClientUpdate old_env = seal_update(2, 4, ParamVector({0.5, 0.5}), 1.0, 3.0, key);
  Rng rng{11};
};

TEST_F(TransportTest, BenignChannelDeliversUnchanged) {
  TransportOutcome out = transport_send(env, TransportAdversary{}, rng, &old_env);
  ASSERT_FALSE(out.dropped());
  EXPECT_EQ(*out.delivered, env);
  EXPECT_FALSE(out.replayed.has_value());
}

TEST_F(TransportTest, CertainDropAlwaysDrops) {
  TransportAdversary adv;
  adv.drop_prob = 1.0;
  for (int i = 0; i < 50; ++i) EXPECT_TRUE(transport_send(env, adv, rng).dropped());
}

TEST_F(TransportTest, TamperBreaksIntegrity) {
  TransportAdversary adv;
  adv.tamper = TamperSpec{0, 0x7f};
  TransportOutcome out = transport_send(env, adv, rng);
  EXPECT_EQ(verify_envelope(*out.delivered, key, 5), EnvelopeStatus::kIntegrityFail);
  EXPECT_EQ(out.delivered->digest, env.digest);
}

TEST_F(TransportTest, ReplayedEnvelopeFailsAuthInCurrentRound) {
  TransportAdversary adv;
  adv.replay = true;
  TransportOutcome out = transport_send(env, adv, rng, &old_env);
  ASSERT_TRUE(out.replayed.has_value());
  EXPECT_EQ(verify_envelope(*out.delivered, key, 5), EnvelopeStatus::kOk);
  EXPECT_EQ(verify_envelope(*out.replayed, key, 5), EnvelopeStatus::kAuthFail);
}

TEST_F(TransportTest, ForgedEnvelopeFailsAuth) {
  TransportAdversary adv;
  adv.forge = true;
  TransportOutcome out = transport_send(env, adv, rng);
  EXPECT_EQ(verify_envelope(*out.delivered, key, 5), EnvelopeStatus::kAuthFail);
}

TEST_F(TransportTest, UntargetedClientsPassThrough) {
  TransportAdversary adv;
  adv.drop_prob = 1.0;
  adv.targets = {9};
  EXPECT_FALSE(transport_send(env, adv, rng).dropped());
}

TEST(RunRoundTest, ZeroEpochsLeaveModelUnchanged) {
  ExperimentConfig cfg = small_config();
  cfg.privacy.mode = PrivacyMode::kOff;
  cfg.train.local_epochs = 0;
  Federation fed = identical_clients(1, cfg);
  FederationState state = initial_state(fed);
  state.theta = ParamVector({0.3, -0.2});
  RoundRecord rec = run_round(fed, state);
  EXPECT_EQ(state.theta, ParamVector({0.3, -0.2}));
  EXPECT_EQ(rec.aggregated, ClientSet{0});
  EXPECT_EQ(state.round, 1u);
}

TEST(RunRoundTest, IdenticalHonestClientsMoveLikeOne) {
  ExperimentConfig cfg = small_config();
  cfg.privacy.mode = PrivacyMode::kOff;
  cfg.privacy.clip_norm = 100.0;
  cfg.train = {0.5, 2, 1};
  cfg.defense.anomaly_detection = false;
  Federation fed = identical_clients(4, cfg);
  FederationState state = initial_state(fed);
  Rng rng(0);
  ParamVector single = local_train(state.theta, fed.shards[0], cfg.train, fed.spec, rng);
  run_round(fed, state);
  EXPECT_EQ(state.theta, single);
}

TEST(RunRoundTest, ReplayedEnvelopeRejectedGenuineKept) {
  ExperimentConfig cfg = small_config();
  cfg.transport.replay = true;
  Federation fed = build_federation(cfg);
  FederationState state = initial_state(fed);
  RoundRecord first = run_round(fed, state);
  EXPECT_TRUE(first.replays_rejected.empty());
  RoundRecord second = run_round(fed, state);
  EXPECT_EQ(second.replays_rejected.size(), second.received.size());
  EXPECT_EQ(second.verified, second.received);
  EXPECT_TRUE(second.envelope_failures.empty());
}

TEST(RunRoundTest, TamperedClientExcludedRoundCompletes) {
  ExperimentConfig cfg = small_config();
  cfg.transport.tamper = TamperSpec{3, 0xff};
  cfg.transport.targets = {2};
  Federation fed = build_federation(cfg);
  FederationState state = initial_state(fed);
  RoundRecord rec = run_round(fed, state);
  EXPECT_TRUE(rec.received.contains(2));
  EXPECT_FALSE(rec.verified.contains(2));
  EXPECT_FALSE(rec.aggregated.contains(2));
  EXPECT_EQ(rec.envelope_failures.at(2), VerdictReason::kIntegrityFail);
  EXPECT_TRUE(rec.flagged.contains(2));
  EXPECT_FALSE(rec.empty);
  EXPECT_FALSE(rec.aggregated.empty());
  EXPECT_LT(state.trust.at(2), cfg.defense.initial_trust);
}

TEST(RunRoundTest, ForgedUpdateFailsAuth) {
  ExperimentConfig cfg = small_config();
  cfg.transport.forge = true;
  cfg.transport.targets = {0};
  Federation fed = build_federation(cfg);
  FederationState state = initial_state(fed);
  RoundRecord rec = run_round(fed, state);
  EXPECT_EQ(rec.envelope_failures.at(0), VerdictReason::kAuthFail);
  EXPECT_FALSE(rec.aggregated.contains(0));
}

TEST(RunRoundTest, FlaggedUpdateCountsInStatsButIsNotAggregated) {
  ExperimentConfig cfg = small_config();
  cfg.privacy.mode = PrivacyMode::kOff;
  cfg.attack = {RandomUpdateAttack{1000.0}, {1}};
  Federation fed = build_federation(cfg);
  FederationState state = initial_state(fed);
  RoundRecord rec = run_round(fed, state);
  EXPECT_TRUE(rec.verified.contains(1));
  EXPECT_TRUE(rec.update_norms.contains(1));
  EXPECT_TRUE(rec.flagged.contains(1));
  EXPECT_FALSE(rec.aggregated.contains(1));
  EXPECT_EQ(state.stats.norms.back().size(), rec.verified.size());
  EXPECT_EQ(rec.true_positives, 1u);
}

TEST(RunRoundTest, EverythingDroppedGivesEmptyRound) {
  ExperimentConfig cfg = small_config();
  cfg.transport.drop_prob = 1.0;
  Federation fed = build_federation(cfg);
  FederationState state = initial_state(fed);
  ParamVector before = state.theta;
  RoundRecord rec = run_round(fed, state);
  EXPECT_TRUE(rec.empty);
  EXPECT_TRUE(rec.received.empty());
  EXPECT_EQ(state.theta, before);
  EXPECT_EQ(state.round, 1u);
}

TEST(RunExperimentTest, ZeroRoundsGiveNoRecords) {
  ExperimentConfig cfg = small_config();
  cfg.rounds = 0;
  EXPECT_TRUE(run_experiment(cfg).records.empty());
}

TEST(RunExperimentTest, InvariantsHoldAcrossAdversarialRuns) {
  Rng rng(99);
  for (int trial = 0; trial < 12; ++trial) {
    ExperimentConfig cfg = small_config();
    cfg.seed = 1000 + trial;
    cfg.rounds = 8;
    cfg.client_fraction = 0.4 + 0.6 * uniform01(rng);
    cfg.transport.drop_prob = 0.5 * uniform01(rng);
    cfg.transport.replay = trial % 2 == 0;
    cfg.privacy.eps_budget = 9.0;
    if (trial % 3 == 0) cfg.attack = {ScaleUpdateAttack{30.0}, {0}};
    if (trial % 4 == 1) cfg.rule = MultiKrumRule{1, 2};
    std::vector<RoundRecord> recs = run_experiment(cfg).records;
    std::map<ClientId, double> replayed_eps;
    for (const auto& r : recs) {
      EXPECT_TRUE(subset(r.aggregated, r.verified));
      EXPECT_TRUE(subset(r.verified, r.received));
      EXPECT_TRUE(subset(r.received, r.selected));
      EXPECT_TRUE(r.empty || !r.aggregated.empty());
      for (ClientId id : r.selected) {
        if (!r.budget_excluded.contains(id) && detail::charges_budget(cfg, id)) {
          replayed_eps[id] += cfg.privacy.epsilon;
        }
      }
      for (const auto& [id, eps] : r.cumulative_epsilon) {
        EXPECT_LE(eps, cfg.privacy.eps_budget);
        EXPECT_DOUBLE_EQ(eps, replayed_eps[id]);
      }
    }
  }
}

TEST(RunExperimentTest, ByteIdenticalAcrossRunsAndThreadCounts) {
  ExperimentConfig cfg = small_config();
  cfg.transport.drop_prob = 0.2;
  cfg.attack = {LabelFlipAttack{0.5}, {1}};
  const std::string one = render_jsonl(run_experiment(cfg, 1).records);
  EXPECT_EQ(one, render_jsonl(run_experiment(cfg, 1).records));
  EXPECT_EQ(one, render_jsonl(run_experiment(cfg, 4).records));
}

TEST(RunExperimentTest, DifferentSeedsDiverge) {
  ExperimentConfig a = small_config(), b = small_config();
  b.seed = a.seed + 1;
  EXPECT_NE(render_jsonl(run_experiment(a).records), render_jsonl(run_experiment(b).records));
}

TEST(RunExperimentTest, CompressionModesRun) {
  ExperimentConfig cfg = small_config();
  cfg.compression = {CompressionKind::kTopK, 2, 8, 1.0};
  EXPECT_EQ(run_experiment(cfg).records.size(), cfg.rounds);
  cfg.compression = {CompressionKind::kQuantize, 1, 4, 5.0};
  EXPECT_EQ(run_experiment(cfg).records.size(), cfg.rounds);
}

TEST(RunExperimentTest, PerClientEpsilonOverride) {
  ExperimentConfig cfg = small_config();
  cfg.rounds = 2;
  cfg.privacy.client_epsilon[3] = 0.25;
  auto recs = run_experiment(cfg).records;
  EXPECT_DOUBLE_EQ(recs.back().cumulative_epsilon.at(3), 0.5);
  EXPECT_DOUBLE_EQ(recs.back().cumulative_epsilon.at(0), 4.0);
}

}  // namespace
}  // namespace dpfedbank
