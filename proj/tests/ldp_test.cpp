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

#include <cmath>

#include "test_util.hpp"

namespace dpfedbank {
namespace {

// sqrt(2 ln(1.25 / 1e-5)), evaluated at 30 digits with mpmath.
constexpr double kAnalyticFactor1e5 = 4.84480526260538942;

// Closed-form Pr[L > eps] for the scalar Gaussian mechanism.
double normal_tail_oracle(double sensitivity, double sigma, double eps) {
  const double mean = sensitivity * sensitivity / (2 * sigma * sigma);
  const double z = (eps - mean) * sigma / sensitivity;
  return 0.5 * std::erfc(z / std::sqrt(2.0));
}

TEST(ClipUpdateTest, RescalesOntoBall) {
  ClipResult r = clip_update(ParamVector({3, 4}), 1.0);
  EXPECT_DOUBLE_EQ(r.pre_norm, 5.0);
  EXPECT_NEAR(r.clipped[0], 0.6, 1e-15);
  EXPECT_NEAR(r.clipped[1], 0.8, 1e-15);
}

TEST(ClipUpdateTest, IdentityUnderCap) {
  ClipResult r = clip_update(ParamVector({0.1, 0}), 1.0);
  EXPECT_EQ(r.clipped, ParamVector({0.1, 0}));
  EXPECT_DOUBLE_EQ(r.pre_norm, 0.1);
  ClipResult z = clip_update(ParamVector(3), 0.7);
  EXPECT_EQ(z.clipped, ParamVector(3));
  EXPECT_EQ(z.pre_norm, 0.0);
}

TEST(ClipUpdateTest, NormNeverExceedsCap) {
  Rng rng(1);
  for (int i = 0; i < 2000; ++i) {
    const double c = 0.01 + 10 * uniform01(rng);
    ParamVector v = testing::random_vector(1 + uniform_index(rng, 20), rng, 100 * uniform01(rng));
    EXPECT_LE(clip_update(v, c).clipped.norm(), c + 1e-12);
  }
}

TEST(CalibrateSigmaTest, AnalyticMatchesHighPrecisionOracle) {
  NoiseScale s = calibrate_sigma({1.0, 1e-5, 0.5, CalibrationMode::kAnalytic});
  EXPECT_DOUBLE_EQ(s.sensitivity, 1.0);
  EXPECT_NEAR(s.sigma, kAnalyticFactor1e5, 1e-12);
  EXPECT_NEAR(s.sigma, 4.8448, 1e-3);
  NoiseScale doubled = calibrate_sigma({1.0, 1e-5, 1.0, CalibrationMode::kAnalytic});
  EXPECT_NEAR(doubled.sigma, 9.6896, 1e-3);
  EXPECT_DOUBLE_EQ(doubled.sigma, 2 * s.sigma);
}

TEST(CalibrateSigmaTest, SimpleModeIsSensitivityOverEpsilon) {
  EXPECT_EQ(sigma_for(1.0, 0.5, 1e-5, CalibrationMode::kSimple), 2.0);
  EXPECT_EQ(calibrate_sigma({0.5, 1e-5, 0.5, CalibrationMode::kSimple}).sigma, 2.0);
}

TEST(CalibrateSigmaTest, Monotonicity) {
  for (auto mode : {CalibrationMode::kAnalytic, CalibrationMode::kSimple}) {
    double prev = std::numeric_limits<double>::infinity();
    for (double eps : {0.1, 0.5, 1.0, 2.0, 8.0}) {
      double s = calibrate_sigma({eps, 1e-5, 1.0, mode}).sigma;
      EXPECT_LT(s, prev);
      prev = s;
    }
    prev = 0.0;
    for (double c : {0.1, 0.5, 1.0, 3.0}) {
      double s = calibrate_sigma({1.0, 1e-5, c, mode}).sigma;
      EXPECT_GT(s, prev);
      prev = s;
    }
  }
  double prev = std::numeric_limits<double>::infinity();
  for (double delta : {1e-9, 1e-6, 1e-3, 0.1, 0.5}) {
    double s = calibrate_sigma({1.0, delta, 1.0, CalibrationMode::kAnalytic}).sigma;
    EXPECT_LT(s, prev);
    prev = s;
  }
}

TEST(CalibrateSigmaTest, RejectsInvalidParams) {
  EXPECT_THROW(calibrate_sigma({0.0, 1e-5, 1.0, CalibrationMode::kAnalytic}), Error);
  EXPECT_THROW(calibrate_sigma({1.0, 1.0, 1.0, CalibrationMode::kAnalytic}), Error);
  EXPECT_THROW(calibrate_sigma({1.0, 1e-5, 0.0, CalibrationMode::kAnalytic}), Error);
}

TEST(PerturbTest, ZeroSigmaIsIdentity) {
  Rng rng(3);
  ParamVector v({1.5, -2.0, 0.25});
  EXPECT_EQ(perturb(v, {0.0, 0.0}, rng), v);
}

TEST(PerturbTest, NoiseMomentsAtHighDimension) {
  Rng rng(12345);
  ParamVector out = perturb(ParamVector(10000), {1.0, 2.0}, rng);
  double mean = 0.0;
  for (double x : out) mean += x;
  mean /= out.size();
  double var = 0.0;
  for (double x : out) var += (x - mean) * (x - mean);
  double sd = std::sqrt(var / (out.size() - 1));
  EXPECT_NEAR(mean, 0.0, 0.05);
  EXPECT_GE(sd, 0.97);
  EXPECT_LE(sd, 1.03);
}

TEST(PerturbTest, ScalarMeanOverTrials) {
  Rng rng(77);
  double sum = 0.0;
  for (int i = 0; i < 10000; ++i) sum += perturb(ParamVector({1.0}), {4.0, 1.0}, rng)[0];
  EXPECT_NEAR(sum / 10000, 1.0, 0.15);
}

TEST(PerturbTest, DeterministicPerSeed) {
  Rng a(5), b(5);
  ParamVector v({1, 2, 3});
  EXPECT_EQ(perturb(v, {2.0, 1.0}, a), perturb(v, {2.0, 1.0}, b));
}

TEST(PrivacyLedgerTest, SixHalfChargesFitBudgetOfThree) {
  PrivacyLedger ledger(3.0, 0.5);
  for (int i = 0; i < 6; ++i) ledger.charge(7, 0.5, 0.0);
  EXPECT_EQ(ledger.spent(7).epsilon, 3.0);
  try {
    ledger.charge(7, 0.5, 0.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kBudgetExhausted);
  }
  EXPECT_EQ(ledger.spent(7).epsilon, 3.0);
}

TEST(PrivacyLedgerTest, ZeroChargeChangesNothing) {
  PrivacyLedger ledger(1.0, 0.1);
  ledger.charge(1, 0.0, 0.0);
  EXPECT_TRUE(ledger.entries().empty());
}

TEST(PrivacyLedgerTest, FailedChargeIsAtomic) {
  PrivacyLedger ledger(1.0, 0.1);
  ledger = charge_budget(ledger, 2, 0.6, 0.01);
  EXPECT_THROW(ledger = charge_budget(ledger, 2, 0.6, 0.01), Error);
  EXPECT_EQ(ledger.spent(2).epsilon, 0.6);
  EXPECT_EQ(ledger.spent(2).delta, 0.01);
  // Delta cap alone can refuse a charge too.
  EXPECT_THROW(ledger.charge(2, 0.1, 0.2), Error);
  EXPECT_EQ(ledger.spent(2).epsilon, 0.6);
}

TEST(PrivacyLedgerTest, InvariantHoldsUnderRandomChargeSequences) {
  Rng rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    const double eps_cap = 0.5 + 5 * uniform01(rng);
    const double delta_cap = 1e-4 + 0.5 * uniform01(rng);
    PrivacyLedger ledger(eps_cap, delta_cap);
    for (int step = 0; step < 60; ++step) {
      ClientId id = static_cast<ClientId>(uniform_index(rng, 3));
      double e = uniform01(rng);
      double d = 0.05 * uniform01(rng);
      PrivacySpend before = ledger.spent(id);
      try {
        ledger.charge(id, e, d);
        EXPECT_EQ(ledger.spent(id).epsilon, before.epsilon + e);
      } catch (const Error& err) {
        EXPECT_EQ(err.code(), ErrorCode::kBudgetExhausted);
        EXPECT_EQ(ledger.spent(id).epsilon, before.epsilon);
        EXPECT_EQ(ledger.spent(id).delta, before.delta);
      }
      for (const auto& [cid, s] : ledger.entries()) {
        ASSERT_LE(s.epsilon, eps_cap);
        ASSERT_LE(s.delta, delta_cap);
      }
    }
  }
}

TEST(LossExceedanceTest, MatchesNormalTailAtDeltaFivePercent) {
  const double sigma = sigma_for(1.0, 1.0, 0.05, CalibrationMode::kAnalytic);
  EXPECT_NEAR(sigma, 2.5373, 1e-4);
  Rng rng(2);
  double est = estimate_loss_exceedance(1.0, sigma, 1.0, 1000000, rng);
  EXPECT_NEAR(normal_tail_oracle(1.0, sigma, 1.0), 0.0096, 1e-4);
  EXPECT_NEAR(est, normal_tail_oracle(1.0, sigma, 1.0), 0.001);
  EXPECT_LE(est, 0.05);
}

TEST(LossExceedanceTest, HugeSigmaNeverExceeds) {
  Rng rng(3);
  EXPECT_EQ(estimate_loss_exceedance(1.0, 1e6, 1.0, 100000, rng), 0.0);
}

TEST(LossExceedanceTest, MeanLossAtEpsilonGivesHalf) {
  Rng rng(4);
  double est = estimate_loss_exceedance(1.0, 1.0 / std::sqrt(2.0), 1.0, 1000000, rng);
  EXPECT_NEAR(est, 0.5, 0.01);
}

TEST(LossExceedanceTest, BoundedByDeltaOverGrid) {
  Rng rng(5);
  for (double eps : {0.5, 1.0}) {
    for (double delta : {0.05, 0.1}) {
      const double sigma = sigma_for(1.0, eps, delta, CalibrationMode::kAnalytic);
      EXPECT_LE(estimate_loss_exceedance(1.0, sigma, eps, 1000000, rng), delta);
    }
  }
}

TEST(TopKTest, Examples) {
  EXPECT_EQ(top_k_sparsify(ParamVector({5, -3, 1}), 2), ParamVector({5, -3, 0}));
  EXPECT_EQ(top_k_sparsify(ParamVector({5, -3, 1}), 3), ParamVector({5, -3, 1}));
  EXPECT_EQ(top_k_sparsify(ParamVector({1, 1, 1}), 1), ParamVector({1, 0, 0}));
  EXPECT_EQ(top_k_sparsify(ParamVector({1, -4, 4}), 1), ParamVector({0, -4, 0}));
  EXPECT_THROW(top_k_sparsify(ParamVector({1, 2}), 0), Error);
  EXPECT_THROW(top_k_sparsify(ParamVector({1, 2}), 3), Error);
}

TEST(QuantizeTest, Examples) {
  EXPECT_EQ(quantize_uniform(ParamVector({0.3, -0.7}), 1, 1.0), ParamVector({1, -1}));
  EXPECT_EQ(quantize_uniform(ParamVector({0.0}), 1, 1.0), ParamVector({1}));  // tie rounds up
  EXPECT_EQ(quantize_uniform(ParamVector({5.0, -9.0}), 2, 1.0), ParamVector({1, -1}));
  ParamVector levels({-1.0, -1.0 / 3.0, 1.0 / 3.0, 1.0});
  ParamVector q = quantize_uniform(levels, 2, 1.0);
  for (std::size_t i = 0; i < levels.size(); ++i) EXPECT_NEAR(q[i], levels[i], 1e-15);
}

TEST(QuantizeTest, ErrorBoundedByHalfStep) {
  Rng rng(6);
  ParamVector v(5000);
  for (double& x : v) x = 2 * uniform01(rng) - 1;
  ParamVector q = quantize_uniform(v, 8, 1.0);
  double worst = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) worst = std::max(worst, std::abs(q[i] - v[i]));
  EXPECT_LE(worst, 1.0 * 2 / 255 / 2 + 1e-12);
}

TEST(CompressionTest, Idempotent) {
  Rng rng(7);
  for (int i = 0; i < 300; ++i) {
    ParamVector v = testing::random_vector(1 + uniform_index(rng, 12), rng, 2.0);
    std::size_t k = 1 + uniform_index(rng, v.size() - 1);
    ParamVector s = top_k_sparsify(v, k);
    EXPECT_EQ(top_k_sparsify(s, k), s);
    unsigned bits = 1 + static_cast<unsigned>(uniform_index(rng, 9));
    ParamVector q = quantize_uniform(v, bits, 1.5);
    EXPECT_EQ(quantize_uniform(q, bits, 1.5), q);
  }
}

}  // namespace
}  // namespace dpfedbank
