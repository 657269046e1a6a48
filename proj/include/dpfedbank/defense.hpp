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

// Server-side defences: robust norm-outlier detection, reputation scores,
// and envelope verification.

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string_view>
#include <vector>

#include <openssl/crypto.h>

#include "dpfedbank/aggregation.hpp"
#include "dpfedbank/envelope.hpp"

namespace dpfedbank {

enum class VerdictReason { kNone, kNormOutlier, kIntegrityFail, kAuthFail };

constexpr std::string_view reason_name(VerdictReason r) {
  switch (r) {
    case VerdictReason::kNone: return "none";
    case VerdictReason::kNormOutlier: return "norm_outlier";
    case VerdictReason::kIntegrityFail: return "integrity_fail";
    case VerdictReason::kAuthFail: return "auth_fail";
  }
  return "unknown";
}

struct AnomalyVerdict {
  ClientId client_id = 0;
  double robust_z = 0.0;
  bool flagged = false;
  VerdictReason reason = VerdictReason::kNone;
};

/// Median and MAD of one round's update norms.
struct NormStatistics {
  double center = 0.0;
  double spread = 0.0;
};

/// Append-only history of per-round norm statistics.
struct UpdateStats {
  std::vector<std::map<ClientId, double>> norms;
  std::vector<NormStatistics> rounds;

  void append(std::map<ClientId, double> round_norms, NormStatistics stats) {
    norms.push_back(std::move(round_norms));
    rounds.push_back(stats);
  }
};

inline constexpr double kMadConsistency = 0.6745;
inline constexpr double kSpreadFloor = 1e-9;
inline constexpr std::size_t kMinUpdatesForDetection = 3;

inline double median_of(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  return detail::median_sorted(values);
}

inline NormStatistics norm_statistics(const std::vector<double>& norms) {
  NormStatistics s;
  s.center = median_of(norms);
  std::vector<double> dev;
  dev.reserve(norms.size());
  for (double n : norms) dev.push_back(std::abs(n - s.center));
  s.spread = median_of(std::move(dev));
  return s;
}

/// Flags updates whose L2 norm has robust z-score above `tau`. With fewer
/// than three updates there is no usable spread and nothing is flagged.
inline std::vector<AnomalyVerdict> detect_anomalies(const UpdateMap& updates, double tau,
                                                    NormStatistics* stats_out = nullptr) {
  std::vector<AnomalyVerdict> verdicts;
  verdicts.reserve(updates.size());
  if (updates.size() < kMinUpdatesForDetection) {
    for (const auto& [id, u] : updates) verdicts.push_back({id, 0.0, false, VerdictReason::kNone});
    if (stats_out) *stats_out = {};
    return verdicts;
  }
  std::vector<double> norms;
  for (const auto& [id, u] : updates) norms.push_back(u.norm());
  const NormStatistics stats = norm_statistics(norms);
  if (stats_out) *stats_out = stats;
  const double spread = std::max(stats.spread, kSpreadFloor);
  std::size_t i = 0;
  for (const auto& [id, u] : updates) {
    AnomalyVerdict v{id, kMadConsistency * std::abs(norms[i++] - stats.center) / spread, false,
                     VerdictReason::kNone};
    if (v.robust_z > tau) {
      v.flagged = true;
      v.reason = VerdictReason::kNormOutlier;
    }
    verdicts.push_back(v);
  }
  return verdicts;
}

using TrustScores = std::map<ClientId, double>;

inline constexpr double kTrustSnap = 1e-12;

/// Clean clients gain `reward`, flagged ones lose `penalty`; scores stay in
/// [0,1]. Clients without a verdict keep their score.
inline TrustScores update_trust(TrustScores scores, const std::vector<AnomalyVerdict>& verdicts,
                                double reward, double penalty) {
  if (!(reward >= 0.0) || !(penalty >= 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "reward and penalty must be nonnegative");
  }
  for (const auto& v : verdicts) {
    auto it = scores.find(v.client_id);
    if (it == scores.end()) continue;
    double& s = it->second;
    s = v.flagged ? s - penalty : s + reward;
    // Snap accumulated rounding residue (0.5 - 5 * 0.1 is 2.8e-17) onto the bounds.
    if (s <= kTrustSnap) s = 0.0;
    if (s >= 1.0 - kTrustSnap) s = 1.0;
  }
  return scores;
}

inline std::set<ClientId> eligible_clients(const TrustScores& scores, double theta_min) {
  std::set<ClientId> out;
  for (const auto& [id, s] : scores) {
    if (s >= theta_min) out.insert(id);
  }
  return out;
}

enum class EnvelopeStatus { kOk, kIntegrityFail, kAuthFail };

/// Checks the payload digest, then the MAC over (digest, round, client id).
/// The server passes the round it is currently running, so an envelope
/// captured in an earlier round fails authentication.
inline EnvelopeStatus verify_envelope(const ClientUpdate& env, std::span<const std::uint8_t> key,
                                      std::uint64_t expected_round) {
  const Digest digest = sha256(env.payload);
  if (CRYPTO_memcmp(digest.data(), env.digest.data(), digest.size()) != 0) {
    return EnvelopeStatus::kIntegrityFail;
  }
  const Digest tag = hmac_sha256(key, auth_preimage(env.digest, expected_round, env.client_id));
  if (CRYPTO_memcmp(tag.data(), env.auth_tag.data(), tag.size()) != 0) {
    return EnvelopeStatus::kAuthFail;
  }
  return EnvelopeStatus::kOk;
}

inline EnvelopeStatus verify_envelope(const ClientUpdate& env, std::span<const std::uint8_t> key) {
  return verify_envelope(env, key, env.round);
}

}  // namespace dpfedbank
