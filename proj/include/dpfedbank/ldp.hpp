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

// Local differential privacy: norm clipping, Gaussian perturbation, noise
// calibration, sequential budget accounting, an empirical privacy-loss check,
// and the compression transforms applied to released updates.

#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <string>

#include "dpfedbank/model.hpp"

namespace dpfedbank {

using ClientId = std::uint32_t;

enum class CalibrationMode { kAnalytic, kSimple };

struct PrivacyParams {
  double epsilon = 1.0;
  double delta = 1e-5;
  double clip_norm = 1.0;
  CalibrationMode mode = CalibrationMode::kAnalytic;

  void validate() const {
    if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
      throw Error(ErrorCode::kInvalidArgument, "epsilon must be positive");
    }
    if (!(delta > 0.0 && delta < 1.0)) {
      throw Error(ErrorCode::kInvalidArgument, "delta must lie in (0,1)");
    }
    if (!(clip_norm > 0.0) || !std::isfinite(clip_norm)) {
      throw Error(ErrorCode::kInvalidArgument, "clip_norm must be positive");
    }
  }
};

struct NoiseScale {
  double sigma = 0.0;
  double sensitivity = 0.0;
};

struct ClipResult {
  ParamVector clipped;
  double pre_norm = 0.0;
};

/// Rescales `delta` onto the L2 ball of radius `clip_norm` when it lies outside.
inline ClipResult clip_update(const ParamVector& delta, double clip_norm) {
  if (!(clip_norm > 0.0)) throw Error(ErrorCode::kInvalidArgument, "clip_norm must be positive");
  ClipResult out{delta, delta.norm()};
  if (out.pre_norm > clip_norm) {
    const double scale = clip_norm / out.pre_norm;
    for (double& v : out.clipped) v *= scale;
  }
  return out;
}

/// Two clipped updates differ by at most 2C, so the sensitivity is 2C.
inline double sensitivity_for_clip(double clip_norm) { return 2.0 * clip_norm; }

inline double sigma_for(double sensitivity, double epsilon, double delta, CalibrationMode mode) {
  if (mode == CalibrationMode::kSimple) return sensitivity / epsilon;
  return sensitivity / epsilon * std::sqrt(2.0 * std::log(1.25 / delta));
}

inline NoiseScale calibrate_sigma(const PrivacyParams& params) {
  params.validate();
  const double sensitivity = sensitivity_for_clip(params.clip_norm);
  return {sigma_for(sensitivity, params.epsilon, params.delta, params.mode), sensitivity};
}

/// Adds i.i.d. N(0, sigma^2) noise to every coordinate.
inline ParamVector perturb(const ParamVector& delta, const NoiseScale& scale, Rng& rng) {
  ParamVector out = delta;
  if (scale.sigma == 0.0) return out;
  for (double& v : out) v += scale.sigma * standard_normal(rng);
  return out;
}

struct PrivacySpend {
  double epsilon = 0.0;
  double delta = 0.0;
};

/// Per-client cumulative (epsilon, delta) under basic sequential composition.
/// A charge that would push either total over its cap is refused and leaves
/// the ledger untouched.
class PrivacyLedger {
 public:
  PrivacyLedger(double eps_budget, double delta_budget)
      : eps_budget_(eps_budget), delta_budget_(delta_budget) {
    if (!(eps_budget > 0.0)) throw Error(ErrorCode::kInvalidArgument, "eps_budget must be positive");
    if (!(delta_budget > 0.0 && delta_budget < 1.0)) {
      throw Error(ErrorCode::kInvalidArgument, "delta_budget must lie in (0,1)");
    }
  }

  double eps_budget() const noexcept { return eps_budget_; }
  double delta_budget() const noexcept { return delta_budget_; }

  bool can_afford(ClientId client, double epsilon, double delta) const {
    PrivacySpend s = spent(client);
    return s.epsilon + epsilon <= eps_budget_ && s.delta + delta <= delta_budget_;
  }

  void charge(ClientId client, double epsilon, double delta) {
    if (!(epsilon >= 0.0) || !(delta >= 0.0)) {
      throw Error(ErrorCode::kInvalidArgument, "charges must be nonnegative");
    }
    if (!can_afford(client, epsilon, delta)) {
      throw Error(ErrorCode::kBudgetExhausted, "client " + std::to_string(client));
    }
    if (epsilon == 0.0 && delta == 0.0) return;
    PrivacySpend& s = entries_[client];
    s.epsilon += epsilon;
    s.delta += delta;
  }

  PrivacySpend spent(ClientId client) const {
    auto it = entries_.find(client);
    return it == entries_.end() ? PrivacySpend{} : it->second;
  }

  const std::map<ClientId, PrivacySpend>& entries() const noexcept { return entries_; }

 private:
  double eps_budget_;
  double delta_budget_;
  std::map<ClientId, PrivacySpend> entries_;
};

/// Functional form of PrivacyLedger::charge.
inline PrivacyLedger charge_budget(PrivacyLedger ledger, ClientId client, double epsilon,
                                   double delta) {
  ledger.charge(client, epsilon, delta);
  return ledger;
}

/// Monte Carlo estimate of Pr[L > epsilon] for the scalar Gaussian mechanism
/// with sensitivity `sensitivity`, where L is the privacy loss
/// sensitivity*Z/sigma^2 + sensitivity^2/(2 sigma^2) with Z ~ N(0, sigma^2).
inline double estimate_loss_exceedance(double sensitivity, double sigma, double epsilon,
                                       std::size_t trials, Rng& rng) {
  if (!(sigma > 0.0)) throw Error(ErrorCode::kInvalidArgument, "sigma must be positive");
  if (trials == 0) throw Error(ErrorCode::kInvalidArgument, "trials must be positive");
  const double var = sigma * sigma;
  const double offset = sensitivity * sensitivity / (2.0 * var);
  std::size_t exceed = 0;
  for (std::size_t i = 0; i < trials; ++i) {
    double z = sigma * standard_normal(rng);
    if (sensitivity * z / var + offset > epsilon) ++exceed;
  }
  return static_cast<double>(exceed) / static_cast<double>(trials);
}

/// Keeps the k largest-magnitude entries; ties go to the lower index.
inline ParamVector top_k_sparsify(const ParamVector& delta, std::size_t k) {
  if (k < 1 || k > delta.size()) {
    throw Error(ErrorCode::kInvalidArgument, "k must lie in [1, d]");
  }
  std::vector<std::size_t> order(delta.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::abs(delta[a]) > std::abs(delta[b]);
  });
  ParamVector out(delta.size());
  for (std::size_t i = 0; i < k; ++i) out[order[i]] = delta[order[i]];
  return out;
}

/// Snaps each entry (clamped to [-range, range]) to the nearest of 2^bits
/// evenly spaced levels; halfway points round up.
inline ParamVector quantize_uniform(const ParamVector& delta, unsigned bits, double range) {
  if (bits < 1 || bits > 52) throw Error(ErrorCode::kInvalidArgument, "bits must lie in [1, 52]");
  if (!(range > 0.0)) throw Error(ErrorCode::kInvalidArgument, "range must be positive");
  const double levels = std::ldexp(1.0, static_cast<int>(bits)) - 1.0;  // intervals
  const double step = 2.0 * range / levels;
  ParamVector out(delta.size());
  for (std::size_t i = 0; i < delta.size(); ++i) {
    double v = std::clamp(delta[i], -range, range);
    double index = std::floor((v + range) / step + 0.5);
    index = std::clamp(index, 0.0, levels);
    out[i] = -range + index * step;
  }
  return out;
}

}  // namespace dpfedbank
