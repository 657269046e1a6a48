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

// Attacker behaviours: training-data attacks (label flipping, feature
// poisoning) and update attacks (boosting, random noise).

#include <cmath>
#include <set>
#include <variant>
#include <vector>

#include "dpfedbank/ldp.hpp"

namespace dpfedbank {

struct NoAttack {};
struct LabelFlipAttack {
  double fraction = 1.0;
};
struct DataPoisonAttack {
  double fraction = 1.0;
  std::vector<double> target_shift;
};
struct ScaleUpdateAttack {
  double factor = 1.0;
};
struct RandomUpdateAttack {
  double sigma = 1.0;
};

using AttackVariant =
    std::variant<NoAttack, LabelFlipAttack, DataPoisonAttack, ScaleUpdateAttack, RandomUpdateAttack>;

struct AttackSpec {
  AttackVariant variant = NoAttack{};
  std::set<ClientId> attackers;

  bool is_attacker(ClientId id) const {
    return !std::holds_alternative<NoAttack>(variant) && attackers.contains(id);
  }
  /// Data attacks alter the shard and then follow the honest protocol.
  bool is_data_attack() const {
    return std::holds_alternative<LabelFlipAttack>(variant) ||
           std::holds_alternative<DataPoisonAttack>(variant);
  }
  bool is_update_attack() const {
    return std::holds_alternative<ScaleUpdateAttack>(variant) ||
           std::holds_alternative<RandomUpdateAttack>(variant);
  }
};

namespace detail {

inline void check_fraction(double frac) {
  if (!(frac >= 0.0 && frac <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "attack fraction must lie in [0,1]");
  }
}

inline std::size_t attacked_count(double frac, std::size_t n) {
  return static_cast<std::size_t>(std::floor(frac * static_cast<double>(n)));
}

}  // namespace detail

inline DatasetShard flip_labels(const DatasetShard& shard, double frac, Rng& rng) {
  detail::check_fraction(frac);
  DatasetShard out = shard;
  for (std::size_t r :
       sample_without_replacement(shard.size(), detail::attacked_count(frac, shard.size()), rng)) {
    out.labels[r] = 1 - out.labels[r];
  }
  return out;
}

inline DatasetShard poison_data(const DatasetShard& shard, double frac,
                                std::span<const double> target_shift, Rng& rng) {
  detail::check_fraction(frac);
  if (target_shift.size() != shard.dim) {
    throw Error(ErrorCode::kDimensionMismatch, "target_shift must have the feature dimension");
  }
  DatasetShard out = shard;
  for (std::size_t r :
       sample_without_replacement(shard.size(), detail::attacked_count(frac, shard.size()), rng)) {
    auto x = out.row(r);
    for (std::size_t j = 0; j < x.size(); ++j) x[j] += target_shift[j];
    out.labels[r] = 1;
  }
  return out;
}

inline ParamVector scale_update(const ParamVector& delta, double factor) {
  ParamVector out = delta;
  for (double& v : out) v *= factor;
  return out;
}

inline ParamVector random_update(std::size_t dim, double sigma, Rng& rng) {
  if (dim < 1) throw Error(ErrorCode::kInvalidArgument, "dimension must be >= 1");
  ParamVector out(dim);
  for (double& v : out) v = sigma * standard_normal(rng);
  return out;
}

/// Applies the configured data attack to an attacker's shard; other
/// variants leave it untouched.
inline DatasetShard apply_data_attack(const AttackSpec& spec, const DatasetShard& shard, Rng& rng) {
  if (const auto* flip = std::get_if<LabelFlipAttack>(&spec.variant)) {
    return flip_labels(shard, flip->fraction, rng);
  }
  if (const auto* poison = std::get_if<DataPoisonAttack>(&spec.variant)) {
    return poison_data(shard, poison->fraction, poison->target_shift, rng);
  }
  return shard;
}

}  // namespace dpfedbank
