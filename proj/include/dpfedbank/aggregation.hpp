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

// Server-side aggregation rules.

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "dpfedbank/ldp.hpp"

namespace dpfedbank {

struct MeanRule {};
struct CoordMedianRule {};
struct TrimmedMeanRule {
  std::size_t trim = 0;  // values dropped from each side, per coordinate
};
struct MultiKrumRule {
  std::size_t f = 0;  // assumed number of attackers
  std::size_t m = 1;  // number of updates averaged
};

using AggregationRule = std::variant<MeanRule, CoordMedianRule, TrimmedMeanRule, MultiKrumRule>;

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

/// "mean", "median", "trimmed_mean:k", "multi_krum:f:m".
inline std::string rule_name(const AggregationRule& rule) {
  return std::visit(
      overloaded{
          [](const MeanRule&) { return std::string("mean"); },
          [](const CoordMedianRule&) { return std::string("median"); },
          [](const TrimmedMeanRule& r) { return "trimmed_mean:" + std::to_string(r.trim); },
          [](const MultiKrumRule& r) {
            return "multi_krum:" + std::to_string(r.f) + ":" + std::to_string(r.m);
          },
      },
      rule);
}

inline void check_rule_feasible(const AggregationRule& rule, std::size_t n) {
  if (const auto* t = std::get_if<TrimmedMeanRule>(&rule)) {
    if (2 * t->trim >= n) {
      throw Error(ErrorCode::kRuleInfeasible,
                  "trimmed mean with k=" + std::to_string(t->trim) + " needs N > 2k, N=" +
                      std::to_string(n));
    }
  } else if (const auto* k = std::get_if<MultiKrumRule>(&rule)) {
    if (n < k->f + 3) {
      throw Error(ErrorCode::kRuleInfeasible,
                  "multi-krum needs N - f - 2 >= 1, N=" + std::to_string(n) +
                      " f=" + std::to_string(k->f));
    }
    if (k->m < 1 || k->m > n - k->f) {
      throw Error(ErrorCode::kRuleInfeasible, "multi-krum needs 1 <= m <= N - f");
    }
  }
}

using UpdateMap = std::map<ClientId, ParamVector>;

struct AggregationOutcome {
  ParamVector aggregate;
  std::set<ClientId> contributors;
  std::set<ClientId> rejected;
};

namespace detail {

inline std::size_t checked_dim(const UpdateMap& updates) {
  if (updates.empty()) throw Error(ErrorCode::kEmptyUpdateSet, "no updates to aggregate");
  const std::size_t dim = updates.begin()->second.size();
  for (const auto& [id, u] : updates) {
    if (u.size() != dim) {
      throw Error(ErrorCode::kDimensionMismatch, "update from client " + std::to_string(id));
    }
  }
  return dim;
}

inline double mean_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

// Coordinate-wise reduction over the sorted column of values.
template <typename Reduce>
ParamVector coordinatewise(const UpdateMap& updates, std::size_t dim, Reduce reduce) {
  ParamVector out(dim);
  std::vector<double> column(updates.size());
  for (std::size_t j = 0; j < dim; ++j) {
    std::size_t i = 0;
    for (const auto& [id, u] : updates) column[i++] = u[j];
    std::sort(column.begin(), column.end());
    out[j] = reduce(std::span<const double>(column));
  }
  return out;
}

inline double median_sorted(std::span<const double> sorted) {
  const std::size_t n = sorted.size();
  if (n % 2 == 1) return sorted[n / 2];
  return 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
}

}  // namespace detail

/// Krum score of every update: sum of squared distances to its N - f - 2
/// nearest other updates.
inline std::map<ClientId, double> krum_scores(const UpdateMap& updates, std::size_t f) {
  detail::checked_dim(updates);
  const std::size_t n = updates.size();
  if (n < f + 3) throw Error(ErrorCode::kRuleInfeasible, "multi-krum needs N - f - 2 >= 1");
  const std::size_t neighbours = n - f - 2;

  std::vector<const ParamVector*> vecs;
  std::vector<ClientId> ids;
  for (const auto& [id, u] : updates) {
    ids.push_back(id);
    vecs.push_back(&u);
  }
  std::vector<std::vector<double>> dist(n, std::vector<double>(n, 0.0));
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a + 1; b < n; ++b) {
      dist[a][b] = dist[b][a] = squared_distance(*vecs[a], *vecs[b]);
    }
  }
  std::map<ClientId, double> scores;
  std::vector<double> others;
  for (std::size_t a = 0; a < n; ++a) {
    others.clear();
    for (std::size_t b = 0; b < n; ++b) {
      if (b != a) others.push_back(dist[a][b]);
    }
    std::partial_sort(others.begin(), others.begin() + static_cast<std::ptrdiff_t>(neighbours),
                      others.end());
    double s = 0.0;
    for (std::size_t i = 0; i < neighbours; ++i) s += others[i];
    scores[ids[a]] = s;
  }
  return scores;
}

/// Averages the m lowest-scoring updates; ties go to the lower client id.
inline AggregationOutcome multi_krum(const UpdateMap& updates, std::size_t f, std::size_t m) {
  const std::size_t dim = detail::checked_dim(updates);
  check_rule_feasible(MultiKrumRule{f, m}, updates.size());
  auto scores = krum_scores(updates, f);
  std::vector<std::pair<double, ClientId>> ranked;
  for (const auto& [id, s] : scores) ranked.emplace_back(s, id);
  std::sort(ranked.begin(), ranked.end());

  AggregationOutcome out;
  out.aggregate = ParamVector(dim);
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    if (i < m) {
      out.contributors.insert(ranked[i].second);
    } else {
      out.rejected.insert(ranked[i].second);
    }
  }
  // Sum in ascending id order so the result does not depend on score order.
  for (ClientId id : out.contributors) {
    const ParamVector& u = updates.at(id);
    for (std::size_t j = 0; j < dim; ++j) out.aggregate[j] += u[j];
  }
  for (double& v : out.aggregate) v /= static_cast<double>(m);
  return out;
}

inline AggregationOutcome aggregate(const UpdateMap& updates, const AggregationRule& rule) {
  const std::size_t dim = detail::checked_dim(updates);
  check_rule_feasible(rule, updates.size());
  if (const auto* k = std::get_if<MultiKrumRule>(&rule)) return multi_krum(updates, k->f, k->m);

  AggregationOutcome out;
  for (const auto& [id, u] : updates) out.contributors.insert(id);
  out.aggregate = std::visit(
      overloaded{
          // Summing each sorted column makes Mean identical to TrimmedMean(0).
          [&](const MeanRule&) { return detail::coordinatewise(updates, dim, detail::mean_of); },
          [&](const CoordMedianRule&) {
            return detail::coordinatewise(updates, dim, detail::median_sorted);
          },
          [&](const TrimmedMeanRule& r) {
            return detail::coordinatewise(updates, dim, [&](std::span<const double> sorted) {
              return detail::mean_of(sorted.subspan(r.trim, sorted.size() - 2 * r.trim));
            });
          },
          [&](const MultiKrumRule&) { return ParamVector(dim); },
      },
      rule);
  return out;
}

/// theta^(t+1) = theta^(t) + aggregated update.
inline ParamVector apply_global_update(const ParamVector& theta, const ParamVector& agg) {
  require_same_dim(theta, agg);
  ParamVector out = theta;
  for (std::size_t j = 0; j < out.size(); ++j) out[j] += agg[j];
  return out;
}

/// Per-coordinate variance of the mean of N independent N(0, sigma^2) draws.
inline double expected_agg_noise_variance(double sigma, std::size_t n) {
  if (n < 1) throw Error(ErrorCode::kInvalidArgument, "N must be >= 1");
  return sigma * sigma / static_cast<double>(n);
}

}  // namespace dpfedbank
