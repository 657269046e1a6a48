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

// Synthetic two-class population and Dirichlet label-skew partitioning.

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include <boost/random/bernoulli_distribution.hpp>
#include <boost/random/gamma_distribution.hpp>

#include "dpfedbank/model.hpp"

namespace dpfedbank {

struct PopulationSpec {
  std::size_t n_total = 2000;
  std::size_t dim = 10;
  double class_sep = 6.0;
  double positive_frac = 0.5;

  void validate() const {
    if (n_total < 1) throw Error(ErrorCode::kInvalidArgument, "n_total must be >= 1");
    if (dim < 1) throw Error(ErrorCode::kInvalidArgument, "dimension must be >= 1");
    if (!(class_sep > 0.0)) throw Error(ErrorCode::kInvalidArgument, "class_sep must be positive");
    if (!(positive_frac > 0.0 && positive_frac < 1.0)) {
      throw Error(ErrorCode::kInvalidArgument, "positive_frac must lie in (0,1)");
    }
  }
};

struct PartitionSpec {
  std::size_t n_clients = 10;
  double dirichlet_alpha = 1.0;
  std::size_t min_shard = 2;

  void validate() const {
    if (n_clients < 1) throw Error(ErrorCode::kInvalidArgument, "n_clients must be >= 1");
    if (!(dirichlet_alpha > 0.0)) {
      throw Error(ErrorCode::kInvalidArgument, "dirichlet_alpha must be positive");
    }
  }
};

/// Class-conditional unit Gaussians centred at +/-(class_sep/2) along the
/// first axis; label 1 sits on the positive side.
inline DatasetShard generate_population(const PopulationSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  boost::random::bernoulli_distribution<double> coin(spec.positive_frac);
  DatasetShard data(spec.dim);
  data.features.reserve(spec.n_total * spec.dim);
  data.labels.reserve(spec.n_total);
  std::vector<double> x(spec.dim);
  for (std::size_t i = 0; i < spec.n_total; ++i) {
    int y = coin(rng) ? 1 : 0;
    for (double& v : x) v = standard_normal(rng);
    x[0] += (y == 1 ? 0.5 : -0.5) * spec.class_sep;
    data.push_back(x, y);
  }
  return data;
}

/// Draws a Dirichlet(alpha, ..., alpha) vector of length k.
inline std::vector<double> sample_dirichlet(std::size_t k, double alpha, Rng& rng) {
  boost::random::gamma_distribution<double> gamma(alpha, 1.0);
  std::vector<double> p(k);
  double total = 0.0;
  for (double& v : p) {
    v = gamma(rng);
    total += v;
  }
  if (total <= 0.0) {
    // Every draw underflowed (tiny alpha): put all mass on one component.
    std::fill(p.begin(), p.end(), 0.0);
    p[uniform_index(rng, k - 1)] = 1.0;
    return p;
  }
  for (double& v : p) v /= total;
  return p;
}

/// Row indices owned by each client. Every row appears exactly once.
inline std::vector<std::vector<std::size_t>> partition_indices(const DatasetShard& data,
                                                               const PartitionSpec& part,
                                                               std::uint64_t seed) {
  part.validate();
  if (data.empty()) throw Error(ErrorCode::kEmptyShard, "cannot partition an empty dataset");
  const std::size_t n = data.size();
  const std::size_t clients = part.n_clients;
  if (clients > n) {
    throw Error(ErrorCode::kInfeasiblePartition,
                std::to_string(clients) + " clients for " + std::to_string(n) + " records");
  }
  if (clients * part.min_shard > n) {
    throw Error(ErrorCode::kInfeasiblePartition,
                "min_shard " + std::to_string(part.min_shard) + " x " +
                    std::to_string(clients) + " clients exceeds " + std::to_string(n) +
                    " records");
  }

  Rng rng(seed);
  std::vector<std::vector<std::size_t>> shards(clients);
  for (int label : {0, 1}) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < n; ++i) {
      if (data.labels[i] == label) members.push_back(i);
    }
    fisher_yates(std::span<std::size_t>(members), rng);
    std::vector<double> share = sample_dirichlet(clients, part.dirichlet_alpha, rng);
    // Cut points at floor(cumulative share * count); the last client takes the rest.
    double cumulative = 0.0;
    std::size_t begin = 0;
    for (std::size_t c = 0; c < clients; ++c) {
      cumulative += share[c];
      std::size_t end = c + 1 == clients
                            ? members.size()
                            : std::min(members.size(),
                                       static_cast<std::size_t>(cumulative *
                                                                static_cast<double>(members.size())));
      end = std::max(end, begin);
      shards[c].insert(shards[c].end(), members.begin() + static_cast<std::ptrdiff_t>(begin),
                       members.begin() + static_cast<std::ptrdiff_t>(end));
      begin = end;
    }
  }

  // Top up undersized shards from the currently largest one.
  for (;;) {
    auto small = std::find_if(shards.begin(), shards.end(), [&](const auto& s) {
      return s.size() < part.min_shard;
    });
    if (small == shards.end()) break;
    auto largest = std::max_element(shards.begin(), shards.end(), [](const auto& a, const auto& b) {
      return a.size() < b.size();
    });
    small->push_back(largest->back());
    largest->pop_back();
  }
  for (auto& s : shards) std::sort(s.begin(), s.end());
  return shards;
}

inline std::vector<DatasetShard> partition_non_iid(const DatasetShard& data,
                                                   const PartitionSpec& part,
                                                   std::uint64_t seed) {
  std::vector<DatasetShard> out;
  for (const auto& rows : partition_indices(data, part, seed)) out.push_back(data.subset(rows));
  return out;
}

inline double positive_fraction(const DatasetShard& shard) {
  if (shard.empty()) return 0.0;
  double pos = 0.0;
  for (int y : shard.labels) pos += y;
  return pos / static_cast<double>(shard.size());
}

/// CSV with header `f0,...,f{d-1},label`; features use 9 significant digits.
inline void write_shard_csv(const DatasetShard& shard, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kFileNotFound, "cannot open " + path + " for writing");
  for (std::size_t j = 0; j < shard.dim; ++j) out << 'f' << j << ',';
  out << "label\n";
  char buf[32];
  for (std::size_t i = 0; i < shard.size(); ++i) {
    for (double v : shard.row(i)) {
      std::snprintf(buf, sizeof(buf), "%.9g", v);
      out << buf << ',';
    }
    out << shard.labels[i] << '\n';
  }
}

}  // namespace dpfedbank
