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

#include <algorithm>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <span>
#include <vector>

#include <boost/random/mersenne_twister.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_01.hpp>
#include <boost/random/uniform_int_distribution.hpp>

namespace dpfedbank {

// Boost distributions are used instead of <random> ones because their output
// is identical across standard library implementations.
using Rng = boost::random::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Folds an ordered list of words into one seed. Order matters.
inline std::uint64_t derive_seed(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = 0x6a09e667f3bcc908ULL;
  for (std::uint64_t p : parts) h = splitmix64(h ^ splitmix64(p));
  return h;
}

/// Stream purposes, mixed into derived seeds so that different consumers of
/// the same (master, client, round) triple never share a stream.
enum class Stream : std::uint64_t {
  kPopulation = 1,
  kEvaluation = 2,
  kPartition = 3,
  kClient = 4,
  kSelection = 5,
  kTransport = 6,
  kAttackSetup = 7,
  kKeys = 8,
};

inline std::uint64_t stream_seed(std::uint64_t master, Stream purpose,
                                 std::uint64_t client = 0,
                                 std::uint64_t round = 0) {
  return derive_seed({master, static_cast<std::uint64_t>(purpose), client, round});
}

inline double standard_normal(Rng& rng) {
  boost::random::normal_distribution<double> dist(0.0, 1.0);
  return dist(rng);
}

inline double uniform01(Rng& rng) {
  boost::random::uniform_01<double> dist;
  return dist(rng);
}

inline std::size_t uniform_index(Rng& rng, std::size_t upper_inclusive) {
  boost::random::uniform_int_distribution<std::size_t> dist(0, upper_inclusive);
  return dist(rng);
}

/// In-place Fisher-Yates shuffle.
template <typename T>
void fisher_yates(std::span<T> items, Rng& rng) {
  if (items.size() < 2) return;
  for (std::size_t i = items.size() - 1; i > 0; --i) {
    std::size_t j = uniform_index(rng, i);
    std::swap(items[i], items[j]);
  }
}

/// Uniform sample of `count` distinct indices from [0, n), in sampled order.
inline std::vector<std::size_t> sample_without_replacement(std::size_t n,
                                                           std::size_t count,
                                                           Rng& rng) {
  std::vector<std::size_t> pool(n);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  count = std::min(count, n);
  for (std::size_t i = 0; i < count; ++i) {
    std::size_t j = i + uniform_index(rng, n - 1 - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(count);
  return pool;
}

}  // namespace dpfedbank
