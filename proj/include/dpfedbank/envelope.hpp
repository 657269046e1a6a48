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

// Wire format for client updates and its SHA-256 / HMAC-SHA-256 protection.
//
// Payload: u32 little-endian length d, then d IEEE-754 binary64 values in
// little-endian byte order. Auth preimage: digest || u64 LE round || u32 LE
// client id.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <optional>
#include <span>
#include <vector>

#include <openssl/evp.h>
#include <openssl/hmac.h>

#include "dpfedbank/ldp.hpp"

namespace dpfedbank {

using Digest = std::array<std::uint8_t, 32>;
using Bytes = std::vector<std::uint8_t>;

inline Digest sha256(std::span<const std::uint8_t> data) {
  Digest out{};
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), out.data(), &len, EVP_sha256(), nullptr) != 1 ||
      len != out.size()) {
    throw std::runtime_error("SHA-256 failed");
  }
  return out;
}

inline Digest hmac_sha256(std::span<const std::uint8_t> key, std::span<const std::uint8_t> data) {
  Digest out{};
  unsigned int len = 0;
  if (HMAC(EVP_sha256(), key.data(), static_cast<int>(key.size()), data.data(), data.size(),
           out.data(), &len) == nullptr ||
      len != out.size()) {
    throw std::runtime_error("HMAC-SHA-256 failed");
  }
  return out;
}

namespace detail {

template <typename T>
void put_le(Bytes& out, T value) {
  static_assert(std::is_unsigned_v<T>);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
  }
}

template <typename T>
T get_le(std::span<const std::uint8_t> in) {
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(in[i]) << (8 * i);
  return value;
}

}  // namespace detail

inline Bytes encode_payload(const ParamVector& v) {
  Bytes out;
  out.reserve(4 + 8 * v.size());
  detail::put_le(out, static_cast<std::uint32_t>(v.size()));
  for (double x : v) detail::put_le(out, std::bit_cast<std::uint64_t>(x));
  return out;
}

/// nullopt when the byte count disagrees with the declared length.
inline std::optional<ParamVector> decode_payload(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4) return std::nullopt;
  const auto dim = detail::get_le<std::uint32_t>(bytes);
  if (bytes.size() != 4 + 8 * static_cast<std::size_t>(dim)) return std::nullopt;
  ParamVector v(dim);
  for (std::size_t i = 0; i < dim; ++i) {
    v[i] = std::bit_cast<double>(detail::get_le<std::uint64_t>(bytes.subspan(4 + 8 * i)));
  }
  return v;
}

struct ClientUpdate {
  ClientId client_id = 0;
  std::uint64_t round = 0;
  Bytes payload;
  double eps_declared = 0.0;
  double pre_clip_norm = 0.0;
  Digest digest{};
  Digest auth_tag{};

  friend bool operator==(const ClientUpdate&, const ClientUpdate&) = default;
};

inline Bytes auth_preimage(const Digest& digest, std::uint64_t round, ClientId client) {
  Bytes pre(digest.begin(), digest.end());
  detail::put_le(pre, round);
  detail::put_le(pre, client);
  return pre;
}

/// Builds an honestly produced envelope.
inline ClientUpdate seal_update(ClientId client, std::uint64_t round, const ParamVector& update,
                                double eps_declared, double pre_clip_norm,
                                std::span<const std::uint8_t> key) {
  ClientUpdate env;
  env.client_id = client;
  env.round = round;
  env.payload = encode_payload(update);
  env.eps_declared = eps_declared;
  env.pre_clip_norm = pre_clip_norm;
  env.digest = sha256(env.payload);
  env.auth_tag = hmac_sha256(key, auth_preimage(env.digest, round, client));
  return env;
}

}  // namespace dpfedbank
