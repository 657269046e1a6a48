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

#include <stdexcept>
#include <string>
#include <string_view>

namespace dpfedbank {

enum class ErrorCode {
  kEmptyBatch,
  kEmptyShard,
  kDimensionMismatch,
  kInvalidArgument,
  kInfeasiblePartition,
  kBudgetExhausted,
  kEmptyUpdateSet,
  kRuleInfeasible,
  kEmptyEligibleSet,
  kConfigInvalid,
  kFileNotFound,
};

constexpr std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kEmptyBatch: return "EmptyBatch";
    case ErrorCode::kEmptyShard: return "EmptyShard";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kInfeasiblePartition: return "InfeasiblePartition";
    case ErrorCode::kBudgetExhausted: return "BudgetExhausted";
    case ErrorCode::kEmptyUpdateSet: return "EmptyUpdateSet";
    case ErrorCode::kRuleInfeasible: return "RuleInfeasible";
    case ErrorCode::kEmptyEligibleSet: return "EmptyEligibleSet";
    case ErrorCode::kConfigInvalid: return "ConfigInvalid";
    case ErrorCode::kFileNotFound: return "FileNotFound";
  }
  return "Unknown";
}

/// Every failure raised by the library carries a machine-checkable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Configuration error pointing at a dotted field path such as
/// "privacy.epsilon".
class ConfigError : public Error {
 public:
  ConfigError(std::string field, std::string reason)
      : Error(ErrorCode::kConfigInvalid, field + ": " + reason),
        field_(std::move(field)),
        reason_(std::move(reason)) {}

  const std::string& field() const noexcept { return field_; }
  const std::string& reason() const noexcept { return reason_; }

 private:
  std::string field_;
  std::string reason_;
};

}  // namespace dpfedbank
