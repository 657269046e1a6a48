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

// L2-regularized logistic regression and the client-side local SGD loop.

#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

#include "dpfedbank/errors.hpp"
#include "dpfedbank/random.hpp"

namespace dpfedbank {

/// Fixed-dimension real vector: model parameters or an update delta.
class ParamVector {
 public:
  ParamVector() = default;
  explicit ParamVector(std::size_t dim, double fill = 0.0) : values_(dim, fill) {}
  explicit ParamVector(std::vector<double> values) : values_(std::move(values)) {}
  ParamVector(std::initializer_list<double> values) : values_(values) {}

  std::size_t size() const noexcept { return values_.size(); }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }
  const std::vector<double>& raw() const noexcept { return values_; }

  auto begin() noexcept { return values_.begin(); }
  auto end() noexcept { return values_.end(); }
  auto begin() const noexcept { return values_.begin(); }
  auto end() const noexcept { return values_.end(); }

  double squared_norm() const noexcept {
    return std::inner_product(values_.begin(), values_.end(), values_.begin(), 0.0);
  }
  double norm() const noexcept { return std::sqrt(squared_norm()); }

  bool all_finite() const noexcept {
    for (double v : values_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  friend bool operator==(const ParamVector&, const ParamVector&) = default;

 private:
  std::vector<double> values_;
};

inline void require_same_dim(const ParamVector& a, const ParamVector& b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "vector sizes " + std::to_string(a.size()) + " and " +
                    std::to_string(b.size()));
  }
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

inline double squared_distance(const ParamVector& a, const ParamVector& b) {
  require_same_dim(a, b);
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double diff = a[i] - b[i];
    s += diff * diff;
  }
  return s;
}

struct ModelSpec {
  std::size_t dim = 1;  // feature dimension d
  double l2_lambda = 0.0;
  bool intercept = false;

  ModelSpec() = default;
  ModelSpec(std::size_t d, double lambda, bool with_intercept)
      : dim(d), l2_lambda(lambda), intercept(with_intercept) {
    validate();
  }

  void validate() const {
    if (dim < 1) throw Error(ErrorCode::kInvalidArgument, "model dimension must be >= 1");
    if (!(l2_lambda >= 0.0)) {
      throw Error(ErrorCode::kInvalidArgument, "l2_lambda must be nonnegative");
    }
  }

  /// Length of the parameter vector: d weights plus the bias when enabled.
  std::size_t param_dim() const noexcept { return dim + (intercept ? 1 : 0); }
};

struct TrainConfig {
  double learning_rate = 0.1;
  std::size_t local_epochs = 1;
  std::size_t batch_size = 16;

  void validate() const {
    if (!(learning_rate > 0.0)) {
      throw Error(ErrorCode::kInvalidArgument, "learning_rate must be positive");
    }
    if (batch_size < 1) throw Error(ErrorCode::kInvalidArgument, "batch_size must be >= 1");
  }
};

/// Row-major n x d feature matrix with binary labels.
struct DatasetShard {
  std::size_t dim = 0;
  std::vector<double> features;
  std::vector<int> labels;

  DatasetShard() = default;
  explicit DatasetShard(std::size_t d) : dim(d) {}

  std::size_t size() const noexcept { return labels.size(); }
  bool empty() const noexcept { return labels.empty(); }

  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(features).subspan(i * dim, dim);
  }
  std::span<double> row(std::size_t i) {
    return std::span<double>(features).subspan(i * dim, dim);
  }

  void push_back(std::span<const double> x, int label) {
    if (x.size() != dim) {
      throw Error(ErrorCode::kDimensionMismatch, "row has wrong feature count");
    }
    features.insert(features.end(), x.begin(), x.end());
    labels.push_back(label);
  }

  /// Shard made of the given rows, in order.
  DatasetShard subset(std::span<const std::size_t> rows) const {
    DatasetShard out(dim);
    out.features.reserve(rows.size() * dim);
    out.labels.reserve(rows.size());
    for (std::size_t r : rows) out.push_back(row(r), labels[r]);
    return out;
  }

  void validate() const {
    if (features.size() != labels.size() * dim) {
      throw Error(ErrorCode::kDimensionMismatch, "feature rows do not match label count");
    }
    for (double v : features) {
      if (!std::isfinite(v)) throw Error(ErrorCode::kInvalidArgument, "non-finite feature");
    }
    for (int y : labels) {
      if (y != 0 && y != 1) throw Error(ErrorCode::kInvalidArgument, "labels must be 0 or 1");
    }
  }

  friend bool operator==(const DatasetShard&, const DatasetShard&) = default;
};

namespace detail {

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + e^t) without overflow.
inline double softplus(double t) {
  return std::max(t, 0.0) + std::log1p(std::exp(-std::abs(t)));
}

inline double margin(const ParamVector& params, std::span<const double> x,
                     const ModelSpec& spec) {
  double z = dot(params.values().first(spec.dim), x);
  if (spec.intercept) z += params[spec.dim];
  return z;
}

inline void check_dims(const ParamVector& params, const DatasetShard& data,
                       const ModelSpec& spec) {
  if (params.size() != spec.param_dim() || data.dim != spec.dim) {
    throw Error(ErrorCode::kDimensionMismatch,
                "parameters/data do not match model dimension " + std::to_string(spec.dim));
  }
}

// Loss and gradient over a subset of rows.
inline std::pair<double, ParamVector> loss_and_grad_rows(
    const ParamVector& params, const DatasetShard& data,
    std::span<const std::size_t> rows, const ModelSpec& spec) {
  ParamVector grad(params.size());
  double loss = 0.0;
  for (std::size_t r : rows) {
    auto x = data.row(r);
    double z = margin(params, x, spec);
    double y = data.labels[r];
    loss += softplus(z) - y * z;
    double residual = sigmoid(z) - y;
    for (std::size_t j = 0; j < spec.dim; ++j) grad[j] += residual * x[j];
    if (spec.intercept) grad[spec.dim] += residual;
  }
  const double inv_n = 1.0 / static_cast<double>(rows.size());
  loss *= inv_n;
  for (double& g : grad) g *= inv_n;
  if (spec.l2_lambda > 0.0) {
    loss += 0.5 * spec.l2_lambda * params.squared_norm();
    for (std::size_t j = 0; j < params.size(); ++j) grad[j] += spec.l2_lambda * params[j];
  }
  return {loss, std::move(grad)};
}

inline std::vector<std::size_t> all_rows(std::size_t n) {
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return rows;
}

}  // namespace detail

inline ParamVector init_params(const ModelSpec& spec) {
  spec.validate();
  return ParamVector(spec.param_dim());
}

/// Mean log-loss plus (lambda/2)*||theta||^2, and its exact gradient.
inline std::pair<double, ParamVector> loss_and_grad(const ParamVector& params,
                                                    const DatasetShard& batch,
                                                    const ModelSpec& spec) {
  if (batch.empty()) throw Error(ErrorCode::kEmptyBatch, "loss over an empty batch");
  detail::check_dims(params, batch, spec);
  auto rows = detail::all_rows(batch.size());
  return detail::loss_and_grad_rows(params, batch, rows, spec);
}

/// Runs `local_epochs` of mini-batch SGD from `global` and returns the
/// parameter change. Each epoch reshuffles the rows; the last partial batch
/// is kept.
inline ParamVector local_train(const ParamVector& global, const DatasetShard& shard,
                               const TrainConfig& cfg, const ModelSpec& spec, Rng& rng) {
  if (shard.empty()) throw Error(ErrorCode::kEmptyShard, "local training on an empty shard");
  cfg.validate();
  detail::check_dims(global, shard, spec);

  ParamVector params = global;
  std::vector<std::size_t> order = detail::all_rows(shard.size());
  for (std::size_t epoch = 0; epoch < cfg.local_epochs; ++epoch) {
    fisher_yates(std::span<std::size_t>(order), rng);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      std::size_t len = std::min(cfg.batch_size, order.size() - start);
      auto batch = std::span<const std::size_t>(order).subspan(start, len);
      auto [loss, grad] = detail::loss_and_grad_rows(params, shard, batch, spec);
      for (std::size_t j = 0; j < params.size(); ++j) {
        params[j] -= cfg.learning_rate * grad[j];
      }
    }
  }

  ParamVector delta(params.size());
  for (std::size_t j = 0; j < params.size(); ++j) delta[j] = params[j] - global[j];
  return delta;
}

struct Evaluation {
  double accuracy = 0.0;
  double loss = 0.0;
};

/// Accuracy with ties at sigmoid = 0.5 predicted positive.
inline Evaluation evaluate(const ParamVector& params, const DatasetShard& shard,
                           const ModelSpec& spec) {
  if (shard.empty()) throw Error(ErrorCode::kEmptyShard, "evaluation on an empty shard");
  detail::check_dims(params, shard, spec);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < shard.size(); ++i) {
    int predicted = detail::sigmoid(detail::margin(params, shard.row(i), spec)) >= 0.5 ? 1 : 0;
    if (predicted == shard.labels[i]) ++correct;
  }
  Evaluation out;
  out.accuracy = static_cast<double>(correct) / static_cast<double>(shard.size());
  out.loss = loss_and_grad(params, shard, spec).first;
  return out;
}

}  // namespace dpfedbank
