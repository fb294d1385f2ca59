// Copyright 2026 The fferm Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef FFERM_METRICS_HPP_
#define FFERM_METRICS_HPP_

#include <algorithm>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "fferm/classifier.hpp"
#include "fferm/dataset.hpp"
#include "fferm/divergence.hpp"
#include "fferm/error.hpp"
#include "fferm/estimators.hpp"

namespace fferm {

/// Fraction of each group predicted as `positive`.
inline std::vector<double> group_positive_rates(std::span<const std::size_t> preds,
                                                std::span<const std::size_t> groups,
                                                std::size_t num_groups,
                                                std::size_t positive = 1) {
  if (preds.size() != groups.size()) {
    fail(ErrorCode::LengthMismatch, "predictions and groups differ in length");
  }
  std::vector<double> hits(num_groups, 0.0), count(num_groups, 0.0);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (groups[i] >= num_groups) fail(ErrorCode::InvalidArgument, "group index out of range");
    count[groups[i]] += 1.0;
    if (preds[i] == positive) hits[groups[i]] += 1.0;
  }
  for (std::size_t k = 0; k < num_groups; ++k) {
    if (count[k] == 0.0) fail(ErrorCode::EmptyGroup, "group " + std::to_string(k) + " is empty");
    hits[k] /= count[k];
  }
  return hits;
}

/// max_{i,j} |P(yhat = 1 | s = i) - P(yhat = 1 | s = j)|. With more than two
/// classes, the maximum of this gap over every class taken as positive.
inline double dp_violation(std::span<const std::size_t> preds, std::span<const std::size_t> groups,
                           std::size_t num_groups, std::size_t num_classes = 2) {
  double worst = 0.0;
  const std::size_t first = num_classes == 2 ? 1 : 0;
  for (std::size_t c = first; c < num_classes; ++c) {
    const auto rates = group_positive_rates(preds, groups, num_groups, c);
    const auto [lo, hi] = std::minmax_element(rates.begin(), rates.end());
    worst = std::max(worst, *hi - *lo);
  }
  return worst;
}

namespace detail {

inline double conditioned_dp(std::span<const std::size_t> preds, std::span<const std::size_t> groups,
                             std::span<const std::size_t> labels, std::size_t num_groups,
                             std::size_t num_classes, std::size_t label) {
  if (labels.size() != preds.size()) {
    fail(ErrorCode::LengthMismatch, "predictions and labels differ in length");
  }
  std::vector<std::size_t> p, g;
  std::vector<bool> seen(num_groups, false);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (labels[i] != label) continue;
    p.push_back(preds[i]);
    g.push_back(groups[i]);
    if (groups[i] < num_groups) seen[groups[i]] = true;
  }
  for (std::size_t k = 0; k < num_groups; ++k) {
    if (!seen[k]) {
      fail(ErrorCode::EmptyConditionedSubset, "group " + std::to_string(k) +
                                                  " has no samples with y = " +
                                                  std::to_string(label));
    }
  }
  return dp_violation(p, g, num_groups, num_classes);
}

}  // namespace detail

/// Demographic parity violation restricted to samples with y = 1.
inline double eo_violation(std::span<const std::size_t> preds, std::span<const std::size_t> groups,
                           std::span<const std::size_t> labels, std::size_t num_groups,
                           std::size_t num_classes = 2) {
  return detail::conditioned_dp(preds, groups, labels, num_groups, num_classes, 1);
}

/// Largest conditional demographic parity violation over the label classes.
inline double eodds_violation(std::span<const std::size_t> preds,
                              std::span<const std::size_t> groups,
                              std::span<const std::size_t> labels, std::size_t num_groups,
                              std::size_t num_classes = 2) {
  double worst = 0.0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    worst = std::max(worst,
                     detail::conditioned_dp(preds, groups, labels, num_groups, num_classes, c));
  }
  return worst;
}

inline double accuracy(std::span<const std::size_t> preds, std::span<const std::size_t> labels) {
  if (preds.size() != labels.size()) {
    fail(ErrorCode::LengthMismatch, "predictions and labels differ in length");
  }
  if (preds.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::size_t hit = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) hit += preds[i] == labels[i] ? 1 : 0;
  return static_cast<double>(hit) / static_cast<double>(preds.size());
}

struct BaselinePoint {
  double p = 0.0;
  double accuracy = 0.0;
  double dpv = 0.0;
};

/// Expected (accuracy, DPV) when each prediction is replaced by class 0 with
/// probability p. Rates shrink by (1 - p), so the DPV does too.
inline std::vector<BaselinePoint> naive_baseline_curve(std::span<const std::size_t> preds,
                                                       std::span<const std::size_t> groups,
                                                       std::span<const std::size_t> labels,
                                                       std::size_t num_groups,
                                                       std::span<const double> p_grid,
                                                       std::size_t num_classes = 2) {
  const double acc = accuracy(preds, labels);
  const double dpv = dp_violation(preds, groups, num_groups, num_classes);
  double zeros = 0.0;
  for (auto y : labels) zeros += y == 0 ? 1.0 : 0.0;
  zeros /= static_cast<double>(labels.size());
  std::vector<BaselinePoint> curve;
  curve.reserve(p_grid.size());
  for (double p : p_grid) {
    if (!(p >= 0.0 && p <= 1.0)) fail(ErrorCode::InvalidArgument, "baseline p must be in [0, 1]");
    curve.push_back({p, (1.0 - p) * acc + p * zeros, (1.0 - p) * dpv});
  }
  return curve;
}

struct MetricsReport {
  double accuracy = 0.0;
  double dpv = 0.0;
  double eov = 0.0;     // NaN when some group has no y = 1 sample
  double eoddsv = 0.0;  // NaN when some (group, label) cell is empty
  double divergence_value = 0.0;
  std::vector<double> group_positive_rates;
};

/// All metrics of a model on a dataset, from hard argmax predictions; the
/// divergence term is D_f(joint || marginal (x) pi) of the soft predictions.
inline MetricsReport evaluate(const ModelParams& params, const Dataset& data,
                              const DivergenceSpec& spec) {
  MetricsReport r;
  const auto preds = predict_labels(params, data);
  r.accuracy = accuracy(preds, data.labels);
  r.dpv = dp_violation(preds, data.groups, data.num_groups, data.num_classes);
  r.group_positive_rates = group_positive_rates(preds, data.groups, data.num_groups, 1);
  constexpr double nan = std::numeric_limits<double>::quiet_NaN();
  try {
    r.eov = eo_violation(preds, data.groups, data.labels, data.num_groups, data.num_classes);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::EmptyConditionedSubset) throw;
    r.eov = nan;
  }
  try {
    r.eoddsv = eodds_violation(preds, data.groups, data.labels, data.num_groups, data.num_classes);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::EmptyConditionedSubset) throw;
    r.eoddsv = nan;
  }
  const auto priors = group_priors(data);
  r.divergence_value =
      dependence_divergence(spec, batch_probs(params, Slice(data), data.num_groups), priors);
  return r;
}

}  // namespace fferm

#endif  // FFERM_METRICS_HPP_
