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

#ifndef FFERM_ESTIMATORS_HPP_
#define FFERM_ESTIMATORS_HPP_

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

#include "fferm/classifier.hpp"
#include "fferm/dataset.hpp"
#include "fferm/divergence.hpp"
#include "fferm/error.hpp"

namespace fferm {

/// pi_k = P(s = k), counted once over the training data.
struct GroupPriors {
  Eigen::VectorXd pi;
};

/// Minibatch estimates of P(yhat = j) and P(yhat = j, s = k).
struct BatchProbs {
  Eigen::VectorXd marginal;  // m
  Eigen::MatrixXd joint;     // m x k
};

/// Dual variables A (m x k), one per (predicted class, group) pair.
using DualMatrix = Eigen::MatrixXd;

/// Restricts the estimators to samples with y = label. Batch sums are then
/// divided by rate = P(y = label) so that they stay unbiased for the
/// conditional distribution.
struct Conditioning {
  std::optional<std::size_t> label;
  double rate = 1.0;

  bool admits(std::size_t y) const noexcept { return !label || *label == y; }
};

inline GroupPriors group_priors(const Slice& rows, std::size_t num_groups) {
  GroupPriors priors;
  priors.pi = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(num_groups));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    priors.pi(static_cast<Eigen::Index>(rows.group(i))) += 1.0;
  }
  for (std::size_t k = 0; k < num_groups; ++k) {
    if (priors.pi(static_cast<Eigen::Index>(k)) == 0.0) {
      fail(ErrorCode::EmptyGroup, "group " + std::to_string(k) + " has no samples");
    }
  }
  priors.pi /= static_cast<double>(rows.size());
  return priors;
}

inline GroupPriors group_priors(const Dataset& data) {
  if (data.size() == 0) fail(ErrorCode::EmptyBatch, "priors of an empty dataset");
  return group_priors(Slice(data), data.num_groups);
}

inline BatchProbs batch_probs(const ModelParams& params, const Slice& batch, std::size_t k,
                              const Conditioning& cond = {}) {
  if (batch.empty()) fail(ErrorCode::EmptyBatch, "batch_probs over an empty batch");
  const auto m = static_cast<Eigen::Index>(params.classes());
  BatchProbs out;
  out.marginal = Eigen::VectorXd::Zero(m);
  out.joint = Eigen::MatrixXd::Zero(m, static_cast<Eigen::Index>(k));
  Evaluator eval(params);
  const double scale = 1.0 / (static_cast<double>(batch.size()) * cond.rate);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (!cond.admits(batch.label(i))) continue;
    const auto& probs = eval.forward(batch.row(i));
    out.marginal += scale * probs;
    out.joint.col(static_cast<Eigen::Index>(batch.group(i))) += scale * probs;
  }
  return out;
}

/// Reference measure Q = marginal (x) pi as an m x k matrix.
inline Eigen::MatrixXd product_measure(const Eigen::VectorXd& marginal, const GroupPriors& priors) {
  return marginal * priors.pi.transpose();
}

namespace detail {

inline std::vector<double> flatten(const Eigen::MatrixXd& a) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(a.size()));
  for (Eigen::Index j = 0; j < a.rows(); ++j) {
    for (Eigen::Index k = 0; k < a.cols(); ++k) out.push_back(a(j, k));
  }
  return out;
}

/// d f*(a) / da, with total variation's interior slope 1 used everywhere.
inline double conjugate_slope(const DivergenceSpec& spec, double a) {
  if (spec.kind() == DivergenceKind::TotalVariation) {
    detail::require_in_domain(spec, a);
    return 1.0;
  }
  return conjugate_grad(spec, a);
}

}  // namespace detail

/// D_f(joint || marginal (x) pi), treating the m x k tables as flat vectors.
inline double dependence_divergence(const DivergenceSpec& spec, const BatchProbs& probs,
                                    const GroupPriors& priors) {
  const auto p = detail::flatten(probs.joint);
  const auto q = detail::flatten(product_measure(probs.marginal, priors));
  return divergence_direct(spec, p, q);
}

/// Entrywise maximizer of sum_jk A_jk P_jk - f*(A_jk) Q_jk: A_jk = f'(P_jk / Q_jk),
/// or sign(P_jk - Q_jk)/2 for total variation.
inline DualMatrix closed_form_dual(const DivergenceSpec& spec, const Eigen::MatrixXd& joint,
                                   const Eigen::MatrixXd& reference) {
  DualMatrix a(joint.rows(), joint.cols());
  if (spec.kind() == DivergenceKind::TotalVariation) {
    for (Eigen::Index j = 0; j < a.rows(); ++j) {
      for (Eigen::Index k = 0; k < a.cols(); ++k) {
        const double diff = joint(j, k) - reference(j, k);
        a(j, k) = diff > 0 ? 0.5 : (diff < 0 ? -0.5 : 0.0);
      }
    }
    return a;
  }
  const auto flat = optimal_dual(spec, detail::flatten(joint), detail::flatten(reference));
  for (Eigen::Index j = 0; j < a.rows(); ++j) {
    for (Eigen::Index k = 0; k < a.cols(); ++k) {
      a(j, k) = flat[static_cast<std::size_t>(j * a.cols() + k)];
    }
  }
  return a;
}

/// A = f'(1) everywhere (projected): the exact dual optimum when predictions
/// are independent of the group.
inline DualMatrix independence_dual(const DivergenceSpec& spec, std::size_t m, std::size_t k) {
  const double a0 = spec.differentiable() ? f_prime(spec, 1.0) : 0.0;
  return DualMatrix::Constant(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(k),
                              dual_domain(spec).project(a0));
}

struct RegularizerTerms {
  double value = 0.0;
  Eigen::VectorXd grad_theta;
  Eigen::MatrixXd grad_A;
};

/// Separable variational regularizer over one batch:
///   value   = sum_jk A_jk joint_jk - f*(A_jk) pi_k marginal_j
///   grad_A  = joint_jk - (f*)'(A_jk) pi_k marginal_j
///   grad_th = sum_jk A_jk d joint_jk - f*(A_jk) pi_k d marginal_j
inline RegularizerTerms regularizer_terms(const DivergenceSpec& spec, const ModelParams& params,
                                          const DualMatrix& a, const Slice& batch,
                                          const GroupPriors& priors,
                                          const Conditioning& cond = {}) {
  if (batch.empty()) fail(ErrorCode::EmptyBatch, "regularizer over an empty batch");
  const auto m = static_cast<Eigen::Index>(params.classes());
  const auto k = priors.pi.size();
  if (a.rows() != m || a.cols() != k) {
    fail(ErrorCode::DimensionMismatch, "dual matrix must be m x k");
  }
  Eigen::MatrixXd fstar(m, k), slope(m, k);
  for (Eigen::Index j = 0; j < m; ++j) {
    for (Eigen::Index g = 0; g < k; ++g) {
      fstar(j, g) = conjugate(spec, a(j, g));
      slope(j, g) = detail::conjugate_slope(spec, a(j, g));
    }
  }
  // c_j = sum_k f*(A_jk) pi_k, so a sample in group s weighs F_j by A_js - c_j.
  const Eigen::VectorXd c = fstar * priors.pi;

  RegularizerTerms out;
  out.grad_theta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(params.size()));
  BatchProbs probs;
  probs.marginal = Eigen::VectorXd::Zero(m);
  probs.joint = Eigen::MatrixXd::Zero(m, k);
  Evaluator eval(params);
  Eigen::VectorXd weights(m);
  const double scale = 1.0 / (static_cast<double>(batch.size()) * cond.rate);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (!cond.admits(batch.label(i))) continue;
    const auto x = batch.row(i);
    const auto& f = eval.forward(x);
    const auto s = static_cast<Eigen::Index>(batch.group(i));
    probs.marginal += scale * f;
    probs.joint.col(s) += scale * f;
    weights = a.col(s) - c;
    eval.add_weighted_prob_grad(x, weights, scale, out.grad_theta);
  }
  out.value = (a.array() * probs.joint.array()).sum() - probs.marginal.dot(c);
  out.grad_A = probs.joint - (slope.array() * (probs.marginal * priors.pi.transpose()).array()).matrix();
  return out;
}

}  // namespace fferm

#endif  // FFERM_ESTIMATORS_HPP_
