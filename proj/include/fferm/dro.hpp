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

#ifndef FFERM_DRO_HPP_
#define FFERM_DRO_HPP_

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fferm/classifier.hpp"
#include "fferm/dataset.hpp"
#include "fferm/divergence.hpp"
#include "fferm/error.hpp"
#include "fferm/estimators.hpp"
#include "fferm/trainer.hpp"

namespace fferm {

enum class RobustMode { GradNorm, LinfClamp };
enum class PNorm { Two, Inf };

inline RobustMode parse_robust_mode(std::string_view token) {
  if (token == "gradnorm") return RobustMode::GradNorm;
  if (token == "linf") return RobustMode::LinfClamp;
  fail(ErrorCode::ParseError, "unknown robust mode '" + std::string(token) + "'");
}

inline std::string to_token(RobustMode mode) {
  return mode == RobustMode::GradNorm ? "gradnorm" : "linf";
}

inline PNorm parse_p_norm(std::string_view token) {
  if (token == "2") return PNorm::Two;
  if (token == "inf") return PNorm::Inf;
  fail(ErrorCode::ParseError, "p-norm must be 2 or inf, got '" + std::string(token) + "'");
}

inline std::string to_token(PNorm p) { return p == PNorm::Two ? "2" : "inf"; }

struct RobustConfig : TrainerConfig {
  RobustMode mode = RobustMode::GradNorm;
  double delta = 0.0;
  PNorm p_norm = PNorm::Two;  // the penalty uses the dual norm: q = 2 or q = 1
  bool squared_penalty = false;
  double epsilon_penalty = 0.0;
  std::size_t refresh_every_steps = 0;  // 0: once per epoch

  void validate(std::size_t n) const {
    TrainerConfig::validate(n);
    if (!(delta >= 0.0) || !std::isfinite(delta)) {
      fail(ErrorCode::InvalidArgument, "delta must be finite and >= 0");
    }
    if (!(epsilon_penalty >= 0.0)) fail(ErrorCode::InvalidArgument, "epsilon must be >= 0");
    if (fairness_notion != FairnessNotion::DemographicParity) {
      fail(ErrorCode::InvalidArgument, "robust training supports demographic parity only");
    }
    if (mode == RobustMode::GradNorm && !divergence.differentiable()) {
      fail(ErrorCode::NonDifferentiable, "gradnorm mode needs a differentiable divergence");
    }
    if (mode == RobustMode::LinfClamp && divergence.kind() != DivergenceKind::KL &&
        divergence.kind() != DivergenceKind::ChiSquared) {
      fail(ErrorCode::UnsupportedDivergenceForLinf,
           "linf mode supports kl and chi2 only, got " + to_token(divergence));
    }
  }

  std::size_t refresh_period(std::size_t n) const {
    if (refresh_every_steps != 0) return refresh_every_steps;
    return (n + batch_size - 1) / batch_size;
  }
};

struct DroFields {
  Eigen::MatrixXd alpha_star;   // f'(p / q)
  Eigen::MatrixXd fstar_alpha;  // f*(alpha_star)
};

struct ShiftPenalty {
  double value = 0.0;
  Eigen::VectorXd grad_theta;
};

namespace detail {

/// Full-data p (joint) and q (marginal (x) pi), both m x k.
struct FullMeasures {
  Eigen::MatrixXd p;
  Eigen::MatrixXd q;
};

inline FullMeasures full_measures(const ModelParams& params, const Dataset& data,
                                  const GroupPriors& priors) {
  const auto probs = batch_probs(params, Slice(data), data.num_groups);
  return {probs.joint, product_measure(probs.marginal, priors)};
}

inline void check_measures(const DivergenceSpec& spec, const Eigen::MatrixXd& p,
                           const Eigen::MatrixXd& q) {
  if (!spec.differentiable()) {
    fail(ErrorCode::NonDifferentiable, "the shift penalty needs a differentiable divergence");
  }
  for (Eigen::Index j = 0; j < p.rows(); ++j) {
    for (Eigen::Index k = 0; k < p.cols(); ++k) {
      if (!(q(j, k) > 0.0)) {
        fail(ErrorCode::AbsoluteContinuityViolation, "reference entry is zero");
      }
      if (!(p(j, k) > 0.0) && !f_at_zero(spec)) {
        fail(ErrorCode::AbsoluteContinuityViolation, "joint entry is zero under " + to_token(spec));
      }
    }
  }
}

inline DroFields fields_from_measures(const DivergenceSpec& spec, const Eigen::MatrixXd& p,
                                      const Eigen::MatrixXd& q) {
  check_measures(spec, p, q);
  DroFields out{Eigen::MatrixXd(p.rows(), p.cols()), Eigen::MatrixXd(p.rows(), p.cols())};
  for (Eigen::Index j = 0; j < p.rows(); ++j) {
    for (Eigen::Index k = 0; k < p.cols(); ++k) {
      out.alpha_star(j, k) = f_prime(spec, p(j, k) / q(j, k));
      out.fstar_alpha(j, k) = conjugate(spec, out.alpha_star(j, k));
    }
  }
  return out;
}

/// d||x||_q / dx: x / ||x||_2 (zero at the origin) or sign(x) with sign(0) = 0.
inline Eigen::MatrixXd dual_norm_grad(const Eigen::MatrixXd& x, PNorm p) {
  if (p == PNorm::Two) {
    const double norm = x.norm();
    return norm > 0.0 ? Eigen::MatrixXd(x / norm) : Eigen::MatrixXd::Zero(x.rows(), x.cols());
  }
  return x.unaryExpr([](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

inline double dual_norm(const Eigen::MatrixXd& x, PNorm p) {
  return p == PNorm::Two ? x.norm() : x.cwiseAbs().sum();
}

/// Penalty value and per-(j, k) sensitivities u = dvalue/dalpha*, v = dvalue/df*(alpha*).
struct PenaltyParts {
  double value = 0.0;
  Eigen::MatrixXd u;
  Eigen::MatrixXd v;
};

inline PenaltyParts penalty_parts(const DroFields& fields, const RobustConfig& cfg,
                                  double lambda) {
  PenaltyParts out;
  if (cfg.squared_penalty) {
    const double eps = cfg.epsilon_penalty;
    out.value = eps * (fields.alpha_star.squaredNorm() + fields.fstar_alpha.squaredNorm());
    out.u = 2.0 * eps * fields.alpha_star;
    out.v = 2.0 * eps * fields.fstar_alpha;
    return out;
  }
  const double scale = lambda * cfg.delta;
  out.value = scale * (dual_norm(fields.alpha_star, cfg.p_norm) +
                       dual_norm(fields.fstar_alpha, cfg.p_norm));
  out.u = scale * dual_norm_grad(fields.alpha_star, cfg.p_norm);
  out.v = scale * dual_norm_grad(fields.fstar_alpha, cfg.p_norm);
  return out;
}

/// Per-sample weights W (m x k): a sample in group s contributes
/// sum_j W(j, s) * grad F_j(x) to the gradient of a function g(p, q), given
/// dg/dp = gp and dg/dq = gq. Uses dp_jk ~ F_j 1(s = k), dq_jk ~ pi_k F_j.
inline Eigen::MatrixXd sample_weights(const Eigen::MatrixXd& gp, const Eigen::MatrixXd& gq,
                                      const GroupPriors& priors) {
  const Eigen::VectorXd shared = gq * priors.pi;
  return gp.colwise() + shared;
}

/// dg/dp and dg/dq of the penalty through alpha* = f'(p / q):
/// dalpha/dp = 1 / (q f*''(alpha)), dalpha/dq = -p / (q^2 f*''(alpha)), and
/// df*(alpha)/dalpha = p / q.
inline std::pair<Eigen::MatrixXd, Eigen::MatrixXd> penalty_measure_grads(
    const DivergenceSpec& spec, const DroFields& fields, const PenaltyParts& parts,
    const Eigen::MatrixXd& p, const Eigen::MatrixXd& q) {
  Eigen::MatrixXd gp(p.rows(), p.cols()), gq(p.rows(), p.cols());
  for (Eigen::Index j = 0; j < p.rows(); ++j) {
    for (Eigen::Index k = 0; k < p.cols(); ++k) {
      const double t = p(j, k) / q(j, k);
      const double c = (parts.u(j, k) + parts.v(j, k) * t) /
                       (q(j, k) * q(j, k) * conjugate_hess(spec, fields.alpha_star(j, k)));
      gp(j, k) = c * q(j, k);
      gq(j, k) = -c * p(j, k);
    }
  }
  return {gp, gq};
}

/// Everything a small-shift step needs from the full data, O(m k) numbers.
struct SmallShiftRefresh {
  double divergence = 0.0;
  double penalty = 0.0;
  Eigen::MatrixXd weights;  // lambda * Danskin weights + penalty weights
};

inline SmallShiftRefresh refresh_small_shift(const DivergenceSpec& spec, const Eigen::MatrixXd& p,
                                             const Eigen::MatrixXd& q, const GroupPriors& priors,
                                             const RobustConfig& cfg, double lambda) {
  SmallShiftRefresh out;
  const DroFields fields = fields_from_measures(spec, p, q);
  std::vector<double> pf = flatten(p), qf = flatten(q);
  out.divergence = divergence_direct(spec, pf, qf);
  const PenaltyParts parts = penalty_parts(fields, cfg, lambda);
  out.penalty = parts.value;
  const auto [gp, gq] = penalty_measure_grads(spec, fields, parts, p, q);
  out.weights = sample_weights(lambda * fields.alpha_star + gp, -lambda * fields.fstar_alpha + gq,
                               priors);
  return out;
}

/// Clamped measures min(p + delta, 1), max(q - delta, 0) (the latter floored),
/// and whether each clamp is inactive.
struct Clamped {
  Eigen::MatrixXd p, q;
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> p_free, q_free;
};

inline Clamped clamp_measures(const Eigen::MatrixXd& p, const Eigen::MatrixXd& q, double delta) {
  if (!(delta >= 0.0) || !std::isfinite(delta)) {
    fail(ErrorCode::InvalidArgument, "delta must be finite and >= 0");
  }
  Clamped c{p, q, {}, {}};
  c.p_free.resize(p.rows(), p.cols());
  c.q_free.resize(p.rows(), p.cols());
  for (Eigen::Index j = 0; j < p.rows(); ++j) {
    for (Eigen::Index k = 0; k < p.cols(); ++k) {
      const double up = p(j, k) + delta;
      c.p_free(j, k) = up < 1.0;
      c.p(j, k) = std::min(up, 1.0);
      const double down = q(j, k) - delta;
      c.q_free(j, k) = down >= kProbFloor;
      if (down < kProbFloor) warn("clamped reference below floor; flooring to 1e-12");
      c.q(j, k) = std::max(down, kProbFloor);
    }
  }
  return c;
}

inline void require_linf_kind(const DivergenceSpec& spec) {
  if (spec.kind() != DivergenceKind::KL && spec.kind() != DivergenceKind::ChiSquared) {
    fail(ErrorCode::UnsupportedDivergenceForLinf,
         "the clamped worst case is only exact for kl and chi2, got " + to_token(spec));
  }
}

/// Worst vertex of the box p +- delta, q +- delta (p kept in [0, 1], q in
/// [floor, 1]), chosen cell by cell since D_f is a sum over cells. Ties keep
/// the clamp (p + delta, q - delta), which wins whenever the cell's term grows
/// with p and shrinks with q over the box.
inline Clamped worst_vertex(const DivergenceSpec& spec, const Eigen::MatrixXd& p,
                            const Eigen::MatrixXd& q, double delta) {
  Clamped c = clamp_measures(p, q, delta);
  const double f0 = *f_at_zero(spec);
  auto cell = [&](double pv, double qv) { return pv == 0.0 ? qv * f0 : qv * f_value(spec, pv / qv); };
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const double lo_p = p(i) - delta, hi_q = q(i) + delta;
    const double ps[2] = {c.p(i), std::max(lo_p, 0.0)};
    const double qs[2] = {c.q(i), std::min(hi_q, 1.0)};
    const bool pf[2] = {c.p_free(i), lo_p > 0.0};
    const bool qf[2] = {c.q_free(i), hi_q < 1.0};
    double best = cell(ps[0], qs[0]);
    for (int a = 0; a < 2; ++a) {
      for (int b = 0; b < 2; ++b) {
        const double v = cell(ps[a], qs[b]);
        if (v > best) {
          best = v;
          c.p(i) = ps[a];
          c.q(i) = qs[b];
          c.p_free(i) = pf[a];
          c.q_free(i) = qf[b];
        }
      }
    }
  }
  return c;
}

struct LinfRefresh {
  double value = 0.0;
  Eigen::MatrixXd weights;  // lambda * d value / d(p, q) mapped to samples
};

inline LinfRefresh refresh_linf(const DivergenceSpec& spec, const Eigen::MatrixXd& p,
                                const Eigen::MatrixXd& q, const GroupPriors& priors, double delta,
                                double lambda) {
  require_linf_kind(spec);
  const Clamped c = worst_vertex(spec, p, q, delta);
  LinfRefresh out;
  out.value = divergence_direct(spec, flatten(c.p), flatten(c.q));
  Eigen::MatrixXd gp = Eigen::MatrixXd::Zero(p.rows(), p.cols());
  Eigen::MatrixXd gq = Eigen::MatrixXd::Zero(p.rows(), p.cols());
  for (Eigen::Index j = 0; j < p.rows(); ++j) {
    for (Eigen::Index k = 0; k < p.cols(); ++k) {
      const double t = c.p(j, k) / c.q(j, k);
      if (t == 0.0) {
        if (c.q_free(j, k)) gq(j, k) = lambda * *f_at_zero(spec);
        continue;
      }
      const double fp = f_prime(spec, t);
      if (c.p_free(j, k)) gp(j, k) = lambda * fp;
      if (c.q_free(j, k)) gq(j, k) = lambda * (f_value(spec, t) - t * fp);
    }
  }
  out.weights = sample_weights(gp, gq, priors);
  return out;
}

/// grad += scale * sum_i [grad loss_i + sum_j W(j, s_i) grad F_j(x_i)] over `rows`.
/// Allocation-free given a workspace.
class WeightedStepper {
 public:
  WeightedStepper(std::size_t params_size, std::size_t m)
      : grad_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(params_size))),
        dlogits_(static_cast<Eigen::Index>(m)) {}

  const Eigen::VectorXd& gradient(const ModelParams& params, const Slice& rows,
                                  const Eigen::MatrixXd& weights) {
    if (rows.empty()) fail(ErrorCode::EmptyBatch, "step over an empty batch");
    grad_.setZero();
    Evaluator eval(params);
    const double scale = 1.0 / static_cast<double>(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const Evaluator::Features x = rows.row(i);
      const auto& f = eval.forward(x);
      const auto w = weights.col(static_cast<Eigen::Index>(rows.group(i)));
      const double mean = w.dot(f);
      dlogits_ = (f.array() * (w.array() - mean)).matrix() + f;
      dlogits_(static_cast<Eigen::Index>(rows.label(i))) -= 1.0;
      eval.add_logit_grad(x, dlogits_, scale, grad_);
    }
    return grad_;
  }

 private:
  Eigen::VectorXd grad_;
  Eigen::VectorXd dlogits_;
};

inline void sgd_update(ModelParams& params, const Eigen::VectorXd& grad, double eta) {
  params.weights() -= eta * grad;
  if (!params.weights().allFinite()) {
    fail(ErrorCode::NonFiniteUpdate, "parameters became non-finite; reduce the step sizes");
  }
}

inline Eigen::VectorXd weighted_prob_grad(const ModelParams& params, const Dataset& data,
                                          const Eigen::MatrixXd& weights) {
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(params.size()));
  Evaluator eval(params);
  const double scale = 1.0 / static_cast<double>(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Evaluator::Features x = data.features.row(static_cast<Eigen::Index>(i));
    eval.forward(x);
    eval.add_weighted_prob_grad(x, weights.col(static_cast<Eigen::Index>(data.groups[i])), scale,
                                grad);
  }
  return grad;
}

}  // namespace detail

/// alpha* = f'(p / q) and f*(alpha*) for the model's full-data joint p and
/// product reference q = marginal (x) pi.
inline DroFields dro_grad_fields(const DivergenceSpec& spec, const ModelParams& params,
                                 const Dataset& data, const GroupPriors& priors) {
  if (!spec.differentiable()) {
    fail(ErrorCode::NonDifferentiable, "total variation has no gradient field");
  }
  const auto mq = detail::full_measures(params, data, priors);
  return detail::fields_from_measures(spec, mq.p, mq.q);
}

/// Linearized worst-case increase of D_f over an l_p ball of radius delta around
/// (p, q): lambda delta (||alpha*||_q + ||f*(alpha*)||_q), or
/// eps (||alpha*||_2^2 + ||f*(alpha*)||_2^2) with squared_penalty. The gradient
/// goes through alpha*(p, q) by the implicit function theorem.
inline ShiftPenalty shift_penalty(const DivergenceSpec& spec, const ModelParams& params,
                                  const Dataset& data, const GroupPriors& priors,
                                  const RobustConfig& cfg) {
  const auto mq = detail::full_measures(params, data, priors);
  const DroFields fields = detail::fields_from_measures(spec, mq.p, mq.q);
  const auto parts = detail::penalty_parts(fields, cfg, cfg.lambda);
  const auto [gp, gq] = detail::penalty_measure_grads(spec, fields, parts, mq.p, mq.q);
  ShiftPenalty out;
  out.value = parts.value;
  out.grad_theta = detail::weighted_prob_grad(params, data, detail::sample_weights(gp, gq, priors));
  return out;
}

/// D_f(min(p + delta, 1) || max(q - delta, 0)) on explicit measures, without
/// renormalizing. Reference entries that fall below 1e-12 are floored.
inline double linf_clamped_divergence(const DivergenceSpec& spec, const Eigen::MatrixXd& p,
                                      const Eigen::MatrixXd& q, double delta) {
  detail::require_linf_kind(spec);
  const auto c = detail::clamp_measures(p, q, delta);
  return divergence_direct(spec, detail::flatten(c.p), detail::flatten(c.q));
}

/// max of D_f(p' || q') over |p' - p| <= delta, |q' - q| <= delta entrywise,
/// with p' in [0, 1] and q' in [1e-12, 1]. Equals linf_clamped_divergence when
/// every cell ratio stays above 1/e (kl) or 1 (chi2) across the box.
inline double linf_worst_divergence(const DivergenceSpec& spec, const Eigen::MatrixXd& p,
                                    const Eigen::MatrixXd& q, double delta) {
  detail::require_linf_kind(spec);
  const auto c = detail::worst_vertex(spec, p, q, delta);
  return divergence_direct(spec, detail::flatten(c.p), detail::flatten(c.q));
}

inline double robust_objective_linf(const DivergenceSpec& spec, const ModelParams& params,
                                    const Dataset& data, const GroupPriors& priors,
                                    double delta) {
  detail::require_linf_kind(spec);
  const auto mq = detail::full_measures(params, data, priors);
  return linf_worst_divergence(spec, mq.p, mq.q, delta);
}

namespace detail {

struct RefreshResult {
  Eigen::MatrixXd weights;
  double extra = 0.0;
};

template <typename Refresh>
TrainReport robust_loop(const Dataset& data, const RobustConfig& cfg, const Dataset* test,
                        Refresh&& refresh) {
  data.validate();
  cfg.validate(data.size());
  const GroupPriors priors = group_priors(data);
  const std::vector<FairnessTerm> terms{FairnessTerm{Conditioning{}, priors}};

  ModelParams params = ModelParams::initialized(cfg.arch, data.dims(), data.num_classes,
                                                mix_seed(cfg.seed, 0));
  EpochBatcher batcher(data.size(), cfg.batch_size, cfg.seed);
  WeightedStepper stepper(params.size(), data.num_classes);
  const std::size_t period = cfg.refresh_period(data.size());

  TrainReport report{{}, params, {}, true};
  report.epochs.reserve(cfg.epochs_total);
  Eigen::MatrixXd weights;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs_total; ++epoch) {
    const double lambda = epoch < cfg.warmup_epochs_lambda_zero ? 0.0 : cfg.lambda;
    batcher.reshuffle();
    for (std::size_t b = 0; b < batcher.batches(); ++b, ++step) {
      if (step % period == 0 || weights.size() == 0) {
        const auto mq = full_measures(params, data, priors);
        weights = refresh(mq.p, mq.q, priors, lambda).weights;
      }
      sgd_update(params, stepper.gradient(params, Slice(data, batcher.batch(b)), weights),
                 cfg.eta_theta);
    }
    EpochRecord rec = record_epoch(epoch, cfg.divergence, params, data, test, terms);
    const auto mq = full_measures(params, data, priors);
    const auto fresh = refresh(mq.p, mq.q, priors, cfg.lambda);
    rec.penalty = fresh.extra;
    rec.delta = cfg.delta;
    rec.grad_norm = stepper.gradient(params, Slice(data), fresh.weights).norm();
    report.epochs.push_back(rec);
  }
  report.params = params;
  return report;
}

}  // namespace detail

/// SGD on loss + lambda D_f(p || q) + shift penalty. p, q, alpha* and the
/// per-group sample weights are refreshed from one forward pass over the data
/// every refresh_period steps; between refreshes only the minibatch is
/// backpropagated.
inline TrainReport robust_train_smallshift(const Dataset& data, RobustConfig cfg,
                                           const Dataset* test = nullptr) {
  cfg.mode = RobustMode::GradNorm;
  return detail::robust_loop(
      data, cfg, test,
      [&](const Eigen::MatrixXd& p, const Eigen::MatrixXd& q, const GroupPriors& priors,
          double lambda) {
        auto r = detail::refresh_small_shift(cfg.divergence, p, q, priors, cfg, lambda);
        return detail::RefreshResult{std::move(r.weights), r.penalty};
      });
}

/// SGD on loss + lambda linf_worst_divergence, with the same refresh scheme.
/// Coordinates pinned at 0, 1 or the floor pass no gradient.
inline TrainReport robust_train_linf(const Dataset& data, RobustConfig cfg,
                                     const Dataset* test = nullptr) {
  cfg.mode = RobustMode::LinfClamp;
  return detail::robust_loop(
      data, cfg, test,
      [&](const Eigen::MatrixXd& p, const Eigen::MatrixXd& q, const GroupPriors& priors,
          double lambda) {
        auto r = detail::refresh_linf(cfg.divergence, p, q, priors, cfg.delta, lambda);
        return detail::RefreshResult{std::move(r.weights), r.value};
      });
}

inline TrainReport robust_train(const Dataset& data, const RobustConfig& cfg,
                                const Dataset* test = nullptr) {
  return cfg.mode == RobustMode::GradNorm ? robust_train_smallshift(data, cfg, test)
                                          : robust_train_linf(data, cfg, test);
}

}  // namespace fferm

#endif  // FFERM_DRO_HPP_
