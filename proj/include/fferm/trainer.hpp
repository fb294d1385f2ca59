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

#ifndef FFERM_TRAINER_HPP_
#define FFERM_TRAINER_HPP_

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fferm/classifier.hpp"
#include "fferm/dataset.hpp"
#include "fferm/divergence.hpp"
#include "fferm/error.hpp"
#include "fferm/estimators.hpp"
#include "fferm/metrics.hpp"
#include "fferm/rng.hpp"

namespace fferm {

enum class FairnessNotion { DemographicParity, EqualOpportunity, EqualizedOdds };

inline FairnessNotion parse_notion(std::string_view token) {
  if (token == "dp") return FairnessNotion::DemographicParity;
  if (token == "eo") return FairnessNotion::EqualOpportunity;
  if (token == "eodds") return FairnessNotion::EqualizedOdds;
  fail(ErrorCode::ParseError, "unknown fairness notion '" + std::string(token) + "'");
}

inline std::string to_token(FairnessNotion notion) {
  switch (notion) {
    case FairnessNotion::DemographicParity: return "dp";
    case FairnessNotion::EqualOpportunity: return "eo";
    case FairnessNotion::EqualizedOdds: return "eodds";
  }
  return "dp";
}

struct TrainerConfig {
  DivergenceSpec divergence{DivergenceKind::KL};
  double lambda = 0.0;
  double eta_theta = 1e-5;
  double eta_alpha = 1e-6;
  std::size_t epochs_total = 2000;
  std::size_t warmup_epochs_lambda_zero = 300;
  std::size_t batch_size = 8;
  std::uint64_t seed = 0;
  FairnessNotion fairness_notion = FairnessNotion::DemographicParity;
  Architecture arch = Architecture::linear();

  void validate(std::size_t n) const {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
      fail(ErrorCode::InvalidArgument, "lambda must be finite and >= 0");
    }
    if (!(eta_theta > 0.0) || !(eta_alpha > 0.0)) {
      fail(ErrorCode::InvalidArgument, "step sizes must be positive");
    }
    if (epochs_total == 0) fail(ErrorCode::InvalidArgument, "epochs must be positive");
    if (batch_size == 0 || batch_size > n) {
      fail(ErrorCode::InvalidArgument, "batch size must be in [1, n]");
    }
  }
};

/// One fairness regularizer: which samples it looks at and their group priors.
/// Demographic parity has a single unconditioned term; equality of opportunity
/// conditions on y = 1; equalized odds has one term per label class.
struct FairnessTerm {
  Conditioning cond;
  GroupPriors priors;
};

inline FairnessTerm conditioned_term(const Dataset& data, std::size_t label) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.labels[i] == label) rows.push_back(i);
  }
  std::vector<bool> seen(data.num_groups, false);
  for (auto r : rows) seen[data.groups[r]] = true;
  for (std::size_t k = 0; k < data.num_groups; ++k) {
    if (!seen[k]) {
      fail(ErrorCode::EmptyConditionedSubset, "group " + std::to_string(k) +
                                                  " has no samples with y = " +
                                                  std::to_string(label));
    }
  }
  FairnessTerm term;
  term.cond.label = label;
  term.cond.rate = static_cast<double>(rows.size()) / static_cast<double>(data.size());
  term.priors = group_priors(Slice(data, rows), data.num_groups);
  return term;
}

inline std::vector<FairnessTerm> fairness_terms(const Dataset& data, FairnessNotion notion) {
  switch (notion) {
    case FairnessNotion::DemographicParity:
      return {FairnessTerm{Conditioning{}, group_priors(data)}};
    case FairnessNotion::EqualOpportunity:
      return {conditioned_term(data, 1)};
    case FairnessNotion::EqualizedOdds: {
      std::vector<FairnessTerm> terms;
      for (std::size_t c = 0; c < data.num_classes; ++c) terms.push_back(conditioned_term(data, c));
      return terms;
    }
  }
  return {};
}

/// Entrywise clamp into the divergence's dual domain (open bounds shrunk by
/// kDomainMargin). In-domain entries are returned unchanged.
inline DualMatrix project_dual(const DivergenceSpec& spec, const DualMatrix& a) {
  const DualDomain dom = dual_domain(spec);
  return a.unaryExpr([&](double v) { return dom.project(v); });
}

struct SgdaState {
  ModelParams params;
  std::vector<DualMatrix> duals;  // one per fairness term
};

/// Simultaneous descent/ascent step of the separable min-max objective
///   mean_B loss + lambda * sum_terms sum_jk [A_jk joint_jk - f*(A_jk) pi_k marginal_j]
/// with both gradients taken at the incoming (theta, A):
///   theta' = theta - eta_theta * (grad loss + lambda * grad_theta reg)
///   A'     = proj(A + eta_alpha * lambda * grad_A reg)
/// Holds its own scratch buffers so the training loop does not allocate.
class SgdaStepper {
 public:
  SgdaStepper(const DivergenceSpec& spec, std::vector<FairnessTerm> terms, std::size_t params_size,
              std::size_t m, std::size_t k)
      : spec_(spec), domain_(dual_domain(spec)), terms_(std::move(terms)) {
    const auto mi = static_cast<Eigen::Index>(m);
    const auto ki = static_cast<Eigen::Index>(k);
    grad_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(params_size));
    dlogits_.resize(mi);
    weights_.resize(mi);
    for (std::size_t t = 0; t < terms_.size(); ++t) {
      joint_.emplace_back(Eigen::MatrixXd::Zero(mi, ki));
      marginal_.emplace_back(Eigen::VectorXd::Zero(mi));
      fstar_.emplace_back(mi, ki);
      c_.emplace_back(mi);
    }
  }

  const std::vector<FairnessTerm>& terms() const noexcept { return terms_; }

  void step(SgdaState& state, const Slice& batch, double lambda, double eta_theta,
            double eta_alpha) {
    if (batch.empty()) fail(ErrorCode::EmptyBatch, "SGDA step over an empty batch");
    const bool regularize = lambda != 0.0;
    grad_.setZero();
    if (regularize) prepare_duals(state);

    Evaluator eval(state.params);
    const double scale = 1.0 / static_cast<double>(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const Evaluator::Features x = batch.row(i);
      const auto& f = eval.forward(x);
      const std::size_t y = batch.label(i);
      dlogits_ = f;
      dlogits_(static_cast<Eigen::Index>(y)) -= 1.0;
      if (regularize) {
        const auto s = static_cast<Eigen::Index>(batch.group(i));
        for (std::size_t t = 0; t < terms_.size(); ++t) {
          const auto& cond = terms_[t].cond;
          if (!cond.admits(y)) continue;
          const double w = lambda / cond.rate;
          joint_[t].col(s) += (scale / cond.rate) * f;
          marginal_[t] += (scale / cond.rate) * f;
          weights_ = state.duals[t].col(s) - c_[t];
          const double mean = weights_.dot(f);
          dlogits_ += w * (f.array() * (weights_.array() - mean)).matrix();
        }
      }
      eval.add_logit_grad(x, dlogits_, scale, grad_);
    }

    if (regularize) {
      for (std::size_t t = 0; t < terms_.size(); ++t) {
        auto& a = state.duals[t];
        const Eigen::VectorXd& pi = terms_[t].priors.pi;
        for (Eigen::Index j = 0; j < a.rows(); ++j) {
          for (Eigen::Index g = 0; g < a.cols(); ++g) {
            const double slope = spec_.kind() == DivergenceKind::TotalVariation
                                     ? 1.0
                                     : conjugate_grad(spec_, a(j, g));
            const double grad_a = joint_[t](j, g) - slope * pi(g) * marginal_[t](j);
            a(j, g) = domain_.project(a(j, g) + eta_alpha * lambda * grad_a);
          }
        }
        if (!a.allFinite()) fail(ErrorCode::NonFiniteUpdate, "dual variables became non-finite");
      }
    }
    state.params.weights() -= eta_theta * grad_;
    if (!state.params.weights().allFinite()) {
      fail(ErrorCode::NonFiniteUpdate, "parameters became non-finite; reduce the step sizes");
    }
  }

 private:
  void prepare_duals(const SgdaState& state) {
    for (std::size_t t = 0; t < terms_.size(); ++t) {
      const auto& a = state.duals[t];
      for (Eigen::Index j = 0; j < a.rows(); ++j) {
        for (Eigen::Index g = 0; g < a.cols(); ++g) fstar_[t](j, g) = conjugate(spec_, a(j, g));
      }
      c_[t].noalias() = fstar_[t] * terms_[t].priors.pi;
      joint_[t].setZero();
      marginal_[t].setZero();
    }
  }

  DivergenceSpec spec_;
  DualDomain domain_;
  std::vector<FairnessTerm> terms_;
  Eigen::VectorXd grad_;
  Eigen::VectorXd dlogits_;
  Eigen::VectorXd weights_;
  std::vector<Eigen::MatrixXd> joint_;
  std::vector<Eigen::VectorXd> marginal_;
  std::vector<Eigen::MatrixXd> fstar_;
  std::vector<Eigen::VectorXd> c_;
};

/// Functional form of one SGDA step.
inline SgdaState sgda_step(const SgdaState& state, const Slice& batch, const TrainerConfig& cfg,
                           const std::vector<FairnessTerm>& terms) {
  SgdaState next = state;
  for (auto& a : next.duals) a = project_dual(cfg.divergence, a);
  SgdaStepper stepper(cfg.divergence, terms, state.params.size(), state.params.classes(),
                      terms.empty() ? 0 : static_cast<std::size_t>(terms.front().priors.pi.size()));
  stepper.step(next, batch, cfg.lambda, cfg.eta_theta, cfg.eta_alpha);
  return next;
}

struct EpochRecord {
  std::size_t epoch = 0;
  double loss = 0.0;
  double reg = 0.0;
  double acc_train = 0.0;
  double acc_test = std::numeric_limits<double>::quiet_NaN();
  double dpv_train = 0.0;
  double dpv_test = std::numeric_limits<double>::quiet_NaN();
  double eov_train = 0.0;
  double eov_test = std::numeric_limits<double>::quiet_NaN();
  double eoddsv_train = 0.0;
  double eoddsv_test = std::numeric_limits<double>::quiet_NaN();
  double grad_norm = 0.0;
  double penalty = std::numeric_limits<double>::quiet_NaN();
  double delta = std::numeric_limits<double>::quiet_NaN();
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  ModelParams params;
  std::vector<DualMatrix> duals;
  bool robust = false;

  const EpochRecord& final() const { return epochs.back(); }
};

namespace detail {

inline std::string csv_number(double v) {
  if (std::isnan(v)) return "nan";
  return format_double(v);
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finalizer
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline double metric_or_nan(auto&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    if (e.code() != ErrorCode::EmptyConditionedSubset) throw;
    return std::numeric_limits<double>::quiet_NaN();
  }
}

struct HardMetrics {
  double acc = 0.0, dpv = 0.0, eov = 0.0, eoddsv = 0.0;
};

inline HardMetrics hard_metrics(const std::vector<std::size_t>& preds, const Dataset& data) {
  HardMetrics h;
  h.acc = accuracy(preds, data.labels);
  h.dpv = dp_violation(preds, data.groups, data.num_groups, data.num_classes);
  h.eov = metric_or_nan(
      [&] { return eo_violation(preds, data.groups, data.labels, data.num_groups, data.num_classes); });
  h.eoddsv = metric_or_nan([&] {
    return eodds_violation(preds, data.groups, data.labels, data.num_groups, data.num_classes);
  });
  return h;
}

/// Full-data pass: loss, hard predictions and per-term (joint, marginal).
struct FullPass {
  double loss = 0.0;
  std::vector<std::size_t> preds;
  std::vector<BatchProbs> probs;  // one per term
};

inline FullPass full_pass(const ModelParams& params, const Dataset& data,
                          const std::vector<FairnessTerm>& terms) {
  FullPass out;
  const auto m = static_cast<Eigen::Index>(params.classes());
  const auto k = static_cast<Eigen::Index>(data.num_groups);
  for (std::size_t t = 0; t < terms.size(); ++t) {
    out.probs.push_back({Eigen::VectorXd::Zero(m), Eigen::MatrixXd::Zero(m, k)});
  }
  out.preds.resize(data.size());
  Evaluator eval(params);
  const double scale = 1.0 / static_cast<double>(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& f = eval.forward(data.features.row(static_cast<Eigen::Index>(i)));
    out.preds[i] = argmax(f);
    out.loss -= std::log(f(static_cast<Eigen::Index>(data.labels[i])));
    for (std::size_t t = 0; t < terms.size(); ++t) {
      if (!terms[t].cond.admits(data.labels[i])) continue;
      const double w = scale / terms[t].cond.rate;
      out.probs[t].marginal += w * f;
      out.probs[t].joint.col(static_cast<Eigen::Index>(data.groups[i])) += w * f;
    }
  }
  out.loss *= scale;
  return out;
}

/// Gradient of mean loss + lambda * sum_terms D_f(joint || marginal (x) pi) over the
/// full data, via the closed-form optimal dual (Danskin). One backward pass.
inline Eigen::VectorXd objective_gradient(const DivergenceSpec& spec, const ModelParams& params,
                                          const Dataset& data,
                                          const std::vector<FairnessTerm>& terms,
                                          const std::vector<BatchProbs>& probs, double lambda) {
  const auto m = static_cast<Eigen::Index>(params.classes());
  std::vector<DualMatrix> duals;
  std::vector<Eigen::VectorXd> cs;
  if (lambda != 0.0) {
    for (std::size_t t = 0; t < terms.size(); ++t) {
      const auto reference = product_measure(probs[t].marginal, terms[t].priors);
      duals.push_back(closed_form_dual(spec, probs[t].joint, reference));
      Eigen::MatrixXd fstar = duals.back().unaryExpr([&](double v) { return conjugate(spec, v); });
      cs.emplace_back(fstar * terms[t].priors.pi);
    }
  }
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(params.size()));
  Eigen::VectorXd dlogits(m), weights(m);
  Evaluator eval(params);
  const double scale = 1.0 / static_cast<double>(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Evaluator::Features x = data.features.row(static_cast<Eigen::Index>(i));
    const auto& f = eval.forward(x);
    dlogits = f;
    dlogits(static_cast<Eigen::Index>(data.labels[i])) -= 1.0;
    for (std::size_t t = 0; t < duals.size(); ++t) {
      if (!terms[t].cond.admits(data.labels[i])) continue;
      weights = duals[t].col(static_cast<Eigen::Index>(data.groups[i])) - cs[t];
      const double mean = weights.dot(f);
      dlogits += (lambda / terms[t].cond.rate) * (f.array() * (weights.array() - mean)).matrix();
    }
    eval.add_logit_grad(x, dlogits, scale, grad);
  }
  return grad;
}

}  // namespace detail

/// Per-epoch bookkeeping shared by every trainer: loss, the divergence
/// regularizer at the data's (joint, marginal), metrics on train and test.
inline EpochRecord record_epoch(std::size_t epoch, const DivergenceSpec& spec,
                                const ModelParams& params, const Dataset& train,
                                const Dataset* test, const std::vector<FairnessTerm>& terms,
                                detail::FullPass* pass_out = nullptr) {
  EpochRecord r;
  r.epoch = epoch;
  auto pass = detail::full_pass(params, train, terms);
  r.loss = pass.loss;
  r.reg = 0.0;
  for (std::size_t t = 0; t < terms.size(); ++t) {
    r.reg += dependence_divergence(spec, pass.probs[t], terms[t].priors);
  }
  const auto tm = detail::hard_metrics(pass.preds, train);
  r.acc_train = tm.acc;
  r.dpv_train = tm.dpv;
  r.eov_train = tm.eov;
  r.eoddsv_train = tm.eoddsv;
  if (test != nullptr && test->size() > 0) {
    const auto hm = detail::hard_metrics(predict_labels(params, *test), *test);
    r.acc_test = hm.acc;
    r.dpv_test = hm.dpv;
    r.eov_test = hm.eov;
    r.eoddsv_test = hm.eoddsv;
  }
  if (pass_out != nullptr) *pass_out = std::move(pass);
  return r;
}

/// Seeded epoch order: a fresh permutation per epoch, cut into batch_size
/// chunks with the last short chunk kept.
class EpochBatcher {
 public:
  EpochBatcher(std::size_t n, std::size_t batch_size, std::uint64_t seed)
      : order_(n), batch_size_(batch_size), rng_(detail::mix_seed(seed, 1)) {
    for (std::size_t i = 0; i < n; ++i) order_[i] = i;
  }

  void reshuffle() { rng_.shuffle(std::span<std::size_t>(order_)); }

  std::size_t batches() const noexcept { return (order_.size() + batch_size_ - 1) / batch_size_; }

  std::span<const std::size_t> batch(std::size_t b) const noexcept {
    const std::size_t start = b * batch_size_;
    const std::size_t len = std::min(batch_size_, order_.size() - start);
    return std::span<const std::size_t>(order_).subspan(start, len);
  }

 private:
  std::vector<std::size_t> order_;
  std::size_t batch_size_;
  Rng rng_;
};

/// Two-timescale stochastic gradient descent-ascent. The first
/// warmup_epochs_lambda_zero epochs run with lambda forced to 0. Duals start
/// at f'(1). Deterministic for a fixed config.
inline TrainReport train(const Dataset& data, const TrainerConfig& cfg,
                         const Dataset* test = nullptr) {
  data.validate();
  cfg.validate(data.size());
  const auto terms = fairness_terms(data, cfg.fairness_notion);

  SgdaState state{ModelParams::initialized(cfg.arch, data.dims(), data.num_classes,
                                           detail::mix_seed(cfg.seed, 0)),
                  {}};
  for (std::size_t t = 0; t < terms.size(); ++t) {
    state.duals.push_back(independence_dual(cfg.divergence, data.num_classes, data.num_groups));
  }
  SgdaStepper stepper(cfg.divergence, terms, state.params.size(), data.num_classes,
                      data.num_groups);
  EpochBatcher batcher(data.size(), cfg.batch_size, cfg.seed);

  TrainReport report{{}, state.params, {}, false};
  report.epochs.reserve(cfg.epochs_total);
  for (std::size_t epoch = 0; epoch < cfg.epochs_total; ++epoch) {
    const double lambda = epoch < cfg.warmup_epochs_lambda_zero ? 0.0 : cfg.lambda;
    batcher.reshuffle();
    for (std::size_t b = 0; b < batcher.batches(); ++b) {
      stepper.step(state, Slice(data, batcher.batch(b)), lambda, cfg.eta_theta, cfg.eta_alpha);
    }
    detail::FullPass pass;
    EpochRecord rec = record_epoch(epoch, cfg.divergence, state.params, data, test, terms, &pass);
    rec.grad_norm =
        detail::objective_gradient(cfg.divergence, state.params, data, terms, pass.probs, cfg.lambda)
            .norm();
    report.epochs.push_back(rec);
  }
  report.params = state.params;
  report.duals = state.duals;
  return report;
}

/// One row per epoch: epoch,loss,reg,acc_train,acc_test,dpv_train,dpv_test,
/// eov_train,eov_test,eoddsv_train,eoddsv_test,grad_norm[,penalty,delta]
/// [,manifest_hash]. Undefined metrics are written as "nan".
inline void write_report_csv(const TrainReport& report, std::ostream& out,
                             std::string_view manifest_hash = {}) {
  out << "epoch,loss,reg,acc_train,acc_test,dpv_train,dpv_test,eov_train,eov_test,"
         "eoddsv_train,eoddsv_test,grad_norm";
  if (report.robust) out << ",penalty,delta";
  if (!manifest_hash.empty()) out << ",manifest_hash";
  out << '\n';
  using detail::csv_number;
  for (const auto& r : report.epochs) {
    out << r.epoch << ',' << csv_number(r.loss) << ',' << csv_number(r.reg) << ','
        << csv_number(r.acc_train) << ',' << csv_number(r.acc_test) << ','
        << csv_number(r.dpv_train) << ',' << csv_number(r.dpv_test) << ','
        << csv_number(r.eov_train) << ',' << csv_number(r.eov_test) << ','
        << csv_number(r.eoddsv_train) << ',' << csv_number(r.eoddsv_test) << ','
        << csv_number(r.grad_norm);
    if (report.robust) out << ',' << csv_number(r.penalty) << ',' << csv_number(r.delta);
    if (!manifest_hash.empty()) out << ',' << manifest_hash;
    out << '\n';
  }
}

}  // namespace fferm

#endif  // FFERM_TRAINER_HPP_
