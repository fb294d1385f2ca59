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

#ifndef FFERM_EXPERIMENT_HPP_
#define FFERM_EXPERIMENT_HPP_

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fferm/dataset.hpp"
#include "fferm/divergence.hpp"
#include "fferm/dro.hpp"
#include "fferm/error.hpp"
#include "fferm/metrics.hpp"
#include "fferm/trainer.hpp"

namespace fferm {

/// Top of the default lambda range for each divergence.
inline double lambda_upper(const DivergenceSpec& spec) {
  switch (spec.kind()) {
    case DivergenceKind::KL: return 150.0;
    case DivergenceKind::ChiSquared: return 300.0;
    case DivergenceKind::ReverseKL: return 50.0;
    case DivergenceKind::JensenShannon: return 110.0;
    case DivergenceKind::SquaredHellinger: return 250.0;
    case DivergenceKind::TotalVariation: return 100.0;
    case DivergenceKind::Alpha: return 150.0;
  }
  return 100.0;
}

/// 0 followed by `points` log-spaced values from upper / 100 to upper.
inline std::vector<double> default_lambda_grid(const DivergenceSpec& spec, std::size_t points = 10) {
  const double upper = lambda_upper(spec);
  std::vector<double> grid{0.0};
  if (points == 1) {
    grid.push_back(upper);
    return grid;
  }
  for (std::size_t i = 0; i < points; ++i) {
    const double frac = static_cast<double>(i) / static_cast<double>(points - 1);
    grid.push_back(i + 1 == points ? upper : upper * std::pow(10.0, -2.0 * (1.0 - frac)));
  }
  return grid;
}

struct TradeoffPoint {
  double lambda = 0.0;
  double accuracy = 0.0;
  double dpv = 0.0;
  double eov = 0.0;
  double eoddsv = 0.0;
};

/// One training run per grid point; metrics of the final model on `eval`
/// (the training data when null). Rows come back sorted by lambda.
inline std::vector<TradeoffPoint> sweep(const Dataset& data, const TrainerConfig& base,
                                        std::vector<double> grid, const Dataset* eval = nullptr) {
  std::sort(grid.begin(), grid.end());
  std::vector<TradeoffPoint> out;
  for (double lambda : grid) {
    TrainerConfig cfg = base;
    cfg.lambda = lambda;
    const auto report = train(data, cfg, eval);
    const auto& r = report.final();
    if (eval != nullptr) {
      out.push_back({lambda, r.acc_test, r.dpv_test, r.eov_test, r.eoddsv_test});
    } else {
      out.push_back({lambda, r.acc_train, r.dpv_train, r.eov_train, r.eoddsv_train});
    }
  }
  return out;
}

enum class Method { Erm, Ferm, DroGradNorm, DroLinf };

inline std::string to_token(Method m) {
  switch (m) {
    case Method::Erm: return "erm";
    case Method::Ferm: return "ferm";
    case Method::DroGradNorm: return "dro-gradnorm";
    case Method::DroLinf: return "dro-linf";
  }
  return "erm";
}

inline TrainReport train_method(Method method, const Dataset& data, const RobustConfig& cfg,
                                double lambda, const Dataset* test) {
  RobustConfig run = cfg;
  run.lambda = lambda;
  switch (method) {
    case Method::Erm:
      run.lambda = 0.0;
      return train(data, run, test);
    case Method::Ferm: return train(data, run, test);
    case Method::DroGradNorm: return robust_train_smallshift(data, run, test);
    case Method::DroLinf: return robust_train_linf(data, run, test);
  }
  return train(data, run, test);
}

struct MatchOptions {
  double target = 0.80;
  double tolerance = 0.02;       // success band around the target
  double stop_tolerance = 0.005;  // bisection stops once this close
  std::size_t max_iterations = 20;
};

struct MatchedRun {
  Method method = Method::Ferm;
  double lambda = 0.0;
  double acc_train = 0.0;
  double acc_test = std::numeric_limits<double>::quiet_NaN();
  double dpv_test = std::numeric_limits<double>::quiet_NaN();
  std::size_t runs = 0;
  bool reached = false;
  std::optional<ModelParams> params;
};

/// Searches lambda so that the final training accuracy hits opts.target.
/// Accuracy falls as lambda grows: the bracket starts at [0, upper], grows by
/// 4x while the upper end is still too accurate, then bisects geometrically.
/// Keeps the run closest to the target. ERM is a single lambda = 0 run.
inline MatchedRun match_accuracy(Method method, const Dataset& train_data, const Dataset* test,
                                 const RobustConfig& cfg, const MatchOptions& opts = {}) {
  MatchedRun best;
  best.method = method;
  double best_gap = std::numeric_limits<double>::infinity();
  auto run_at = [&](double lambda) {
    const auto report = train_method(method, train_data, cfg, lambda, test);
    const auto& r = report.final();
    ++best.runs;
    const double gap = std::abs(r.acc_train - opts.target);
    if (gap < best_gap) {
      best_gap = gap;
      best.lambda = method == Method::Erm ? 0.0 : lambda;
      best.acc_train = r.acc_train;
      best.acc_test = r.acc_test;
      best.dpv_test = r.dpv_test;
      best.params = report.params;
    }
    return r.acc_train;
  };

  if (method == Method::Erm) {
    run_at(0.0);
    best.reached = best_gap <= opts.tolerance;
    return best;
  }
  double lo = 0.0;
  double hi = lambda_upper(cfg.divergence);
  double acc_hi = run_at(hi);
  while (acc_hi > opts.target + opts.stop_tolerance && best.runs < opts.max_iterations) {
    lo = hi;
    hi *= 4.0;
    acc_hi = run_at(hi);
  }
  while (best_gap > opts.stop_tolerance && best.runs < opts.max_iterations) {
    const double mid = lo == 0.0 ? hi / 8.0 : std::sqrt(lo * hi);
    const double acc = run_at(mid);
    if (acc > opts.target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  best.reached = best_gap <= opts.tolerance;
  return best;
}

struct ShiftRow {
  Method method = Method::Ferm;
  std::string setting;  // flip fraction or evaluation domain
  MatchedRun run;
};

/// Flip protocol: split the clean data once, flip the sensitive attribute of
/// a fraction of the training rows, train every method to the matched
/// accuracy on the flipped training data and evaluate on the clean test split.
inline std::vector<ShiftRow> flip_experiment(const Dataset& data,
                                             const std::vector<double>& fractions,
                                             const std::vector<Method>& methods,
                                             const RobustConfig& cfg, const MatchOptions& opts,
                                             double test_fraction = 0.2) {
  const auto [train_clean, test] = split(data, test_fraction, cfg.seed);
  std::vector<ShiftRow> rows;
  for (double fraction : fractions) {
    const Dataset train_data = flip_sensitive(train_clean, fraction, cfg.seed);
    for (Method m : methods) {
      rows.push_back({m, detail::format_double(fraction),
                      match_accuracy(m, train_data, &test, cfg, opts)});
    }
  }
  return rows;
}

}  // namespace fferm

#endif  // FFERM_EXPERIMENT_HPP_
