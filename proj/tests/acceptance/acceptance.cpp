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

// Acceptance checks. `acceptance N` runs criterion N; without arguments every
// criterion runs. Each prints one PASS/FAIL line and the exit status is
// nonzero if any ran criterion failed.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "fferm/fferm.hpp"
#include "oracles.hpp"

#ifndef FFERM_CLI_PATH
#error "FFERM_CLI_PATH must name the fferm_cli binary"
#endif

namespace {

using namespace fferm;
namespace fs = std::filesystem;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int digits = 3) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*g", digits, v);
  return buf;
}

// ---------------------------------------------------------------------------
// 1. Conjugate identities.

Outcome conjugate_suite() {
  std::mt19937_64 gen(101);
  std::uniform_real_distribution<double> ratio(0.05, 6.0);
  double fy_gap = -1.0, fy_eq = 0.0, fd = 0.0, bi = 0.0;
  constexpr double h = 1e-5;
  for (const auto& s : oracle::all_kinds()) {
    for (int i = 0; i < 1000; ++i) {
      const double a = oracle::random_dual(s, gen);
      const double t = ratio(gen);
      fy_gap = std::max(fy_gap, a * t - f_value(s, t) - conjugate(s, a));
      if (!s.differentiable()) continue;
      const double ts = conjugate_grad(s, a);
      if (ts >= 0.0) fy_eq = std::max(fy_eq, std::abs(a * ts - f_value(s, ts) - conjugate(s, a)));

      const double d1 = oracle::central_difference([&](double x) { return f_value(s, x); }, t, h);
      const double d2 = oracle::central_difference([&](double x) { return conjugate(s, x); }, a, h);
      const double d3 =
          oracle::central_difference([&](double x) { return conjugate_grad(s, x); }, a, h);
      fd = std::max({fd, oracle::relative_error(f_prime(s, t), d1, 1e-3),
                     oracle::relative_error(conjugate_grad(s, a), d2, 1e-3),
                     oracle::relative_error(conjugate_hess(s, a), d3, 1e-3)});

      const double tb = 0.2 + 4.8 * (t - 0.05) / 5.95;
      bi = std::max(bi, std::abs(oracle::grid_biconjugate(s, tb) - f_value(s, tb)));
    }
  }
  const bool pass = fy_gap <= 1e-12 && fy_eq <= 1e-8 && fd <= 1e-5 && bi <= 1e-6;
  return {pass, "9 kinds x 1000 points; max FY gap " + fmt(fy_gap) + ", FY equality " + fmt(fy_eq) +
                    ", derivative rel err " + fmt(fd) + ", biconjugate err " + fmt(bi)};
}

// ---------------------------------------------------------------------------
// 2. Variational form equals direct form; chi2 equals ERMI.

Outcome variational_suite() {
  std::mt19937_64 gen(202);
  double worst = 0.0, ermi_err = 0.0;
  for (const auto& s : oracle::all_kinds()) {
    for (int i = 0; i < 100; ++i) {
      const auto p = oracle::random_simplex(2 + i % 6, gen);
      const auto q = oracle::random_simplex(p.size(), gen);
      worst = std::max(worst, std::abs(divergence_variational(s, p, q) - divergence_direct(s, p, q)));
    }
  }
  const DivergenceSpec chi(DivergenceKind::ChiSquared);
  for (int i = 0; i < 100; ++i) {
    const auto mq = oracle::random_table(2 + i % 3, 2 + (i / 3) % 3, gen);
    double ermi = -1.0;
    for (Eigen::Index c = 0; c < mq.p.size(); ++c) ermi += mq.p(c) * mq.p(c) / mq.q(c);
    const double v = divergence_variational(chi, detail::flatten(mq.p), detail::flatten(mq.q));
    ermi_err = std::max(ermi_err, std::abs(v - ermi));
  }
  return {worst <= 1e-8 && ermi_err <= 1e-9,
          "max |variational - direct| " + fmt(worst) + " over 900 pairs; ERMI err " + fmt(ermi_err)};
}

// ---------------------------------------------------------------------------
// 3. Minibatch estimators are unbiased: enumerate every batch.

Outcome unbiasedness() {
  double worst = 0.0;
  std::size_t cases = 0;
  for (const auto& spec : oracle::all_kinds()) {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      const auto data = oracle::random_dataset(seed, 6, 3, 2, 2);
      const auto arch = seed == 2 ? Architecture::one_hidden(3) : Architecture::linear();
      const auto params = oracle::random_params(arch, 3, 2, seed + 10);
      const auto priors = group_priors(data);
      std::mt19937_64 gen(seed);
      DualMatrix a(2, 2);
      for (Eigen::Index i = 0; i < 4; ++i) a(i) = oracle::random_dual(spec, gen);
      const auto full = regularizer_terms(spec, params, a, Slice(data), priors);
      const auto full_loss = grad_loss(params, Slice(data));
      for (std::size_t b = 1; b <= 3; ++b) {
        const auto batches = oracle::all_subsets(6, b);
        Eigen::VectorXd gt = Eigen::VectorXd::Zero(full.grad_theta.size());
        Eigen::VectorXd gl = Eigen::VectorXd::Zero(full_loss.size());
        Eigen::MatrixXd ga = Eigen::MatrixXd::Zero(2, 2);
        double value = 0.0;
        for (const auto& rows : batches) {
          const auto t = regularizer_terms(spec, params, a, Slice(data, rows), priors);
          gt += t.grad_theta;
          ga += t.grad_A;
          value += t.value;
          gl += grad_loss(params, Slice(data, rows));
        }
        const double nb = static_cast<double>(batches.size());
        worst = std::max({worst, (gt / nb - full.grad_theta).cwiseAbs().maxCoeff(),
                          (ga / nb - full.grad_A).cwiseAbs().maxCoeff(),
                          (gl / nb - full_loss).cwiseAbs().maxCoeff(), std::abs(value / nb - full.value)});
        ++cases;
      }
    }
  }
  return {worst <= 1e-12, std::to_string(cases) + " (kind, instance, b) cases; max deviation " + fmt(worst)};
}

// ---------------------------------------------------------------------------
// 4. Gradient checks.

Outcome gradient_checks() {
  double loss_err = 0.0, prob_err = 0.0, reg_t = 0.0, reg_a = 0.0, pen_err = 0.0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto arch = seed % 2 ? Architecture::linear() : Architecture::one_hidden(4);
    const auto data = oracle::random_dataset(seed, 12, 3, 2 + seed % 2, 2);
    const std::size_t m = data.num_classes;
    const auto params = oracle::random_params(arch, 3, m, seed + 20);
    const auto w0 = params.weights();

    const auto numeric_loss = oracle::numeric_gradient(
        [&](const Eigen::VectorXd& w) { return loss(oracle::with_weights(params, w), Slice(data)); }, w0);
    loss_err = std::max(loss_err, oracle::relative_error(grad_loss(params, Slice(data)), numeric_loss, 1e-3));

    const Eigen::RowVectorXd xr = data.features.row(0);
    const std::vector<double> x(xr.data(), xr.data() + xr.size());
    for (std::size_t j = 0; j < m; ++j) {
      const auto numeric = oracle::numeric_gradient(
          [&](const Eigen::VectorXd& w) {
            return forward(oracle::with_weights(params, w), x).probs(static_cast<Eigen::Index>(j));
          },
          w0);
      prob_err = std::max(prob_err, oracle::relative_error(grad_prob(params, x, j), numeric, 1e-3));
    }

    const auto priors = group_priors(data);
    for (const auto& spec : oracle::all_kinds()) {
      std::mt19937_64 gen(seed);
      DualMatrix a(static_cast<Eigen::Index>(m), 2);
      for (Eigen::Index i = 0; i < a.size(); ++i) a(i) = oracle::random_dual(spec, gen);
      const auto t = regularizer_terms(spec, params, a, Slice(data), priors);
      const auto nt = oracle::numeric_gradient(
          [&](const Eigen::VectorXd& w) {
            return regularizer_terms(spec, oracle::with_weights(params, w), a, Slice(data), priors).value;
          },
          w0);
      reg_t = std::max(reg_t, oracle::relative_error(t.grad_theta, nt, 1e-3));
      Eigen::VectorXd av = a.reshaped();
      const auto na = oracle::numeric_gradient(
          [&](const Eigen::VectorXd& v) {
            const DualMatrix am = v.reshaped(a.rows(), a.cols());
            return regularizer_terms(spec, params, am, Slice(data), priors).value;
          },
          av);
      reg_a = std::max(reg_a, oracle::relative_error(Eigen::VectorXd(t.grad_A.reshaped()), na, 1e-3));
    }

    for (const auto& spec : oracle::smooth_kinds()) {
      RobustConfig cfg;
      cfg.lambda = 1.5;
      cfg.delta = 0.1;
      cfg.p_norm = seed % 3 == 0 ? PNorm::Inf : PNorm::Two;
      cfg.squared_penalty = seed % 4 == 0;
      cfg.epsilon_penalty = 0.3;
      const auto pen = shift_penalty(spec, params, data, priors, cfg);
      const auto np = oracle::numeric_gradient(
          [&](const Eigen::VectorXd& w) {
            return shift_penalty(spec, oracle::with_weights(params, w), data, priors, cfg).value;
          },
          w0);
      pen_err = std::max(pen_err, oracle::relative_error(pen.grad_theta, np, 1e-3));
    }
  }
  const bool pass = loss_err <= 1e-5 && prob_err <= 1e-5 && reg_t <= 1e-4 && reg_a <= 1e-4 && pen_err <= 1e-4;
  return {pass, "10 instances; rel err grad_loss " + fmt(loss_err) + ", grad_prob " + fmt(prob_err) +
                    ", reg theta " + fmt(reg_t) + ", reg A " + fmt(reg_a) + ", shift penalty " + fmt(pen_err)};
}

// ---------------------------------------------------------------------------
// 5. Tradeoff curves on synthetic data.

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  auto ranks = [](const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
      std::size_t j = i;
      while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
      for (std::size_t k = i; k <= j; ++k) r[idx[k]] = 0.5 * static_cast<double>(i + j) + 1.0;
      i = j + 1;
    }
    return r;
  };
  const auto rx = ranks(x), ry = ranks(y);
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += rx[i] / n;
    my += ry[i] / n;
  }
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

Outcome tradeoff() {
  constexpr int kSeeds = 5;
  std::vector<Dataset> data;
  std::vector<double> base(kSeeds);
  TrainerConfig cfg;
  for (int s = 0; s < kSeeds; ++s) {
    data.push_back(synth_biased(static_cast<std::uint64_t>(s + 1), 2000, 5, 0.4));
    cfg.seed = static_cast<std::uint64_t>(s + 1);
    cfg.lambda = 0.0;
    base[static_cast<std::size_t>(s)] = train(data.back(), cfg).final().dpv_train;
  }
  bool pass = true;
  std::string detail;
  for (auto kind : {DivergenceKind::KL, DivergenceKind::ChiSquared, DivergenceKind::ReverseKL,
                    DivergenceKind::JensenShannon, DivergenceKind::SquaredHellinger}) {
    cfg.divergence = DivergenceSpec(kind);
    const auto grid = default_lambda_grid(cfg.divergence);
    std::vector<double> mean(grid.size(), 0.0);
    for (int s = 0; s < kSeeds; ++s) {
      cfg.seed = static_cast<std::uint64_t>(s + 1);
      for (std::size_t g = 0; g < grid.size(); ++g) {
        double dpv = base[static_cast<std::size_t>(s)];
        if (grid[g] > 0.0) {
          cfg.lambda = grid[g];
          dpv = train(data[static_cast<std::size_t>(s)], cfg).final().dpv_train;
        }
        mean[g] += dpv / kSeeds;
      }
    }
    const double rho = spearman(grid, mean);
    const bool ok = rho <= -0.9 && mean.back() <= 0.05 && mean.front() >= 0.25;
    pass = pass && ok;
    detail += to_token(cfg.divergence) + "(rho " + fmt(rho) + ", dpv0 " + fmt(mean.front()) + ", dpv_max " +
              fmt(mean.back()) + (ok ? ")" : " FAIL)") + " ";
  }
  return {pass, detail};
}

// ---------------------------------------------------------------------------
// 6. Batch-size robustness.

Outcome batch_sizes() {
  constexpr int kSeeds = 5;
  TrainerConfig cfg;
  const auto grid = default_lambda_grid(cfg.divergence);
  const std::vector<double> lambdas{grid[5], grid.back()};
  double worst = 0.0;
  std::string detail;
  for (double lambda : lambdas) {
    std::vector<double> mean(3, 0.0);
    for (int s = 0; s < kSeeds; ++s) {
      const auto data = synth_biased(static_cast<std::uint64_t>(s + 1), 2000, 5, 0.4);
      const std::size_t sizes[3] = {1, 8, data.size()};
      for (int b = 0; b < 3; ++b) {
        cfg.seed = static_cast<std::uint64_t>(s + 1);
        cfg.lambda = lambda;
        cfg.batch_size = sizes[b];
        mean[static_cast<std::size_t>(b)] += train(data, cfg).final().dpv_train / kSeeds;
      }
    }
    const double spread = *std::max_element(mean.begin(), mean.end()) - *std::min_element(mean.begin(), mean.end());
    worst = std::max(worst, spread);
    detail += "lambda " + fmt(lambda) + ": dpv b=1 " + fmt(mean[0]) + ", b=8 " + fmt(mean[1]) + ", b=n " +
              fmt(mean[2]) + "; ";
  }
  return {worst <= 0.05, detail + "max spread " + fmt(worst)};
}

// ---------------------------------------------------------------------------
// 7. Clamped worst case against every vertex of the box.

Outcome corner_oracle() {
  std::map<std::string, std::size_t> mismatches, monotone_mismatches, monotone_total;
  double worst = 0.0;
  std::size_t total = 0;
  for (int draw = 0; draw < 1000; ++draw) {
    const auto seed = static_cast<std::uint64_t>(draw + 1);
    const auto data = oracle::random_dataset(seed, 12, 2, 2, 2);
    const auto params = oracle::random_params(Architecture::linear(), 2, 2, seed + 5000, 1.0);
    const auto priors = group_priors(data);
    const auto mq = oracle::naive_measures(params, data);
    for (auto kind : {DivergenceKind::KL, DivergenceKind::ChiSquared}) {
      const DivergenceSpec spec(kind);
      for (double delta : {0.01, 0.05, 0.1}) {
        ++total;
        const double got = robust_objective_linf(spec, params, data, priors, delta);
        const double want = oracle::corner_max(spec, mq.p, mq.q, delta);
        // Relative above 1: a floored reference gives values near 1e10.
        const double err = std::abs(got - want) / std::max(1.0, std::abs(want));
        worst = std::max(worst, err);
        const bool monotone = oracle::monotone_on_box(spec, mq.p, mq.q, delta);
        monotone_total[to_token(spec)] += monotone;
        if (err > 1e-10) {
          ++mismatches[to_token(spec)];
          monotone_mismatches[to_token(spec)] += monotone;
        }
      }
    }
  }
  std::size_t bad = 0;
  std::string detail;
  for (const char* k : {"kl", "chi2"}) {
    bad += mismatches[k];
    detail += std::string(k) + ": " + std::to_string(mismatches[k]) + "/3000 mismatches (" +
              std::to_string(monotone_mismatches[k]) + " among " + std::to_string(monotone_total[k]) +
              " monotone boxes); ";
  }
  return {bad == 0, detail + "max scaled error " + fmt(worst)};
}

// ---------------------------------------------------------------------------
// 8. Linearized worst case against sampled perturbations.

Outcome taylor_fidelity() {
  double worst_ratio = std::numeric_limits<double>::infinity();
  std::string detail;
  std::mt19937_64 gen(808);
  for (auto kind : {DivergenceKind::KL, DivergenceKind::ChiSquared, DivergenceKind::JensenShannon,
                    DivergenceKind::SquaredHellinger, DivergenceKind::ReverseKL}) {
    const DivergenceSpec spec(kind);
    const auto data = oracle::random_dataset(17, 20, 3, 2, 2);
    const auto params = oracle::random_params(Architecture::linear(), 3, 2, 18, 1.0);
    const auto priors = group_priors(data);
    const auto mq = oracle::naive_measures(params, data);
    for (auto pn : {PNorm::Two, PNorm::Inf}) {
      RobustConfig cfg;
      cfg.lambda = 1.0;
      cfg.p_norm = pn;
      double err[2];
      const double deltas[2] = {1e-2, 1e-3};
      for (int i = 0; i < 2; ++i) {
        cfg.delta = deltas[i];
        const double linear = shift_penalty(spec, params, data, priors, cfg).value;
        const double sampled = oracle::sampled_worst_shift(spec, mq.p, mq.q, deltas[i], pn == PNorm::Inf, gen);
        err[i] = std::abs(linear - sampled);
      }
      const double ratio = err[0] / err[1];
      worst_ratio = std::min(worst_ratio, ratio);
      detail += to_token(spec) + "/" + to_token(pn) + " " + fmt(ratio) + " ";
    }
  }
  return {worst_ratio >= 50.0, "error ratios " + detail + "(min " + fmt(worst_ratio) + ")"};
}

// ---------------------------------------------------------------------------
// 9. Robust training under a flipped sensitive attribute.

Outcome shift_direction() {
  std::size_t wins = 0;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto data = synth_biased(seed, 2500, 5, 0.4);
    const auto [train_clean, test] = split(data, 0.2, seed);
    const auto shifted = flip_sensitive(train_clean, 0.2, seed);
    RobustConfig cfg;
    cfg.seed = seed;
    cfg.delta = 0.1;
    const MatchOptions opts;
    const auto ferm = match_accuracy(Method::Ferm, shifted, &test, cfg, opts);
    const auto gn = match_accuracy(Method::DroGradNorm, shifted, &test, cfg, opts);
    const auto lf = match_accuracy(Method::DroLinf, shifted, &test, cfg, opts);
    const bool matched = ferm.reached && gn.reached && lf.reached;
    const bool win = matched && gn.dpv_test <= ferm.dpv_test && lf.dpv_test <= ferm.dpv_test;
    wins += win;
    detail += "seed " + std::to_string(seed) + " dpv ferm " + fmt(ferm.dpv_test) + " gradnorm " +
              fmt(gn.dpv_test) + " linf " + fmt(lf.dpv_test) + (matched ? "" : " (unmatched)") +
              (win ? " win; " : " loss; ");
  }
  return {wins >= 4, std::to_string(wins) + "/5 seeds; " + detail};
}

// ---------------------------------------------------------------------------
// 10. CLI determinism.

int run_cli(const std::string& args) {
  const std::string cmd = std::string(FFERM_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome cli_determinism() {
  const fs::path root = fs::temp_directory_path() / "fferm_acceptance_cli";
  fs::remove_all(root);
  fs::create_directories(root);
  const std::string data = (root / "data" / "synth.csv").string();
  const std::string common = "--data " + data + " --features x0,x1,x2,x3 --label label --groups group --seed 7";
  const std::vector<std::pair<std::string, std::string>> runs{
      {"synth", "synth --n 400 --d 4 --bias 0.4 --seed 7"},
      {"train", "train " + common + " --lambda 10 --epochs 50 --warmup 10 --eta-theta 0.001 --eval-data " + data},
      {"gradnorm", "train " + common + " --robust gradnorm --delta 0.1 --lambda 5 --epochs 30 --warmup 5"},
      {"linf", "train " + common + " --robust linf --delta 0.1 --lambda 5 --epochs 30 --warmup 5"},
      {"sweep", "sweep " + common + " --div kl,js --grid 3 --epochs 20 --warmup 5"},
      {"shift", "shift " + common + " --flip-fractions 0,0.2 --epochs 10 --warmup 2 --target 0.6"},
  };
  std::size_t files = 0;
  std::string failed;
  for (int rep = 0; rep < 2; ++rep) {
    for (const auto& [name, args] : runs) {
      const std::string out = (root / (name == "synth" ? std::string("data") : name + std::to_string(rep))).string();
      if (name == "synth" && rep == 1) {
        const int code = run_cli(args + " --out-dir " + (root / "data2").string());
        if (code != 0 || slurp(root / "data2" / "synth.csv") != slurp(data)) failed += "synth ";
        ++files;
        continue;
      }
      const int code = run_cli(args + " --out-dir " + out);
      if (code != 0 && code != 4) failed += name + "(exit " + std::to_string(code) + ") ";
    }
  }
  for (const auto& [name, args] : runs) {
    if (name == "synth") continue;
    for (const auto& entry : fs::directory_iterator(root / (name + "0"))) {
      if (entry.path().extension() != ".csv") continue;
      ++files;
      if (slurp(entry.path()) != slurp(root / (name + "1") / entry.path().filename())) {
        failed += name + "/" + entry.path().filename().string() + " ";
      }
    }
  }
  fs::remove_all(root);
  const bool pass = failed.empty() && files >= 7;
  return {pass, std::to_string(files) + " CSV files compared across repeated runs" +
                    (failed.empty() ? std::string() : "; differing: " + failed)};
}

struct Criterion {
  int id;
  const char* name;
  double budget_seconds;  // 0: no runtime bound
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all{
      {1, "conjugate oracle suite", 5, conjugate_suite},
      {2, "variational equals direct", 5, variational_suite},
      {3, "unbiasedness by enumeration", 10, unbiasedness},
      {4, "gradient checks", 30, gradient_checks},
      {5, "tradeoff reproduction", 900, tradeoff},
      {6, "batch-size robustness", 900, batch_sizes},
      {7, "linf worst case vs vertex enumeration", 5, corner_oracle},
      {8, "Taylor fidelity", 60, taylor_fidelity},
      {9, "shift experiment direction", 1200, shift_direction},
      {10, "CLI determinism", 0, cli_determinism},
  };
  int only = 0;
  if (argc > 1) only = std::atoi(argv[1]);
  if (argc > 2 || only < 0 || only > 10) {
    std::fprintf(stderr, "usage: %s [criterion 1-10]\n", argv[0]);
    return 2;
  }
  set_warning_sink([](std::string_view) {});
  bool all_pass = true;
  for (const auto& c : all) {
    if (only != 0 && c.id != only) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = c.budget_seconds == 0 || secs < c.budget_seconds;
    const bool pass = o.pass && in_time;
    all_pass = all_pass && pass;
    std::printf("criterion %d [%s]: %s (%.1f s%s) %s\n", c.id, c.name, pass ? "PASS" : "FAIL", secs,
                in_time ? "" : ", over budget", o.detail.c_str());
    std::fflush(stdout);
  }
  return all_pass ? 0 : 1;
}
