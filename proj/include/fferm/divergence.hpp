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

#ifndef FFERM_DIVERGENCE_HPP_
#define FFERM_DIVERGENCE_HPP_

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fferm/error.hpp"

namespace fferm {

/// Ratios p/q are computed with q replaced by max(q, kProbFloor).
inline constexpr double kProbFloor = 1e-12;
/// Open dual domains are shrunk by this much when projecting.
inline constexpr double kDomainMargin = 1e-9;

enum class DivergenceKind {
  ChiSquared,
  KL,
  ReverseKL,
  TotalVariation,
  JensenShannon,
  SquaredHellinger,
  Alpha,
};

/// One of the supported f-divergences. Generators are normalized so that
/// f(1) = 0:
///
///   chi2       f(t) = (t-1)^2                   f*(a) = a + a^2/4
///   kl         f(t) = t ln t                    f*(a) = exp(a-1)
///   reverse-kl f(t) = -ln t                     f*(a) = -1 - ln(-a),   a < 0
///   tv         f(t) = |t-1|/2                   f*(a) = a,             |a| <= 1/2
///   js         f(t) = -(t+1) ln((t+1)/2) + t ln t
///                                               f*(a) = -ln(2 - e^a),  a < ln 2
///   hellinger  f(t) = 2(1 - sqrt t)             f*(a) = -1/a - 2,      a < 0
///   alpha:<c>  f(t) = (t^c - c t - (1-c)) / (c(c-1))
///                                               f*(a) = ((c-1)a+1)^(c/(c-1))/c - 1/c,
///                                                       (c-1)a + 1 > 0
///
/// Squared Hellinger is carried in the 2(1 - sqrt t) form, which differs
/// from (sqrt t - 1)^2 by the affine term (t - 1) and therefore induces the
/// same divergence between probability vectors; it is the generator whose
/// conjugate is -1/a - 2.
class DivergenceSpec {
 public:
  explicit DivergenceSpec(DivergenceKind kind, double alpha_param = 0.0)
      : kind_(kind), alpha_(alpha_param) {
    if (kind_ == DivergenceKind::Alpha &&
        (!std::isfinite(alpha_) || alpha_ == 0.0 || alpha_ == 1.0)) {
      fail(ErrorCode::InvalidAlphaParam,
           "alpha divergence parameter must be finite and not in {0, 1}");
    }
  }

  DivergenceKind kind() const noexcept { return kind_; }
  double alpha_param() const noexcept { return alpha_; }

  /// Everything except total variation has a smooth generator.
  bool differentiable() const noexcept { return kind_ != DivergenceKind::TotalVariation; }

  friend bool operator==(const DivergenceSpec&, const DivergenceSpec&) = default;

 private:
  DivergenceKind kind_;
  double alpha_;
};

inline std::string to_token(const DivergenceSpec& spec) {
  switch (spec.kind()) {
    case DivergenceKind::ChiSquared: return "chi2";
    case DivergenceKind::KL: return "kl";
    case DivergenceKind::ReverseKL: return "reverse-kl";
    case DivergenceKind::TotalVariation: return "tv";
    case DivergenceKind::JensenShannon: return "js";
    case DivergenceKind::SquaredHellinger: return "hellinger";
    case DivergenceKind::Alpha: {
      char buf[64];
      auto res = std::to_chars(buf, buf + sizeof(buf), spec.alpha_param());
      return "alpha:" + std::string(buf, res.ptr);
    }
  }
  return "unknown";
}

/// Parses chi2 | kl | reverse-kl | tv | js | hellinger | alpha:<a>.
inline DivergenceSpec parse_divergence(std::string_view token) {
  if (token == "chi2") return DivergenceSpec(DivergenceKind::ChiSquared);
  if (token == "kl") return DivergenceSpec(DivergenceKind::KL);
  if (token == "reverse-kl") return DivergenceSpec(DivergenceKind::ReverseKL);
  if (token == "tv") return DivergenceSpec(DivergenceKind::TotalVariation);
  if (token == "js") return DivergenceSpec(DivergenceKind::JensenShannon);
  if (token == "hellinger") return DivergenceSpec(DivergenceKind::SquaredHellinger);
  constexpr std::string_view prefix = "alpha:";
  if (token.substr(0, prefix.size()) == prefix) {
    const std::string_view rest = token.substr(prefix.size());
    double a = 0.0;
    auto res = std::from_chars(rest.data(), rest.data() + rest.size(), a);
    if (res.ec != std::errc() || res.ptr != rest.data() + rest.size() || rest.empty()) {
      fail(ErrorCode::ParseError, "bad alpha parameter in divergence token '" +
                                      std::string(token) + "'");
    }
    return DivergenceSpec(DivergenceKind::Alpha, a);
  }
  fail(ErrorCode::ParseError, "unknown divergence token '" + std::string(token) + "'");
}

/// Interval of admissible dual variables (the effective domain of f*).
struct DualDomain {
  double lower = -std::numeric_limits<double>::infinity();
  double upper = std::numeric_limits<double>::infinity();
  bool open_lower = true;
  bool open_upper = true;

  bool contains(double a) const noexcept {
    if (!std::isfinite(a)) return false;
    const bool lower_ok = open_lower ? a > lower : a >= lower;
    const bool upper_ok = open_upper ? a < upper : a <= upper;
    return lower_ok && upper_ok;
  }

  bool interior(double a) const noexcept { return std::isfinite(a) && a > lower && a < upper; }

  /// Clamp into the domain; open finite bounds are pulled in by kDomainMargin.
  double project(double a) const noexcept {
    if (std::isnan(a)) return a;
    const double lo = std::isfinite(lower) ? (open_lower ? lower + kDomainMargin : lower) : lower;
    const double hi = std::isfinite(upper) ? (open_upper ? upper - kDomainMargin : upper) : upper;
    return std::clamp(a, lo, hi);
  }
};

inline DualDomain dual_domain(const DivergenceSpec& spec) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  switch (spec.kind()) {
    case DivergenceKind::ChiSquared:
    case DivergenceKind::KL:
      return {};
    case DivergenceKind::ReverseKL:
    case DivergenceKind::SquaredHellinger:
      return {-inf, 0.0, true, true};
    case DivergenceKind::TotalVariation:
      return {-0.5, 0.5, false, false};
    case DivergenceKind::JensenShannon:
      return {-inf, std::numbers::ln2, true, true};
    case DivergenceKind::Alpha: {
      // (c - 1) a + 1 > 0
      const double c = spec.alpha_param();
      if (c > 1.0) return {-1.0 / (c - 1.0), inf, true, true};
      return {-inf, 1.0 / (1.0 - c), true, true};
    }
  }
  return {};
}

namespace detail {

inline void require_positive(double t, std::string_view what) {
  if (!(t > 0.0)) {
    fail(ErrorCode::NonPositiveArgument,
         std::string(what) + " requires t > 0, got " + std::to_string(t));
  }
}

inline void require_nonnegative(double t, std::string_view what) {
  if (!(t >= 0.0)) {
    fail(ErrorCode::NonPositiveArgument,
         std::string(what) + " requires t >= 0, got " + std::to_string(t));
  }
}

inline void require_in_domain(const DivergenceSpec& spec, double a) {
  const DualDomain dom = dual_domain(spec);
  if (!dom.contains(a)) {
    std::string bound;
    if (!(dom.open_lower ? a > dom.lower : a >= dom.lower)) {
      bound = (dom.open_lower ? "a > " : "a >= ") + std::to_string(dom.lower);
    } else {
      bound = (dom.open_upper ? "a < " : "a <= ") + std::to_string(dom.upper);
    }
    fail(ErrorCode::OutOfDualDomain, to_token(spec) + " conjugate needs " + bound +
                                         ", got a = " + std::to_string(a));
  }
}

inline void require_interior(const DivergenceSpec& spec, double a) {
  if (!spec.differentiable()) {
    fail(ErrorCode::NonDifferentiable, "total variation conjugate is not differentiable");
  }
  require_in_domain(spec, a);
}

/// f(0) as the limit t -> 0+, or nullopt when it diverges.
inline std::optional<double> f_at_zero(const DivergenceSpec& spec) {
  switch (spec.kind()) {
    case DivergenceKind::ChiSquared: return 1.0;
    case DivergenceKind::KL: return 0.0;
    case DivergenceKind::ReverseKL: return std::nullopt;
    case DivergenceKind::TotalVariation: return 0.5;
    case DivergenceKind::JensenShannon: return std::numbers::ln2;
    case DivergenceKind::SquaredHellinger: return 2.0;
    case DivergenceKind::Alpha:
      if (spec.alpha_param() > 0.0) return 1.0 / spec.alpha_param();
      return std::nullopt;
  }
  return std::nullopt;
}

// Kinds for which p_j > 0 with q_j = 0 is rejected instead of floored.
inline bool rejects_zero_reference(const DivergenceSpec& spec) {
  switch (spec.kind()) {
    case DivergenceKind::KL:
    case DivergenceKind::ReverseKL:
    case DivergenceKind::JensenShannon:
      return true;
    case DivergenceKind::Alpha:
      return spec.alpha_param() <= 0.0;
    default:
      return false;
  }
}

}  // namespace detail

/// Generator f(t). Kinds finite at zero (chi2, tv, hellinger, alpha with
/// c > 0) accept t = 0.
inline double f_value(const DivergenceSpec& spec, double t) {
  switch (spec.kind()) {
    case DivergenceKind::ChiSquared:
      detail::require_nonnegative(t, "chi2 f");
      return (t - 1.0) * (t - 1.0);
    case DivergenceKind::KL:
      detail::require_positive(t, "kl f");
      return t * std::log(t);
    case DivergenceKind::ReverseKL:
      detail::require_positive(t, "reverse-kl f");
      return -std::log(t);
    case DivergenceKind::TotalVariation:
      detail::require_nonnegative(t, "tv f");
      return 0.5 * std::abs(t - 1.0);
    case DivergenceKind::JensenShannon:
      detail::require_positive(t, "js f");
      return -(t + 1.0) * std::log((t + 1.0) / 2.0) + t * std::log(t);
    case DivergenceKind::SquaredHellinger:
      detail::require_nonnegative(t, "hellinger f");
      return 2.0 * (1.0 - std::sqrt(t));
    case DivergenceKind::Alpha: {
      const double c = spec.alpha_param();
      if (c > 0.0) {
        detail::require_nonnegative(t, "alpha f");
      } else {
        detail::require_positive(t, "alpha f");
      }
      return (std::pow(t, c) - c * t - (1.0 - c)) / (c * (c - 1.0));
    }
  }
  return 0.0;
}

inline double f_prime(const DivergenceSpec& spec, double t) {
  if (!spec.differentiable()) {
    fail(ErrorCode::NonDifferentiable, "total variation generator is not differentiable at t = 1");
  }
  detail::require_positive(t, "f'");
  switch (spec.kind()) {
    case DivergenceKind::ChiSquared: return 2.0 * (t - 1.0);
    case DivergenceKind::KL: return std::log(t) + 1.0;
    case DivergenceKind::ReverseKL: return -1.0 / t;
    case DivergenceKind::JensenShannon: return std::log(2.0 * t / (t + 1.0));
    case DivergenceKind::SquaredHellinger: return -1.0 / std::sqrt(t);
    case DivergenceKind::Alpha: {
      const double c = spec.alpha_param();
      return (std::pow(t, c - 1.0) - 1.0) / (c - 1.0);
    }
    case DivergenceKind::TotalVariation: break;
  }
  return 0.0;
}

/// Convex conjugate f*(a) = sup_t { a t - f(t) }.
inline double conjugate(const DivergenceSpec& spec, double a) {
  detail::require_in_domain(spec, a);
  switch (spec.kind()) {
    case DivergenceKind::ChiSquared: return a + a * a / 4.0;
    case DivergenceKind::KL: return std::exp(a - 1.0);
    case DivergenceKind::ReverseKL: return -1.0 - std::log(-a);
    case DivergenceKind::TotalVariation: return a;
    case DivergenceKind::JensenShannon: return -std::log(2.0 - std::exp(a));
    case DivergenceKind::SquaredHellinger: return -1.0 / a - 2.0;
    case DivergenceKind::Alpha: {
      const double c = spec.alpha_param();
      return std::pow((c - 1.0) * a + 1.0, c / (c - 1.0)) / c - 1.0 / c;
    }
  }
  return 0.0;
}

/// (f*)'(a): the primal ratio t attaining the supremum.
inline double conjugate_grad(const DivergenceSpec& spec, double a) {
  detail::require_interior(spec, a);
  switch (spec.kind()) {
    case DivergenceKind::ChiSquared: return 1.0 + a / 2.0;
    case DivergenceKind::KL: return std::exp(a - 1.0);
    case DivergenceKind::ReverseKL: return -1.0 / a;
    case DivergenceKind::JensenShannon: {
      const double e = std::exp(a);
      return e / (2.0 - e);
    }
    case DivergenceKind::SquaredHellinger: return 1.0 / (a * a);
    case DivergenceKind::Alpha: {
      const double c = spec.alpha_param();
      return std::pow((c - 1.0) * a + 1.0, 1.0 / (c - 1.0));
    }
    case DivergenceKind::TotalVariation: break;
  }
  return 0.0;
}

inline double conjugate_hess(const DivergenceSpec& spec, double a) {
  detail::require_interior(spec, a);
  switch (spec.kind()) {
    case DivergenceKind::ChiSquared: return 0.5;
    case DivergenceKind::KL: return std::exp(a - 1.0);
    case DivergenceKind::ReverseKL: return 1.0 / (a * a);
    case DivergenceKind::JensenShannon: {
      const double e = std::exp(a);
      return 2.0 * e / ((2.0 - e) * (2.0 - e));
    }
    case DivergenceKind::SquaredHellinger: return -2.0 / (a * a * a);
    case DivergenceKind::Alpha: {
      const double c = spec.alpha_param();
      return std::pow((c - 1.0) * a + 1.0, (2.0 - c) / (c - 1.0));
    }
    case DivergenceKind::TotalVariation: break;
  }
  return 0.0;
}

/// A probability vector: nonnegative entries summing to one within 1e-9.
class ProbVector {
 public:
  explicit ProbVector(std::vector<double> entries) : entries_(std::move(entries)) {
    double sum = 0.0;
    for (double v : entries_) {
      if (!(v >= 0.0) || !std::isfinite(v)) {
        fail(ErrorCode::InvalidArgument, "probability entries must be finite and >= 0");
      }
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
      fail(ErrorCode::InvalidArgument, "probability entries sum to " + std::to_string(sum));
    }
  }

  std::span<const double> values() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }
  double operator[](std::size_t i) const { return entries_[i]; }

 private:
  std::vector<double> entries_;
};

namespace detail {

struct RatioTerm {
  bool skip = false;  // p_j = q_j = 0 contributes nothing
  double q = 0.0;     // possibly floored
  double t = 0.0;
};

inline RatioTerm ratio_term(const DivergenceSpec& spec, double p, double q, std::size_t j) {
  if (!(p >= 0.0) || !(q >= 0.0) || !std::isfinite(p) || !std::isfinite(q)) {
    fail(ErrorCode::InvalidArgument, "measure entries must be finite and >= 0 (index " +
                                         std::to_string(j) + ")");
  }
  RatioTerm term;
  if (q < kProbFloor) {
    if (p == 0.0) {
      term.skip = true;
      return term;
    }
    if (q == 0.0 && rejects_zero_reference(spec)) {
      fail(ErrorCode::AbsoluteContinuityViolation,
           "p_" + std::to_string(j) + " > 0 while q_" + std::to_string(j) + " = 0 under " +
               to_token(spec));
    }
    warn("reference probability below floor; flooring to 1e-12");
    q = kProbFloor;
  }
  term.q = q;
  term.t = p / q;
  return term;
}

inline double zero_ratio_value(const DivergenceSpec& spec, std::size_t j) {
  auto f0 = f_at_zero(spec);
  if (!f0) {
    fail(ErrorCode::AbsoluteContinuityViolation,
         "p_" + std::to_string(j) + " = 0 while q_" + std::to_string(j) + " > 0 under " +
             to_token(spec));
  }
  return *f0;
}

inline void require_same_length(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) {
    fail(ErrorCode::LengthMismatch, "p has " + std::to_string(p.size()) + " entries, q has " +
                                        std::to_string(q.size()));
  }
}

}  // namespace detail

/// D_f(p || q) = sum_j q_j f(p_j / q_j). Accepts unnormalized nonnegative
/// measures as well as probability vectors.
inline double divergence_direct(const DivergenceSpec& spec, std::span<const double> p,
                                std::span<const double> q) {
  detail::require_same_length(p, q);
  double sum = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j) {
    const auto term = detail::ratio_term(spec, p[j], q[j], j);
    if (term.skip) continue;
    const double f = term.t == 0.0 ? detail::zero_ratio_value(spec, j) : f_value(spec, term.t);
    sum += term.q * f;
  }
  return sum;
}

inline double divergence_direct(const DivergenceSpec& spec, const ProbVector& p,
                                const ProbVector& q) {
  return divergence_direct(spec, p.values(), q.values());
}

/// Maximizer of sum_j a_j p_j - q_j f*(a_j): a_j = f'(p_j / q_j).
inline std::vector<double> optimal_dual(const DivergenceSpec& spec, std::span<const double> p,
                                        std::span<const double> q) {
  if (!spec.differentiable()) {
    fail(ErrorCode::NonDifferentiable, "total variation has no unique optimal dual");
  }
  detail::require_same_length(p, q);
  std::vector<double> a(p.size());
  for (std::size_t j = 0; j < p.size(); ++j) {
    const auto term = detail::ratio_term(spec, p[j], q[j], j);
    a[j] = f_prime(spec, term.skip ? 1.0 : term.t);
  }
  return a;
}

inline std::vector<double> optimal_dual(const DivergenceSpec& spec, const ProbVector& p,
                                        const ProbVector& q) {
  return optimal_dual(spec, p.values(), q.values());
}

/// sum_j a*_j p_j - q_j f*(a*_j) at the optimal dual. Total variation uses
/// the subgradient a_j = sign(p_j - q_j) / 2 with sign(0) = 0. A zero ratio
/// takes the supremum's limit value q_j f(0).
inline double divergence_variational(const DivergenceSpec& spec, std::span<const double> p,
                                     std::span<const double> q) {
  detail::require_same_length(p, q);
  double sum = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j) {
    const auto term = detail::ratio_term(spec, p[j], q[j], j);
    if (term.skip) continue;
    if (term.t == 0.0) {
      sum += term.q * detail::zero_ratio_value(spec, j);
      continue;
    }
    const double pj = p[j];
    double a = 0.0;
    if (spec.kind() == DivergenceKind::TotalVariation) {
      a = pj > term.q ? 0.5 : (pj < term.q ? -0.5 : 0.0);
    } else {
      a = f_prime(spec, term.t);
    }
    sum += a * pj - term.q * conjugate(spec, a);
  }
  return sum;
}

inline double divergence_variational(const DivergenceSpec& spec, const ProbVector& p,
                                     const ProbVector& q) {
  return divergence_variational(spec, p.values(), q.values());
}

}  // namespace fferm

#endif  // FFERM_DIVERGENCE_HPP_
