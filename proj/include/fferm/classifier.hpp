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

#ifndef FFERM_CLASSIFIER_HPP_
#define FFERM_CLASSIFIER_HPP_

#include <Eigen/Dense>

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "fferm/dataset.hpp"
#include "fferm/error.hpp"
#include "fferm/rng.hpp"

namespace fferm {

struct Architecture {
  enum class Kind { Linear, OneHidden };

  Kind kind = Kind::Linear;
  std::size_t width = 0;  // hidden units, OneHidden only

  static Architecture linear() { return {Kind::Linear, 0}; }
  static Architecture one_hidden(std::size_t width) {
    if (width == 0) fail(ErrorCode::InvalidArgument, "hidden width must be positive");
    return {Kind::OneHidden, width};
  }

  friend bool operator==(const Architecture&, const Architecture&) = default;
};

/// Softmax classifier parameters as one flat vector. Layout is layer-major,
/// each layer being its weight matrix (row-major, one row per output unit)
/// followed by its bias:
///
///   Linear:    W (m x d), b (m)
///   OneHidden: W1 (h x d), b1 (h), W2 (m x h), b2 (m)    with tanh hidden units
class ModelParams {
 public:
  ModelParams(Architecture arch, std::size_t dims, std::size_t classes)
      : arch_(arch), dims_(dims), classes_(classes) {
    if (dims == 0 || classes < 2) {
      fail(ErrorCode::InvalidArgument, "need d >= 1 features and m >= 2 classes");
    }
    if (arch.kind == Architecture::Kind::OneHidden && arch.width == 0) {
      fail(ErrorCode::InvalidArgument, "hidden width must be positive");
    }
    weights_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(param_count(arch, dims, classes)));
  }

  /// Linear models start at zero. Hidden-layer models draw every entry
  /// uniformly from [-1/sqrt(fan_in), 1/sqrt(fan_in)].
  static ModelParams initialized(Architecture arch, std::size_t dims, std::size_t classes,
                                 std::uint64_t seed) {
    ModelParams p(arch, dims, classes);
    if (arch.kind == Architecture::Kind::OneHidden) {
      Rng rng(seed);
      const std::size_t h = arch.width;
      const double r1 = 1.0 / std::sqrt(static_cast<double>(dims));
      const double r2 = 1.0 / std::sqrt(static_cast<double>(h));
      const std::size_t first = h * dims + h;
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double r = i < first ? r1 : r2;
        p.weights_(static_cast<Eigen::Index>(i)) = rng.uniform(-r, r);
      }
    }
    return p;
  }

  static std::size_t param_count(Architecture arch, std::size_t dims, std::size_t classes) {
    if (arch.kind == Architecture::Kind::Linear) return classes * dims + classes;
    return arch.width * dims + arch.width + classes * arch.width + classes;
  }

  const Architecture& arch() const noexcept { return arch_; }
  std::size_t dims() const noexcept { return dims_; }
  std::size_t classes() const noexcept { return classes_; }
  std::size_t size() const noexcept { return static_cast<std::size_t>(weights_.size()); }

  Eigen::VectorXd& weights() noexcept { return weights_; }
  const Eigen::VectorXd& weights() const noexcept { return weights_; }

  /// Text header `ferm-model v1 <arch> <d> <m> [<width>]` followed by the
  /// flat weights as little-endian 64-bit floats.
  void save(std::ostream& out) const {
    out << "ferm-model v1 " << (arch_.kind == Architecture::Kind::Linear ? "linear" : "hidden")
        << ' ' << dims_ << ' ' << classes_;
    if (arch_.kind == Architecture::Kind::OneHidden) out << ' ' << arch_.width;
    out << '\n';
    for (Eigen::Index i = 0; i < weights_.size(); ++i) {
      std::uint64_t bits = std::bit_cast<std::uint64_t>(weights_(i));
      unsigned char bytes[8];
      for (int b = 0; b < 8; ++b) bytes[b] = static_cast<unsigned char>(bits >> (8 * b));
      out.write(reinterpret_cast<const char*>(bytes), 8);
    }
  }

  static ModelParams load(std::istream& in) {
    std::string header;
    if (!std::getline(in, header)) fail(ErrorCode::ParseError, "empty model file");
    std::istringstream hs(header);
    std::string magic, version, arch_token;
    std::size_t d = 0, m = 0, width = 0;
    hs >> magic >> version >> arch_token >> d >> m;
    if (magic != "ferm-model" || version != "v1" || !hs) {
      fail(ErrorCode::ParseError, "not a ferm-model v1 checkpoint");
    }
    Architecture arch;
    if (arch_token == "linear") {
      arch = Architecture::linear();
    } else if (arch_token == "hidden") {
      hs >> width;
      if (!hs) fail(ErrorCode::ParseError, "hidden checkpoint without width");
      arch = Architecture::one_hidden(width);
    } else {
      fail(ErrorCode::ParseError, "unknown architecture '" + arch_token + "'");
    }
    ModelParams p(arch, d, m);
    for (Eigen::Index i = 0; i < p.weights_.size(); ++i) {
      unsigned char bytes[8];
      if (!in.read(reinterpret_cast<char*>(bytes), 8)) {
        fail(ErrorCode::ParseError, "checkpoint truncated");
      }
      std::uint64_t bits = 0;
      for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[b]) << (8 * b);
      p.weights_(i) = std::bit_cast<double>(bits);
    }
    if (!p.weights_.allFinite()) fail(ErrorCode::ParseError, "checkpoint has non-finite weights");
    return p;
  }

 private:
  Architecture arch_;
  std::size_t dims_;
  std::size_t classes_;
  Eigen::VectorXd weights_;
};

struct Prediction {
  Eigen::VectorXd probs;
  std::size_t label = 0;
};

/// Index of the largest entry; ties go to the lowest index.
inline std::size_t argmax(const Eigen::VectorXd& v) {
  std::size_t best = 0;
  for (Eigen::Index j = 1; j < v.size(); ++j) {
    if (v(j) > v(static_cast<Eigen::Index>(best))) best = static_cast<std::size_t>(j);
  }
  return best;
}

/// Reusable forward/backward workspace bound to one parameter vector. It
/// caches the activations of the last forward() so gradients can be
/// accumulated without reallocating; not shareable across threads.
class Evaluator {
 public:
  using Features = Eigen::Ref<const Eigen::RowVectorXd>;

  explicit Evaluator(const ModelParams& params)
      : params_(&params),
        m_(static_cast<Eigen::Index>(params.classes())),
        d_(static_cast<Eigen::Index>(params.dims())),
        h_(static_cast<Eigen::Index>(params.arch().width)),
        probs_(m_),
        dlogits_(m_) {
    if (hidden()) {
      hidden_.resize(h_);
      dhidden_.resize(h_);
    }
  }

  const ModelParams& params() const noexcept { return *params_; }

  /// Softmax probabilities F(x; theta), computed with max-logit subtraction.
  const Eigen::VectorXd& forward(const Features& x) {
    if (x.size() != d_) {
      fail(ErrorCode::DimensionMismatch, "expected " + std::to_string(d_) + " features, got " +
                                             std::to_string(x.size()));
    }
    const double* w = params_->weights().data();
    if (!hidden()) {
      Eigen::Map<const RowMajor> W(w, m_, d_);
      Eigen::Map<const Eigen::VectorXd> b(w + m_ * d_, m_);
      probs_.noalias() = W * x.transpose();
      probs_ += b;
    } else {
      Eigen::Map<const RowMajor> W1(w, h_, d_);
      Eigen::Map<const Eigen::VectorXd> b1(w + h_ * d_, h_);
      Eigen::Map<const RowMajor> W2(w + h_ * d_ + h_, m_, h_);
      Eigen::Map<const Eigen::VectorXd> b2(w + h_ * d_ + h_ + m_ * h_, m_);
      hidden_.noalias() = W1 * x.transpose();
      hidden_ = (hidden_ + b1).array().tanh().matrix();
      probs_.noalias() = W2 * hidden_;
      probs_ += b2;
    }
    const double zmax = probs_.maxCoeff();
    probs_ = (probs_.array() - zmax).exp().matrix();
    probs_ /= probs_.sum();
    return probs_;
  }

  const Eigen::VectorXd& probs() const noexcept { return probs_; }

  /// grad += scale * d(logits)/d(theta)^T dlogits, at the last forward() input x.
  void add_logit_grad(const Features& x, const Eigen::VectorXd& dlogits, double scale,
                      Eigen::VectorXd& grad) {
    double* g = grad.data();
    if (!hidden()) {
      Eigen::Map<RowMajor> gW(g, m_, d_);
      Eigen::Map<Eigen::VectorXd> gb(g + m_ * d_, m_);
      gW.noalias() += (scale * dlogits) * x;
      gb += scale * dlogits;
    } else {
      const double* w = params_->weights().data();
      Eigen::Map<const RowMajor> W2(w + h_ * d_ + h_, m_, h_);
      Eigen::Map<RowMajor> gW1(g, h_, d_);
      Eigen::Map<Eigen::VectorXd> gb1(g + h_ * d_, h_);
      Eigen::Map<RowMajor> gW2(g + h_ * d_ + h_, m_, h_);
      Eigen::Map<Eigen::VectorXd> gb2(g + h_ * d_ + h_ + m_ * h_, m_);
      gW2.noalias() += (scale * dlogits) * hidden_.transpose();
      gb2 += scale * dlogits;
      dhidden_.noalias() = W2.transpose() * dlogits;
      dhidden_ = (dhidden_.array() * (1.0 - hidden_.array().square())).matrix();
      gW1.noalias() += (scale * dhidden_) * x;
      gb1 += scale * dhidden_;
    }
  }

  /// grad += scale * d(sum_j weights_j F_j(x))/d(theta), at the last forward() input.
  void add_weighted_prob_grad(const Features& x, const Eigen::VectorXd& weights, double scale,
                              Eigen::VectorXd& grad) {
    // dF_j/dz_c = F_j (delta_jc - F_c)  =>  dz_c = F_c (w_c - <w, F>)
    const double mean = weights.dot(probs_);
    dlogits_ = (probs_.array() * (weights.array() - mean)).matrix();
    add_logit_grad(x, dlogits_, scale, grad);
  }

  /// grad += scale * d(-ln F_y(x))/d(theta), at the last forward() input.
  void add_nll_grad(const Features& x, std::size_t y, double scale, Eigen::VectorXd& grad) {
    dlogits_ = probs_;
    dlogits_(static_cast<Eigen::Index>(y)) -= 1.0;
    add_logit_grad(x, dlogits_, scale, grad);
  }

 private:
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  bool hidden() const noexcept { return params_->arch().kind == Architecture::Kind::OneHidden; }

  const ModelParams* params_;
  Eigen::Index m_, d_, h_;
  Eigen::VectorXd probs_;
  Eigen::VectorXd dlogits_;
  Eigen::VectorXd hidden_;
  Eigen::VectorXd dhidden_;
};

inline Prediction forward(const ModelParams& params, const Evaluator::Features& x) {
  Evaluator eval(params);
  Prediction pred;
  pred.probs = eval.forward(x);
  pred.label = argmax(pred.probs);
  return pred;
}

inline Prediction forward(const ModelParams& params, std::span<const double> x) {
  return forward(params, Eigen::Map<const Eigen::RowVectorXd>(
                             x.data(), static_cast<Eigen::Index>(x.size())));
}

/// Mean cross-entropy -(1/|B|) sum_i ln F_{y_i}(x_i).
inline double loss(const ModelParams& params, const Slice& batch) {
  if (batch.empty()) fail(ErrorCode::EmptyBatch, "loss over an empty batch");
  Evaluator eval(params);
  double total = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& probs = eval.forward(batch.row(i));
    total -= std::log(probs(static_cast<Eigen::Index>(batch.label(i))));
  }
  return total / static_cast<double>(batch.size());
}

inline Eigen::VectorXd grad_loss(const ModelParams& params, const Slice& batch) {
  if (batch.empty()) fail(ErrorCode::EmptyBatch, "gradient over an empty batch");
  Evaluator eval(params);
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(params.size()));
  const double scale = 1.0 / static_cast<double>(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto x = batch.row(i);
    eval.forward(x);
    eval.add_nll_grad(x, batch.label(i), scale, grad);
  }
  return grad;
}

/// Gradient of the single class probability F_j(x; theta).
inline Eigen::VectorXd grad_prob(const ModelParams& params, const Evaluator::Features& x,
                                 std::size_t j) {
  if (j >= params.classes()) {
    fail(ErrorCode::ClassIndexOutOfRange,
         "class " + std::to_string(j) + " of " + std::to_string(params.classes()));
  }
  Evaluator eval(params);
  eval.forward(x);
  Eigen::VectorXd unit = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(params.classes()));
  unit(static_cast<Eigen::Index>(j)) = 1.0;
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(params.size()));
  eval.add_weighted_prob_grad(x, unit, 1.0, grad);
  return grad;
}

inline Eigen::VectorXd grad_prob(const ModelParams& params, std::span<const double> x,
                                 std::size_t j) {
  return grad_prob(params,
                   Eigen::Map<const Eigen::RowVectorXd>(x.data(), static_cast<Eigen::Index>(x.size())),
                   j);
}

/// Hard argmax labels for every sample of a dataset.
inline std::vector<std::size_t> predict_labels(const ModelParams& params, const Dataset& data) {
  Evaluator eval(params);
  std::vector<std::size_t> out(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    out[i] = argmax(eval.forward(data.features.row(static_cast<Eigen::Index>(i))));
  }
  return out;
}

}  // namespace fferm

#endif  // FFERM_CLASSIFIER_HPP_
