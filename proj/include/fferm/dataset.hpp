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

#ifndef FFERM_DATASET_HPP_
#define FFERM_DATASET_HPP_

#include <Eigen/Dense>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fferm/error.hpp"
#include "fferm/rng.hpp"

namespace fferm {

using FeatureMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// n samples of (features, class label, sensitive group).
struct Dataset {
  FeatureMatrix features;
  std::vector<std::size_t> labels;
  std::vector<std::size_t> groups;
  std::size_t num_classes = 0;
  std::size_t num_groups = 0;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t dims() const noexcept { return static_cast<std::size_t>(features.cols()); }

  /// Shape checks plus: every group and every label occurs at least once.
  void validate() const {
    const std::size_t n = size();
    if (static_cast<std::size_t>(features.rows()) != n || groups.size() != n) {
      fail(ErrorCode::DimensionMismatch, "features, labels and groups disagree on sample count");
    }
    if (!features.allFinite()) {
      fail(ErrorCode::InvalidArgument, "features contain non-finite values");
    }
    std::vector<std::size_t> label_count(num_classes, 0);
    std::vector<std::size_t> group_count(num_groups, 0);
    for (std::size_t i = 0; i < n; ++i) {
      if (labels[i] >= num_classes) {
        fail(ErrorCode::ClassIndexOutOfRange, "label " + std::to_string(labels[i]) +
                                                  " at sample " + std::to_string(i));
      }
      if (groups[i] >= num_groups) {
        fail(ErrorCode::InvalidArgument,
             "group " + std::to_string(groups[i]) + " at sample " + std::to_string(i));
      }
      ++label_count[labels[i]];
      ++group_count[groups[i]];
    }
    for (std::size_t k = 0; k < num_groups; ++k) {
      if (group_count[k] == 0) {
        fail(ErrorCode::EmptyGroup, "group " + std::to_string(k) + " has no samples");
      }
    }
    for (std::size_t c = 0; c < num_classes; ++c) {
      if (label_count[c] == 0) {
        fail(ErrorCode::EmptyLabel, "label " + std::to_string(c) + " has no samples");
      }
    }
  }
};

/// Rows [rows...] of a dataset, copied.
inline Dataset subset(const Dataset& data, std::span<const std::size_t> rows) {
  Dataset out;
  out.num_classes = data.num_classes;
  out.num_groups = data.num_groups;
  out.features.resize(static_cast<Eigen::Index>(rows.size()), data.features.cols());
  out.labels.reserve(rows.size());
  out.groups.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.features.row(static_cast<Eigen::Index>(i)) =
        data.features.row(static_cast<Eigen::Index>(rows[i]));
    out.labels.push_back(data.labels[rows[i]]);
    out.groups.push_back(data.groups[rows[i]]);
  }
  return out;
}

/// A non-owning view of some rows of a dataset (all rows by default).
class Slice {
 public:
  explicit Slice(const Dataset& data) : data_(&data), count_(data.size()) {}
  Slice(const Dataset& data, std::span<const std::size_t> rows)
      : data_(&data), rows_(rows), explicit_(true), count_(rows.size()) {}

  const Dataset& data() const noexcept { return *data_; }
  std::size_t size() const noexcept { return count_; }
  bool empty() const noexcept { return count_ == 0; }

  std::size_t index(std::size_t i) const noexcept { return explicit_ ? rows_[i] : i; }
  std::size_t label(std::size_t i) const noexcept { return data_->labels[index(i)]; }
  std::size_t group(std::size_t i) const noexcept { return data_->groups[index(i)]; }
  auto row(std::size_t i) const noexcept {
    return data_->features.row(static_cast<Eigen::Index>(index(i)));
  }

 private:
  const Dataset* data_;
  std::span<const std::size_t> rows_;
  bool explicit_ = false;
  std::size_t count_;
};

/// Per-column z-scoring with a 1e-12 floor on the standard deviation.
struct Standardizer {
  Eigen::RowVectorXd mean;
  Eigen::RowVectorXd scale;

  static Standardizer fit(const FeatureMatrix& x) {
    Standardizer s;
    const double n = static_cast<double>(std::max<Eigen::Index>(x.rows(), 1));
    s.mean = x.colwise().sum() / n;
    s.scale.resize(x.cols());
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      const double var = (x.col(c).array() - s.mean(c)).square().sum() / n;
      s.scale(c) = std::max(std::sqrt(var), 1e-12);
    }
    return s;
  }

  void apply(FeatureMatrix& x) const {
    if (x.cols() != mean.size()) {
      fail(ErrorCode::DimensionMismatch, "standardizer fitted on " +
                                             std::to_string(mean.size()) + " columns, got " +
                                             std::to_string(x.cols()));
    }
    x.rowwise() -= mean;
    x.array().rowwise() /= scale.array();
  }

  void write(std::ostream& out) const;
  static Standardizer read(std::istream& in);
};

namespace detail {

inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::optional<double> parse_double(std::string_view s) {
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

// Comma-separated fields; double quotes may wrap a field containing commas.
inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur.push_back('"');
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        cur.push_back(ch);
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  fields.push_back(std::move(cur));
  for (auto& f : fields) {
    const auto b = f.find_first_not_of(" \t");
    const auto e = f.find_last_not_of(" \t");
    f = b == std::string::npos ? std::string() : f.substr(b, e - b + 1);
  }
  return fields;
}

inline bool read_line(std::istream& in, std::string& line) {
  if (!std::getline(in, line)) return false;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return true;
}

}  // namespace detail

inline void Standardizer::write(std::ostream& out) const {
  out << "ferm-scaler v1 " << mean.size() << '\n';
  for (Eigen::Index c = 0; c < mean.size(); ++c) {
    out << detail::format_double(mean(c)) << ',' << detail::format_double(scale(c)) << '\n';
  }
}

inline Standardizer Standardizer::read(std::istream& in) {
  std::string line;
  if (!detail::read_line(in, line) || line.rfind("ferm-scaler v1 ", 0) != 0) {
    fail(ErrorCode::ParseError, "not a ferm-scaler v1 file");
  }
  const auto cols = detail::parse_double(std::string_view(line).substr(15));
  if (!cols || *cols < 0) fail(ErrorCode::ParseError, "bad scaler header");
  Standardizer s;
  const auto d = static_cast<Eigen::Index>(*cols);
  s.mean.resize(d);
  s.scale.resize(d);
  for (Eigen::Index c = 0; c < d; ++c) {
    if (!detail::read_line(in, line)) fail(ErrorCode::ParseError, "truncated scaler file");
    const auto fields = detail::split_csv_line(line);
    const auto m = fields.size() == 2 ? detail::parse_double(fields[0]) : std::nullopt;
    const auto sc = fields.size() == 2 ? detail::parse_double(fields[1]) : std::nullopt;
    if (!m || !sc) fail(ErrorCode::ParseError, "bad scaler row " + std::to_string(c + 1));
    s.mean(c) = *m;
    s.scale(c) = *sc;
  }
  return s;
}

/// Column selection for load_csv. Labels and groups are categorical; their
/// categories are ordered lexicographically unless label_values is given.
struct CsvSchema {
  std::vector<std::string> feature_cols;
  std::string label_col;
  std::vector<std::string> group_cols;
  std::optional<std::vector<std::string>> label_values;
};

/// Reads a header-led CSV. Multiple group columns are combined into one group
/// index by cross product, lexicographic in (column order, category name).
inline Dataset read_csv(std::istream& in, const CsvSchema& schema, bool standardize = true) {
  if (schema.feature_cols.empty()) fail(ErrorCode::MissingColumn, "no feature columns given");
  if (schema.label_col.empty()) fail(ErrorCode::MissingColumn, "no label column given");
  if (schema.group_cols.empty()) fail(ErrorCode::MissingColumn, "no group columns given");

  std::string line;
  if (!detail::read_line(in, line)) fail(ErrorCode::ParseError, "missing header row");
  const auto header = detail::split_csv_line(line);
  auto column = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) fail(ErrorCode::MissingColumn, "column '" + name + "' not in header");
    return static_cast<std::size_t>(it - header.begin());
  };
  std::vector<std::size_t> feature_idx;
  for (const auto& name : schema.feature_cols) feature_idx.push_back(column(name));
  const std::size_t label_idx = column(schema.label_col);
  std::vector<std::size_t> group_idx;
  for (const auto& name : schema.group_cols) group_idx.push_back(column(name));

  std::vector<std::vector<double>> rows;
  std::vector<std::string> raw_labels;
  std::vector<std::vector<std::string>> raw_groups;
  std::size_t row_no = 0;
  while (detail::read_line(in, line)) {
    if (line.empty()) continue;
    ++row_no;
    const auto fields = detail::split_csv_line(line);
    if (fields.size() != header.size()) {
      fail(ErrorCode::ParseError, "row " + std::to_string(row_no) + " has " +
                                      std::to_string(fields.size()) + " fields, header has " +
                                      std::to_string(header.size()));
    }
    std::vector<double> x;
    x.reserve(feature_idx.size());
    for (std::size_t c = 0; c < feature_idx.size(); ++c) {
      const auto v = detail::parse_double(fields[feature_idx[c]]);
      if (!v || !std::isfinite(*v)) {
        fail(ErrorCode::NonNumericFeature, "row " + std::to_string(row_no) + ", column '" +
                                               schema.feature_cols[c] + "': '" +
                                               fields[feature_idx[c]] + "'");
      }
      x.push_back(*v);
    }
    if (fields[label_idx].empty()) {
      fail(ErrorCode::MissingColumn, "row " + std::to_string(row_no) + " has an empty label");
    }
    rows.push_back(std::move(x));
    raw_labels.push_back(fields[label_idx]);
    std::vector<std::string> g;
    for (auto gi : group_idx) {
      if (fields[gi].empty()) {
        fail(ErrorCode::MissingColumn,
             "row " + std::to_string(row_no) + " has an empty group value");
      }
      g.push_back(fields[gi]);
    }
    raw_groups.push_back(std::move(g));
  }

  Dataset data;
  const std::size_t n = rows.size();
  data.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(feature_idx.size()));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < feature_idx.size(); ++c) {
      data.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = rows[i][c];
    }
  }

  std::map<std::string, std::size_t> label_code;
  if (schema.label_values) {
    for (const auto& v : *schema.label_values) label_code.emplace(v, label_code.size());
  } else {
    for (const auto& v : raw_labels) label_code.emplace(v, 0);
    std::size_t next = 0;
    for (auto& [name, code] : label_code) code = next++;
  }
  data.num_classes = label_code.size();
  data.labels.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto it = label_code.find(raw_labels[i]);
    if (it == label_code.end()) {
      fail(ErrorCode::UnknownCategory,
           "row " + std::to_string(i + 1) + ": unseen label '" + raw_labels[i] + "'");
    }
    data.labels.push_back(it->second);
  }

  std::vector<std::map<std::string, std::size_t>> group_code(group_idx.size());
  for (const auto& g : raw_groups) {
    for (std::size_t c = 0; c < g.size(); ++c) group_code[c].emplace(g[c], 0);
  }
  data.num_groups = 1;
  for (auto& codes : group_code) {
    std::size_t next = 0;
    for (auto& [name, code] : codes) code = next++;
    data.num_groups *= codes.size();
  }
  data.groups.reserve(n);
  for (const auto& g : raw_groups) {
    std::size_t combined = 0;
    for (std::size_t c = 0; c < g.size(); ++c) {
      combined = combined * group_code[c].size() + group_code[c].at(g[c]);
    }
    data.groups.push_back(combined);
  }

  if (n == 0) fail(ErrorCode::EmptyBatch, "CSV has no data rows");
  if (standardize) Standardizer::fit(data.features).apply(data.features);
  data.validate();
  return data;
}

inline Dataset load_csv(const std::string& path, const CsvSchema& schema,
                        bool standardize = true) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot open '" + path + "'");
  return read_csv(in, schema, standardize);
}

/// Columns x0..x{d-1},label,group with shortest round-trip float formatting.
inline void write_csv(const Dataset& data, std::ostream& out) {
  for (std::size_t c = 0; c < data.dims(); ++c) out << 'x' << c << ',';
  out << "label,group\n";
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t c = 0; c < data.dims(); ++c) {
      out << detail::format_double(
                 data.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)))
          << ',';
    }
    out << data.labels[i] << ',' << data.groups[i] << '\n';
  }
}

/// Schema matching write_csv's layout.
inline CsvSchema written_schema(std::size_t dims) {
  CsvSchema schema;
  for (std::size_t c = 0; c < dims; ++c) schema.feature_cols.push_back("x" + std::to_string(c));
  schema.label_col = "label";
  schema.group_cols = {"group"};
  return schema;
}

namespace detail {

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

/// Inverse of normal_cdf by bisection; p in (0, 1).
inline double normal_quantile(double p) {
  double lo = -40.0, hi = 40.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (normal_cdf(mid) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace detail

/// Two balanced groups and a binary label y = 1[w.u + beta * s_sign + noise > 0],
/// with u ~ N(0, I) in the first d-1 coordinates. beta is set so that
/// P(y=1 | s=1) - P(y=1 | s=0) = bias exactly. The last coordinate is a noisy
/// proxy of the group, N(2 s_sign, 1), which is how a model learns the bias.
inline Dataset synth_biased(std::uint64_t seed, std::size_t n, std::size_t d, double bias) {
  if (n < 100) fail(ErrorCode::InvalidArgument, "synth_biased needs n >= 100");
  if (d < 2) fail(ErrorCode::InvalidArgument, "synth_biased needs d >= 2");
  if (!(bias >= 0.0 && bias <= 1.0)) fail(ErrorCode::InvalidArgument, "bias must be in [0, 1]");

  constexpr double kSignal = 1.0;
  constexpr double kNoise = 0.5;
  constexpr double kProxyShift = 2.0;
  const double per_dim = kSignal / std::sqrt(static_cast<double>(d - 1));
  const double tau = std::sqrt(kSignal * kSignal + kNoise * kNoise);
  const double beta = tau * detail::normal_quantile(0.5 + bias / 2.0);

  Rng rng(seed);
  Dataset data;
  data.num_classes = 2;
  data.num_groups = 2;
  data.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  data.labels.resize(n);
  data.groups.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t s = rng.bernoulli(0.5) ? 1 : 0;
    const double ssign = s == 1 ? 1.0 : -1.0;
    const auto row = static_cast<Eigen::Index>(i);
    double score = beta * ssign;
    for (std::size_t c = 0; c + 1 < d; ++c) {
      const double u = rng.normal();
      data.features(row, static_cast<Eigen::Index>(c)) = u;
      score += per_dim * u;
    }
    score += kNoise * rng.normal();
    data.features(row, static_cast<Eigen::Index>(d - 1)) = kProxyShift * ssign + rng.normal();
    data.labels[i] = score > 0.0 ? 1 : 0;
    data.groups[i] = s;
  }
  data.validate();
  return data;
}

/// Flips the (binary) group of exactly round(fraction * n) uniformly chosen samples.
inline Dataset flip_sensitive(const Dataset& data, double fraction, std::uint64_t seed) {
  if (data.num_groups != 2) {
    fail(ErrorCode::NonBinaryGroup,
         "flipping needs k = 2, got k = " + std::to_string(data.num_groups));
  }
  if (!(fraction >= 0.0 && fraction <= 1.0)) {
    fail(ErrorCode::InvalidArgument, "flip fraction must be in [0, 1]");
  }
  const std::size_t n = data.size();
  const auto count = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(order));
  Dataset out = data;
  for (std::size_t i = 0; i < count; ++i) out.groups[order[i]] = 1 - out.groups[order[i]];
  out.validate();
  return out;
}

/// Disjoint train/test split; retries the permutation (up to 100 times) until
/// both sides contain every group and every label.
inline std::pair<Dataset, Dataset> split(const Dataset& data, double test_fraction,
                                         std::uint64_t seed) {
  const std::size_t n = data.size();
  const auto n_test =
      static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n)));
  if (!(test_fraction > 0.0 && test_fraction < 1.0) || n_test == 0 || n_test >= n) {
    fail(ErrorCode::UnsatisfiableSplit,
         "test fraction " + std::to_string(test_fraction) + " leaves a side empty");
  }
  auto covers = [&](std::span<const std::size_t> rows) {
    std::vector<bool> g(data.num_groups, false), y(data.num_classes, false);
    for (auto r : rows) {
      g[data.groups[r]] = true;
      y[data.labels[r]] = true;
    }
    return std::all_of(g.begin(), g.end(), [](bool b) { return b; }) &&
           std::all_of(y.begin(), y.end(), [](bool b) { return b; });
  };
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  for (int attempt = 0; attempt < 100; ++attempt) {
    rng.shuffle(std::span<std::size_t>(order));
    std::vector<std::size_t> test(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
    std::vector<std::size_t> train(order.begin() + static_cast<std::ptrdiff_t>(n_test), order.end());
    std::sort(test.begin(), test.end());
    std::sort(train.begin(), train.end());
    if (covers(train) && covers(test)) return {subset(data, train), subset(data, test)};
  }
  fail(ErrorCode::UnsatisfiableSplit, "no split within 100 attempts keeps every group and label");
}

}  // namespace fferm

#endif  // FFERM_DATASET_HPP_
