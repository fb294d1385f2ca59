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

// fferm: train, evaluate, sweep and shift-test fair classifiers from CSV data.

#include <CLI11.hpp>

#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "fferm/fferm.hpp"

#ifndef FFERM_VERSION
#define FFERM_VERSION "0.1.0"
#endif

namespace {

namespace fs = std::filesystem;

enum ExitCode { kOk = 0, kConfigError = 2, kNumericAbort = 3, kTargetUnreachable = 4 };

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string data;
  std::string features;
  std::string label;
  std::string groups;
  std::string div = "kl";
  double lambda = 0.0;
  double eta_theta = 1e-5;
  double eta_alpha = 1e-6;
  std::size_t epochs = 2000;
  std::size_t warmup = 300;
  std::size_t batch_size = 8;
  std::uint64_t seed = 0;
  std::string notion = "dp";
  std::size_t hidden = 0;
  std::string robust = "none";
  double delta = 0.0;
  std::string p_norm = "2";
  bool squared_penalty = false;
  double epsilon = 0.0;
  std::size_t refresh_every = 0;
  std::string out_dir = ".";
  std::vector<std::string> eval_data;
  std::string model;
  std::string scaler;
  std::size_t grid = 10;
  std::vector<double> lambdas;
  std::vector<double> flip_fractions;
  std::string train_data;
  double target = 0.80;
  double test_fraction = 0.2;
  std::vector<std::string> methods{"erm", "ferm", "dro-gradnorm", "dro-linf"};
  std::size_t n = 2000;
  std::size_t d = 5;
  double bias = 0.4;
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex(std::uint64_t v) {
  std::ostringstream out;
  out << std::hex;
  out.width(16);
  out.fill('0');
  out << v;
  return out.str();
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

/// Resolved configuration as key=value lines (without the output directory),
/// and its hash. The hash tags every CSV the run writes.
// Defaults print as "[a,b]" and parsed lists as ["a", "b"]; both become "a,b".
std::string normalize_list(const std::string& line) {
  const auto eq = line.find('=');
  if (eq == std::string::npos) return line;
  std::string value = line.substr(eq + 1);
  if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
  if (value.size() < 2 || value.front() != '[' || value.back() != ']') return line;
  std::string flat;
  for (char c : value.substr(1, value.size() - 2)) {
    if (c != '"' && c != ' ') flat += c;
  }
  return line.substr(0, eq + 1) + "\"" + flat + "\"";
}

struct Manifest {
  std::string command;
  std::string config;
  std::string hash;
  std::string started = utc_now();
  std::vector<std::string> outputs;

  Manifest(const CLI::App& app, std::string cmd) : command(std::move(cmd)) {
    std::istringstream all(app.config_to_str(true, false));
    std::string line;
    std::ostringstream kept;
    while (std::getline(all, line)) {
      if (line.rfind("out-dir=", 0) == 0 || line.empty() || line[0] == '[') continue;
      // Unset options would read back as a list holding one empty string.
      if (line.size() >= 3 && line.compare(line.size() - 3, 3, "=\"\"") == 0) continue;
      kept << normalize_list(line) << '\n';
    }
    config = kept.str();
    hash = hex(fnv1a("command=" + command + "\n" + config));
  }

  void write(const fs::path& dir) const {
    std::ofstream out(dir / "manifest.txt");
    out << "# fferm run manifest\n";
    out << "# command=" << command << '\n';
    out << "# version=" << FFERM_VERSION << '\n';
    out << "# manifest_hash=" << hash << '\n';
    out << "# started=" << started << '\n';
    out << "# finished=" << utc_now() << '\n';
    for (const auto& o : outputs) out << "# output=" << o << '\n';
    out << config;
  }
};

fferm::CsvSchema schema_from(const Options& o) {
  if (o.features.empty()) throw ConfigError("missing required flag --features");
  if (o.label.empty()) throw ConfigError("missing required flag --label");
  if (o.groups.empty()) throw ConfigError("missing required flag --groups");
  fferm::CsvSchema schema;
  schema.feature_cols = split_list(o.features);
  schema.label_col = o.label;
  schema.group_cols = split_list(o.groups);
  return schema;
}

/// Loads a CSV without standardizing it.
fferm::Dataset load_raw(const std::string& path, const fferm::CsvSchema& schema,
                        const char* flag) {
  if (path.empty()) throw ConfigError(std::string("missing required flag ") + flag);
  return fferm::load_csv(path, schema, false);
}

fferm::RobustConfig config_from(const Options& o) {
  fferm::RobustConfig cfg;
  cfg.divergence = fferm::parse_divergence(o.div);
  cfg.lambda = o.lambda;
  cfg.eta_theta = o.eta_theta;
  cfg.eta_alpha = o.eta_alpha;
  cfg.epochs_total = o.epochs;
  cfg.warmup_epochs_lambda_zero = o.warmup;
  cfg.batch_size = o.batch_size;
  cfg.seed = o.seed;
  cfg.fairness_notion = fferm::parse_notion(o.notion);
  cfg.arch = o.hidden == 0 ? fferm::Architecture::linear() : fferm::Architecture::one_hidden(o.hidden);
  if (o.robust != "none") cfg.mode = fferm::parse_robust_mode(o.robust);
  cfg.delta = o.delta;
  cfg.p_norm = fferm::parse_p_norm(o.p_norm);
  cfg.squared_penalty = o.squared_penalty;
  cfg.epsilon_penalty = o.epsilon;
  cfg.refresh_every_steps = o.refresh_every;
  return cfg;
}

fs::path prepare_out_dir(const Options& o) {
  fs::path dir(o.out_dir);
  fs::create_directories(dir);
  return dir;
}

std::string num(double v) { return fferm::detail::csv_number(v); }

std::string file_token(std::string token) {
  for (auto& c : token) {
    if (c == ':') c = '_';
  }
  return token;
}

int cmd_train(const Options& o, Manifest& manifest) {
  const auto schema = schema_from(o);
  auto data = load_raw(o.data, schema, "--data");
  auto cfg = config_from(o);
  const auto scaler = fferm::Standardizer::fit(data.features);
  scaler.apply(data.features);
  std::optional<fferm::Dataset> held_out;
  if (!o.eval_data.empty()) {
    held_out = fferm::load_csv(o.eval_data.front(), schema, false);
    scaler.apply(held_out->features);
  }
  const fferm::Dataset* test = held_out ? &*held_out : nullptr;
  const auto report = o.robust == "none" ? fferm::train(data, cfg, test)
                                         : fferm::robust_train(data, cfg, test);

  const auto dir = prepare_out_dir(o);
  {
    std::ofstream out(dir / "report.csv");
    fferm::write_report_csv(report, out, manifest.hash);
  }
  {
    std::ofstream out(dir / "model.bin", std::ios::binary);
    report.params.save(out);
  }
  {
    std::ofstream out(dir / "scaler.txt");
    scaler.write(out);
  }
  manifest.outputs = {"report.csv", "model.bin", "scaler.txt"};
  manifest.write(dir);
  return kOk;
}

int cmd_evaluate(const Options& o, Manifest& manifest) {
  const auto schema = schema_from(o);
  auto data = load_raw(o.data, schema, "--data");
  if (o.model.empty()) throw ConfigError("missing required flag --model");
  std::ifstream model_in(o.model, std::ios::binary);
  if (!model_in) throw ConfigError("--model: cannot open '" + o.model + "'");
  const auto params = fferm::ModelParams::load(model_in);
  if (!o.scaler.empty()) {
    std::ifstream scaler_in(o.scaler);
    if (!scaler_in) throw ConfigError("--scaler: cannot open '" + o.scaler + "'");
    fferm::Standardizer::read(scaler_in).apply(data.features);
  } else {
    fferm::Standardizer::fit(data.features).apply(data.features);
  }
  const auto spec = fferm::parse_divergence(o.div);
  const auto m = fferm::evaluate(params, data, spec);

  const auto dir = prepare_out_dir(o);
  std::ofstream out(dir / "metrics.csv");
  out << "accuracy,dpv,eov,eoddsv,divergence";
  for (std::size_t k = 0; k < m.group_positive_rates.size(); ++k) out << ",positive_rate_g" << k;
  out << ",manifest_hash\n";
  out << num(m.accuracy) << ',' << num(m.dpv) << ',' << num(m.eov) << ',' << num(m.eoddsv) << ','
      << num(m.divergence_value);
  for (double r : m.group_positive_rates) out << ',' << num(r);
  out << ',' << manifest.hash << '\n';
  manifest.outputs = {"metrics.csv"};
  manifest.write(dir);
  return kOk;
}

int cmd_sweep(const Options& o, Manifest& manifest) {
  const auto schema = schema_from(o);
  auto data = load_raw(o.data, schema, "--data");
  fferm::Standardizer::fit(data.features).apply(data.features);
  const auto dir = prepare_out_dir(o);
  manifest.outputs.clear();
  for (const auto& token : split_list(o.div)) {
    Options one = o;
    one.div = token;
    const auto cfg = config_from(one);
    const auto grid = o.lambdas.empty() ? fferm::default_lambda_grid(cfg.divergence, o.grid)
                                        : o.lambdas;
    const auto points = fferm::sweep(data, cfg, grid);
    const std::string name = "tradeoff_" + file_token(fferm::to_token(cfg.divergence)) + ".csv";
    std::ofstream out(dir / name);
    out << "lambda,accuracy,dpv,eov,eoddsv,manifest_hash\n";
    for (const auto& p : points) {
      out << num(p.lambda) << ',' << num(p.accuracy) << ',' << num(p.dpv) << ',' << num(p.eov)
          << ',' << num(p.eoddsv) << ',' << manifest.hash << '\n';
    }
    manifest.outputs.push_back(name);
  }
  manifest.write(dir);
  return kOk;
}

fferm::Method parse_method(const std::string& token) {
  if (token == "erm") return fferm::Method::Erm;
  if (token == "ferm") return fferm::Method::Ferm;
  if (token == "dro-gradnorm") return fferm::Method::DroGradNorm;
  if (token == "dro-linf") return fferm::Method::DroLinf;
  throw ConfigError("--methods: unknown method '" + token + "'");
}

int cmd_shift(const Options& o, Manifest& manifest) {
  const auto schema = schema_from(o);
  const auto cfg = config_from(o);
  std::vector<fferm::Method> methods;
  for (const auto& m : o.methods) methods.push_back(parse_method(m));
  fferm::MatchOptions opts;
  opts.target = o.target;

  std::vector<fferm::ShiftRow> rows;
  if (!o.flip_fractions.empty()) {
    auto data = load_raw(o.data, schema, "--data");
    auto [train_raw, test_raw] = fferm::split(data, o.test_fraction, cfg.seed);
    const auto scaler = fferm::Standardizer::fit(train_raw.features);
    scaler.apply(train_raw.features);
    scaler.apply(test_raw.features);
    for (double fraction : o.flip_fractions) {
      const auto train_data = fferm::flip_sensitive(train_raw, fraction, cfg.seed);
      for (auto m : methods) {
        rows.push_back({m, fferm::detail::format_double(fraction),
                        fferm::match_accuracy(m, train_data, &test_raw, cfg, opts)});
      }
    }
  } else {
    if (o.train_data.empty()) {
      throw ConfigError("shift needs --flip-fractions, or --train-data with --eval-data");
    }
    if (o.eval_data.empty()) throw ConfigError("missing required flag --eval-data");
    auto train_data = load_raw(o.train_data, schema, "--train-data");
    const auto scaler = fferm::Standardizer::fit(train_data.features);
    scaler.apply(train_data.features);
    std::vector<fferm::Dataset> domains;
    for (const auto& path : o.eval_data) {
      domains.push_back(fferm::load_csv(path, schema, false));
      scaler.apply(domains.back().features);
    }
    for (auto m : methods) {
      const auto matched = fferm::match_accuracy(m, train_data, nullptr, cfg, opts);
      for (std::size_t e = 0; e < domains.size(); ++e) {
        fferm::MatchedRun run;
        run.method = matched.method;
        run.lambda = matched.lambda;
        run.acc_train = matched.acc_train;
        run.runs = matched.runs;
        run.reached = matched.reached;
        const auto preds = fferm::predict_labels(*matched.params, domains[e]);
        run.acc_test = fferm::accuracy(preds, domains[e].labels);
        run.dpv_test = fferm::dp_violation(preds, domains[e].groups, domains[e].num_groups,
                                           domains[e].num_classes);
        rows.push_back({m, fs::path(o.eval_data[e]).filename().string(), run});
      }
    }
  }

  const auto dir = prepare_out_dir(o);
  {
    std::ofstream out(dir / "shift.csv");
    out << "method,setting,lambda,acc_train,accuracy,dpv,runs,reached,manifest_hash\n";
    for (const auto& r : rows) {
      out << fferm::to_token(r.method) << ',' << r.setting << ',' << num(r.run.lambda) << ','
          << num(r.run.acc_train) << ',' << num(r.run.acc_test) << ',' << num(r.run.dpv_test)
          << ',' << r.run.runs << ',' << (r.run.reached ? 1 : 0) << ',' << manifest.hash << '\n';
    }
  }
  manifest.outputs = {"shift.csv"};
  manifest.write(dir);
  for (const auto& r : rows) {
    if (r.method != fferm::Method::Erm && !r.run.reached) {
      std::cerr << "fferm: " << fferm::to_token(r.method) << " did not reach accuracy "
                << o.target << " (setting " << r.setting << ")\n";
      return kTargetUnreachable;
    }
  }
  return kOk;
}

int cmd_synth(const Options& o, Manifest& manifest) {
  const auto data = fferm::synth_biased(o.seed, o.n, o.d, o.bias);
  const auto dir = prepare_out_dir(o);
  std::ofstream out(dir / "synth.csv");
  fferm::write_csv(data, out);
  manifest.outputs = {"synth.csv"};
  manifest.write(dir);
  return kOk;
}

bool is_config_error(fferm::ErrorCode code) {
  using fferm::ErrorCode;
  switch (code) {
    case ErrorCode::InvalidArgument:
    case ErrorCode::NonPositiveArgument:
    case ErrorCode::InvalidAlphaParam:
    case ErrorCode::NonDifferentiable:
    case ErrorCode::UnsupportedDivergenceForLinf:
    case ErrorCode::MissingColumn:
    case ErrorCode::NonNumericFeature:
    case ErrorCode::UnknownCategory:
    case ErrorCode::NonBinaryGroup:
    case ErrorCode::UnsatisfiableSplit:
    case ErrorCode::ParseError:
    case ErrorCode::IoError:
    case ErrorCode::EmptyGroup:
    case ErrorCode::EmptyLabel:
    case ErrorCode::EmptyConditionedSubset:
    case ErrorCode::DimensionMismatch:
    case ErrorCode::LengthMismatch:
      return true;
    default:
      return false;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fair classification with f-divergence regularizers"};
  app.fallthrough();
  app.require_subcommand(1);
  app.set_config("--config,--from-manifest", "", "flat key=value configuration file")
      ->check(CLI::ExistingFile);
  app.set_version_flag("--version", FFERM_VERSION);

  Options o;
  app.add_option("--data", o.data, "input CSV");
  app.add_option("--features", o.features, "comma-separated feature columns");
  app.add_option("--label", o.label, "label column");
  app.add_option("--groups", o.groups, "comma-separated sensitive attribute columns");
  app.add_option("--div", o.div, "divergence: chi2|kl|reverse-kl|tv|js|hellinger|alpha:<a>")
      ->capture_default_str();
  app.add_option("--lambda", o.lambda, "fairness weight")->capture_default_str();
  app.add_option("--eta-theta", o.eta_theta, "descent step size")->capture_default_str();
  app.add_option("--eta-alpha", o.eta_alpha, "ascent step size")->capture_default_str();
  app.add_option("--epochs", o.epochs)->capture_default_str();
  app.add_option("--warmup", o.warmup, "epochs trained with lambda = 0")->capture_default_str();
  app.add_option("--batch-size", o.batch_size)->capture_default_str();
  app.add_option("--seed", o.seed)->capture_default_str();
  app.add_option("--notion", o.notion, "dp|eo|eodds")->capture_default_str();
  app.add_option("--hidden", o.hidden, "hidden width, 0 for a linear model")->capture_default_str();
  app.add_option("--robust", o.robust, "none|gradnorm|linf")->capture_default_str();
  app.add_option("--delta", o.delta, "shift radius")->capture_default_str();
  app.add_option("--p-norm", o.p_norm, "2|inf")->capture_default_str();
  app.add_flag("--squared-penalty", o.squared_penalty, "squared gradient penalty");
  app.add_option("--epsilon", o.epsilon, "squared penalty weight")->capture_default_str();
  app.add_option("--refresh-every", o.refresh_every, "steps between full passes, 0 per epoch")
      ->capture_default_str();
  app.add_option("--out-dir", o.out_dir)->capture_default_str();
  app.add_option("--eval-data", o.eval_data, "held-out or target-domain CSVs");
  app.add_option("--model", o.model, "model checkpoint for evaluate");
  app.add_option("--scaler", o.scaler, "standardizer written by train");
  app.add_option("--grid", o.grid, "log-spaced lambda points besides 0")->capture_default_str();
  app.add_option("--lambdas", o.lambdas, "explicit lambda grid")->delimiter(',');
  app.add_option("--flip-fractions", o.flip_fractions)->delimiter(',');
  app.add_option("--train-data", o.train_data, "source-domain CSV for shift");
  app.add_option("--target", o.target, "accuracy to match")->capture_default_str();
  app.add_option("--test-fraction", o.test_fraction)->capture_default_str();
  app.add_option("--methods", o.methods)->delimiter(',')->capture_default_str();
  app.add_option("--n", o.n, "synthetic sample count")->capture_default_str();
  app.add_option("--d", o.d, "synthetic dimension")->capture_default_str();
  app.add_option("--bias", o.bias, "synthetic label/group correlation")->capture_default_str();

  auto* train = app.add_subcommand("train", "train one model");
  auto* evaluate = app.add_subcommand("evaluate", "metrics of a saved model on a CSV");
  auto* sweep = app.add_subcommand("sweep", "lambda grid tradeoff curves");
  auto* shift = app.add_subcommand("shift", "accuracy-matched distribution shift experiment");
  auto* synth = app.add_subcommand("synth", "write a synthetic biased dataset");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfigError;
  }

  try {
    std::string command = app.get_subcommands().front()->get_name();
    Manifest manifest(app, command);
    if (*train) return cmd_train(o, manifest);
    if (*evaluate) return cmd_evaluate(o, manifest);
    if (*sweep) return cmd_sweep(o, manifest);
    if (*shift) return cmd_shift(o, manifest);
    if (*synth) return cmd_synth(o, manifest);
  } catch (const ConfigError& e) {
    std::cerr << "fferm: " << e.what() << '\n';
    return kConfigError;
  } catch (const fferm::Error& e) {
    std::cerr << "fferm: " << e.what() << '\n';
    return is_config_error(e.code()) ? kConfigError : kNumericAbort;
  } catch (const std::exception& e) {
    std::cerr << "fferm: " << e.what() << '\n';
    return kNumericAbort;
  }
  return kConfigError;
}
