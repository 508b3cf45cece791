// hetune: command-line campaign runner.
//
//   hetune space-info --space emil
//   hetune gen   --space emil --oracle emil-pm --sample 6000 --out emil.csv
//   hetune train --space emil --log emil.csv --cv 10 --out model.json
//   hetune aml   --space emil --eval model:model.json --workload-mb 1024 --budget-fraction 0.07
//   hetune em    --space ida  --eval oracle:ida-pcc:rows=512,cols=32768
//   hetune compare --space ida --log data/fixtures/ida_em_vs_aml.csv
//
// Exit codes: 0 success, 1 usage error, 2 evaluator/execution failure,
// 3 data-format error.

#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hetune/hetune.hpp"

namespace {

using namespace hetune;

enum Exit { kOk = 0, kUsage = 1, kEvaluation = 2, kDataFormat = 3 };

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Globals {
  std::string space = "ida";
  std::uint64_t seed = 0;
  std::string out;
};

struct EvalOptions {
  std::string spec;
  std::optional<double> workload_mb;
  std::string label;
  double timeout_s = 60;
  std::size_t parallel = 1;
  std::string cmd_log;
};

/// Writes to --out when given, stdout otherwise.
class Output {
 public:
  explicit Output(const std::string& path) {
    if (!path.empty()) {
      file_.open(path, std::ios::binary);
      if (!file_) throw DataFormatError(path, 0, "cannot open for writing");
    }
  }
  std::ostream& stream() { return file_.is_open() ? static_cast<std::ostream&>(file_) : std::cout; }

 private:
  std::ofstream file_;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataFormatError(path, 0, "cannot open");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

MeasurementLog load_log(const std::string& path, const ParameterSpace& space) {
  std::ifstream in(path);
  if (!in) throw DataFormatError(path, 0, "cannot open measurement log");
  return read_log(in, space, path);
}

std::unique_ptr<Evaluator> make_evaluator(const EvalOptions& o, const ParameterSpace& space) {
  const auto colon = o.spec.find(':');
  if (colon == std::string::npos) throw UsageError("--eval must be model:PATH, replay:PATH, oracle:NAME or cmd:TEMPLATE");
  const auto kind = o.spec.substr(0, colon);
  const auto arg = o.spec.substr(colon + 1);
  if (kind == "model") {
    if (!o.workload_mb) throw UsageError("model evaluation needs --workload-mb");
    auto model = std::make_shared<const BoostedModel>(load_model(arg));
    return std::make_unique<ModelEvaluator>(std::move(model), space, *o.workload_mb);
  }
  if (kind == "replay") {
    auto log = load_log(arg, space);
    return std::make_unique<ReplayEvaluator>(
        space, std::move(log), o.label.empty() ? std::nullopt : std::optional<std::string>(o.label));
  }
  if (kind == "oracle") {
    try {
      return make_oracle(parse_oracle_spec(arg), space);
    } catch (const SpaceError&) {
      throw;
    } catch (const Error& e) {
      throw UsageError(e.what());
    }
  }
  if (kind == "cmd") {
    CommandOptions c;
    c.timeout = std::chrono::milliseconds(static_cast<long long>(o.timeout_s * 1000));
    c.max_parallel = o.parallel;
    c.log_path = o.cmd_log;
    return std::make_unique<CommandEvaluator>(space, arg, c);
  }
  throw UsageError("unknown evaluator kind '" + kind + "'");
}

void add_eval_options(CLI::App* cmd, EvalOptions& o) {
  cmd->add_option("--eval", o.spec, "model:PATH | replay:PATH | oracle:NAME[:key=value,...] | cmd:TEMPLATE")
      ->required();
  cmd->add_option("--workload-mb", o.workload_mb, "Workload size fed to a model evaluator");
  cmd->add_option("--label", o.label, "Report label; also selects rows of a labelled replay log");
  cmd->add_option("--timeout", o.timeout_s, "Per-command timeout in seconds (cmd evaluator)")->check(CLI::PositiveNumber);
  cmd->add_option("--parallel", o.parallel, "Concurrent command invocations (cmd evaluator)")->check(CLI::PositiveNumber);
  cmd->add_option("--cmd-log", o.cmd_log, "Append measured rows here (cmd evaluator)");
}

void write_report(const Globals& g, const ParameterSpace& space, const CampaignReport& r, bool timing) {
  Output out(g.out);
  out.stream() << report_to_json(space, r, timing).dump(1) << '\n';
  std::cerr << r.method << " best " << format_configuration(space, r.best) << " = " << format_double(r.best_value)
            << " MB/J after " << r.evaluations_used << " evaluations (" << format_double(r.wall_time_s) << " s)\n";
}

CampaignReport load_report(const std::string& path, const ParameterSpace& space) {
  try {
    return report_from_json(space, ordered_json::parse(read_file(path)));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataFormatError(path, 0, e.what());
  } catch (const DataFormatError& e) {
    throw DataFormatError(path, 0, e.what());
  }
}

void print_compare(const Globals& g, const CompareSummary& s, bool as_json) {
  Output out(g.out);
  auto& os = out.stream();
  if (as_json) {
    os << compare_to_json(s).dump(1) << '\n';
    return;
  }
  os << "label,em,aml,abs_difference,aml_fraction_of_em\n";
  char buf[160];
  for (const auto& r : s.rows) {
    std::snprintf(buf, sizeof buf, "%s,%.5f,%.5f,%.5f,", r.label.c_str(), r.em_value, r.aml_value, r.abs_difference);
    os << buf;
    if (r.aml_fraction_of_em) {
      std::snprintf(buf, sizeof buf, "%.2f", *r.aml_fraction_of_em);
      os << buf;
    }
    os << '\n';
  }
  std::snprintf(buf, sizeof buf, "# mean |difference| %.5f, max %.5f", s.mean_abs_difference, s.max_abs_difference);
  os << buf;
  if (s.mean_fraction) {
    std::snprintf(buf, sizeof buf, ", mean AML/EM %.2f%%", *s.mean_fraction);
    os << buf;
  }
  os << '\n';
}

int run(int argc, char** argv) {
  CLI::App app{"Heterogeneous-system configuration autotuner"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--space", g.space, "ida, emil or a space definition file")->capture_default_str();
  app.add_option("--seed", g.seed, "Seed for every stochastic step")->capture_default_str();
  app.add_option("--out", g.out, "Output file (default: stdout)");

  // space-info
  auto* info = app.add_subcommand("space-info", "Describe a parameter space");
  bool info_json = false;
  info->add_flag("--json", info_json, "Print the space definition document");

  // em
  auto* em = app.add_subcommand("em", "Evaluate every configuration");
  EvalOptions em_eval;
  std::size_t em_workers = 1;
  bool em_timing = false;
  add_eval_options(em, em_eval);
  em->add_option("--workers", em_workers, "Concurrent evaluations")->check(CLI::PositiveNumber);
  em->add_flag("--timing", em_timing, "Include wall time in the report");

  // aml
  auto* aml = app.add_subcommand("aml", "Simulated-annealing search");
  EvalOptions aml_eval;
  add_eval_options(aml, aml_eval);
  AnnealParams ap;
  std::optional<std::size_t> budget;
  std::optional<double> budget_fraction;
  std::string trace_path;
  bool aml_timing = false;
  aml->add_option("--t0", ap.initial_temperature, "Initial temperature")->capture_default_str();
  aml->add_option("--alpha", ap.cooling_factor, "Cooling factor (ignored with a budget)")->capture_default_str();
  aml->add_option("--delta-scale", ap.delta_scale, "Scale applied to relative differences")->capture_default_str();
  auto* b1 = aml->add_option("--budget", budget, "Maximum distinct evaluations in the search loop");
  aml->add_option("--budget-fraction", budget_fraction, "Budget as a fraction of the space cardinality")
      ->excludes(b1)
      ->check(CLI::Range(0.0, 1.0));
  aml->add_option("--trace", trace_path, "Write the search trace as JSON lines");
  aml->add_flag("--timing", aml_timing, "Include wall time in the report");

  // gen
  auto* gen = app.add_subcommand("gen", "Generate a measurement log from an oracle");
  std::string gen_oracle = "ida-pcc";
  std::string gen_sample = "full";
  gen->add_option("--oracle", gen_oracle, "Oracle NAME[:key=value,...]")->capture_default_str();
  gen->add_option("--sample", gen_sample, "'full' or a row count for random sampling")->capture_default_str();

  // train
  auto* train = app.add_subcommand("train", "Fit a boosted surrogate on a measurement log");
  std::string train_log, metrics_path;
  std::optional<std::size_t> cv;
  std::optional<double> split;
  bool no_validate = false;
  BoostParams bp;
  std::string loss = "linear";
  train->add_option("--log", train_log, "Measurement log")->required();
  auto* cv_opt = train->add_option("--cv", cv, "k-fold cross-validation (default 10)");
  auto* split_opt = train->add_option("--split", split, "Train fraction for a holdout split")->excludes(cv_opt);
  train->add_flag("--no-validate", no_validate, "Skip validation; report training R^2")->excludes(cv_opt)->excludes(split_opt);
  train->add_option("--estimators", bp.n_estimators, "Boosting stages")->capture_default_str()->check(CLI::PositiveNumber);
  train->add_option("--max-depth", bp.tree.max_depth, "Tree depth limit")->capture_default_str();
  train->add_option("--min-leaf", bp.tree.min_samples_leaf, "Minimum rows per leaf")->capture_default_str();
  train->add_option("--learning-rate", bp.learning_rate, "Stage weight shrinkage")->capture_default_str();
  train->add_option("--loss", loss, "linear, square or exponential")->capture_default_str();
  train->add_option("--metrics", metrics_path, "Write validation metrics as JSON");

  // predict
  auto* predict = app.add_subcommand("predict", "Predict energy efficiency with a trained model");
  std::string model_path;
  double predict_workload = 0;
  std::vector<std::string> predict_configs;
  bool predict_all = false;
  predict->add_option("--model", model_path, "Model file")->required();
  predict->add_option("--workload-mb", predict_workload, "Workload size")->required();
  auto* cfg_opt = predict->add_option("--config", predict_configs, "Assignment NAME=VALUE,... (repeatable)");
  predict->add_flag("--all", predict_all, "Predict every configuration of the space")->excludes(cfg_opt);

  // compare
  auto* cmp = app.add_subcommand("compare", "Compare EM and AML results");
  std::string cmp_em, cmp_aml, cmp_log;
  bool cmp_json = false;
  auto* em_opt = cmp->add_option("--em", cmp_em, "EM report");
  auto* aml_opt = cmp->add_option("--aml", cmp_aml, "AML report");
  auto* log_opt = cmp->add_option("--log", cmp_log, "Log with label and method columns")->excludes(em_opt)->excludes(aml_opt);
  em_opt->needs(aml_opt);
  aml_opt->needs(em_opt);
  cmp->add_flag("--json", cmp_json, "Print JSON instead of CSV");
  (void)log_opt;

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  const auto space = resolve_space(g.space);

  if (info->parsed()) {
    Output out(g.out);
    auto& os = out.stream();
    if (info_json) {
      os << space_to_json(space).dump(1) << '\n';
      return kOk;
    }
    os << "space " << space.name() << "\ncardinality " << cardinality(space) << '\n';
    for (const auto& p : space.parameters()) {
      os << p.name << ' ';
      if (p.derived()) {
        os << "derived 100-" << *p.complement_of << '\n';
        continue;
      }
      os << to_string(p.kind) << " {";
      for (std::size_t i = 0; i < p.values.size(); ++i)
        os << (i ? ", " : "") << p.format(p.values[i])
           << (p.kind == ParameterKind::categorical ? " (" + std::to_string(p.values[i]) + ")" : "");
      os << "}\n";
    }
    return kOk;
  }

  if (em->parsed()) {
    auto ev = make_evaluator(em_eval, space);
    write_report(g, space, run_em(space, *ev, em_workers, em_eval.label), em_timing);
    return kOk;
  }

  if (aml->parsed()) {
    auto ev = make_evaluator(aml_eval, space);
    ap.seed = g.seed;
    if (budget) ap.evaluation_budget = *budget;
    if (budget_fraction)
      ap.evaluation_budget = static_cast<std::size_t>(
          std::max(1.0, std::floor(*budget_fraction * static_cast<double>(cardinality(space)))));
    try {
      ap.check();
    } catch (const Error& e) {
      throw UsageError(e.what());
    }
    const auto report = run_aml(space, *ev, ap, aml_eval.label);
    if (!trace_path.empty()) {
      std::ofstream t(trace_path, std::ios::binary);
      if (!t) throw DataFormatError(trace_path, 0, "cannot open for writing");
      write_trace_jsonl(t, space, *report.trace);
    }
    write_report(g, space, report, aml_timing);
    return kOk;
  }

  if (gen->parsed()) {
    OracleSpec spec;
    try {
      spec = parse_oracle_spec(gen_oracle);
    } catch (const Error& e) {
      throw UsageError(e.what());
    }
    auto oracle = make_oracle(spec, space);
    Sampling sampling;
    if (gen_sample != "full") {
      std::size_t n = 0;
      try {
        n = std::stoul(gen_sample);
      } catch (const std::exception&) {
        throw UsageError("--sample must be 'full' or a positive count");
      }
      sampling = Sampling::random_n(n);
    }
    std::vector<RawMeasurement> rows;
    try {
      rows = gen_dataset(*oracle, space, sampling, g.seed);
    } catch (const EvaluationError&) {
      throw;
    } catch (const SpaceError&) {
      throw;
    } catch (const Error& e) {
      throw UsageError(e.what());
    }
    Output out(g.out);
    write_log(out.stream(), space, rows);
    std::cerr << "wrote " << rows.size() << " rows\n";
    return kOk;
  }

  if (train->parsed()) {
    try {
      bp.loss = parse_loss(loss);
    } catch (const Error& e) {
      throw UsageError(e.what());
    }
    auto log = load_log(train_log, space);
    std::vector<RawMeasurement> rows;
    rows.reserve(log.rows.size());
    for (auto& r : log.rows) rows.push_back(std::move(r.measurement));
    ValidationScheme scheme = ValidationScheme::kfold(cv.value_or(10));
    if (split) scheme = ValidationScheme::split(*split);
    if (no_validate) scheme = ValidationScheme::none();
    TrainResult result = [&] {
      try {
        return train_model(space, rows, bp, scheme, g.seed);
      } catch (const ModelError& e) {
        throw UsageError(e.what());
      }
    }();
    if (g.out.empty()) {
      std::cout << serialize_model(result.model);
    } else {
      save_model(result.model, g.out);
    }
    const auto& m = result.metrics;
    nlohmann::ordered_json mj = {{"scheme", m.scheme}, {"r2", m.r2}, {"n_samples", m.n_samples}};
    if (!m.fold_r2.empty()) mj["fold_r2"] = m.fold_r2;
    if (m.train_size) {
      mj["train_size"] = m.train_size;
      mj["test_size"] = m.test_size;
    }
    if (!metrics_path.empty()) {
      std::ofstream mo(metrics_path, std::ios::binary);
      if (!mo) throw DataFormatError(metrics_path, 0, "cannot open for writing");
      mo << mj.dump(1) << '\n';
    }
    std::cerr << "R^2 (" << m.scheme << ") = " << format_double(m.r2);
    if (m.train_size) std::cerr << ", train " << m.train_size << " / test " << m.test_size;
    std::cerr << '\n';
    return kOk;
  }

  if (predict->parsed()) {
    auto model = std::make_shared<const BoostedModel>(load_model(model_path));
    ModelEvaluator ev(model, space, predict_workload);
    std::vector<Configuration> configs;
    if (predict_all) {
      configs = enumerate_all(space);
    } else {
      if (predict_configs.empty()) throw UsageError("predict needs --config or --all");
      for (const auto& text : predict_configs) {
        try {
          configs.push_back(parse_configuration(space, text));
        } catch (const Error& e) {
          throw UsageError(e.what());
        }
      }
    }
    Output out(g.out);
    auto& os = out.stream();
    for (const auto& p : space.parameters()) os << p.name << ',';
    os << "predicted_mb_per_j\n";
    for (const auto& c : configs) {
      for (std::size_t i = 0; i < space.size(); ++i) os << space.parameter(i).format(c.values[i]) << ',';
      os << format_double(ev.evaluate(c)) << '\n';
    }
    return kOk;
  }

  if (cmp->parsed()) {
    CompareSummary s;
    if (!cmp_log.empty()) {
      const auto log = load_log(cmp_log, space);
      if (!log.has_label || !log.has_method) throw DataFormatError(cmp_log, 1, "log needs label and method columns");
      s = compare(reports_from_log(space, log, "EM"), reports_from_log(space, log, "AML"));
    } else if (!cmp_em.empty()) {
      s = compare(std::vector{load_report(cmp_em, space)}, std::vector{load_report(cmp_aml, space)});
    } else {
      throw UsageError("compare needs --em/--aml or --log");
    }
    print_compare(g, s, cmp_json);
    return kOk;
  }
  return kUsage;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const DataFormatError& e) {
    std::cerr << "data format error: " << e.what() << '\n';
    return kDataFormat;
  } catch (const EvaluationError& e) {
    std::cerr << "evaluation failed: " << e.what() << '\n';
    if (!e.output().empty()) std::cerr << "--- captured output ---\n" << e.output() << '\n';
    return kEvaluation;
  } catch (const ModelError& e) {
    std::cerr << "model error: " << e.what() << '\n';
    return kEvaluation;
  } catch (const SpaceError& e) {
    std::cerr << "space error: " << e.what() << '\n';
    return kUsage;
  } catch (const EncodingError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  }
}
