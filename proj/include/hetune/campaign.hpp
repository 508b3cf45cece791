#pragma once

// Campaigns: exhaustive enumeration (EM), annealing search (AML), dataset
// generation, model training and EM-vs-AML comparison.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <map>
#include <limits>
#include <mutex>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "hetune/annealer.hpp"
#include "hetune/boosting.hpp"
#include "hetune/config_space.hpp"
#include "hetune/error.hpp"
#include "hetune/evaluators.hpp"
#include "hetune/features.hpp"
#include "hetune/measurement_log.hpp"
#include "hetune/metrics.hpp"
#include "hetune/rng.hpp"
#include "hetune/validation.hpp"

namespace hetune {

struct EvaluationRecord {
  Configuration config;
  double value = 0;
  friend bool operator==(const EvaluationRecord&, const EvaluationRecord&) = default;
};

struct CampaignReport {
  std::string space;
  std::string label;
  std::string method;  // "EM" or "AML"
  Configuration best;
  double best_value = -std::numeric_limits<double>::infinity();
  std::size_t evaluations_used = 0;
  std::uint64_t cardinality = 0;
  double wall_time_s = 0;
  std::string evaluator;
  std::vector<EvaluationRecord> records;  // distinct evaluations, in order
  std::optional<AnnealParams> params;
  std::optional<SearchTrace> trace;

  double budget_fraction() const {
    return cardinality ? static_cast<double>(evaluations_used) / static_cast<double>(cardinality) : 0.0;
  }
};

/// Everything but wall time.
inline bool same_report(const CampaignReport& a, const CampaignReport& b);

/// Thrown when an evaluator fails mid-campaign; carries the partial report.
class CampaignAborted : public EvaluationError {
 public:
  CampaignAborted(const std::string& what, CampaignReport partial, std::string output = {})
      : EvaluationError(what, std::move(output)), partial_(std::move(partial)) {}
  const CampaignReport& partial() const noexcept { return partial_; }

 private:
  CampaignReport partial_;
};

namespace detail {

inline void take_best(CampaignReport& r) {
  r.best_value = -std::numeric_limits<double>::infinity();
  r.best = {};
  for (const auto& rec : r.records)
    if (rec.value > r.best_value) {
      r.best_value = rec.value;
      r.best = rec.config;
    }
  r.evaluations_used = r.records.size();
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace detail

/// Evaluates every configuration in enumeration order. With workers > 1 and a
/// concurrent evaluator, evaluations fan out across threads; records keep
/// enumeration order either way, so ties go to the earliest configuration.
inline CampaignReport run_em(const ParameterSpace& space, Evaluator& evaluator, std::size_t workers = 1,
                             std::string label = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  CampaignReport r;
  r.space = space.name();
  r.label = std::move(label);
  r.method = "EM";
  r.cardinality = cardinality(space);
  r.evaluator = evaluator.describe();
  const auto configs = enumerate_all(space);
  std::vector<double> values(configs.size());
  std::vector<char> done(configs.size(), 0);

  std::size_t first_failure = configs.size();
  std::string failure, failure_output;
  if (workers <= 1 || !evaluator.concurrent()) {
    for (std::size_t i = 0; i < configs.size(); ++i) {
      try {
        values[i] = evaluator.evaluate(configs[i]);
        done[i] = 1;
      } catch (const std::exception& e) {
        first_failure = i;
        failure = e.what();
        if (const auto* ee = dynamic_cast<const EvaluationError*>(&e)) failure_output = ee->output();
        break;
      }
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::atomic<bool> stop{false};
    std::mutex m;
    auto work = [&] {
      while (!stop.load()) {
        const auto i = next.fetch_add(1);
        if (i >= configs.size()) return;
        try {
          values[i] = evaluator.evaluate(configs[i]);
          done[i] = 1;
        } catch (const std::exception& e) {
          std::lock_guard lock(m);
          if (i < first_failure) {
            first_failure = i;
            failure = e.what();
            if (const auto* ee = dynamic_cast<const EvaluationError*>(&e)) failure_output = ee->output();
          }
          stop = true;
        }
      }
    };
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }

  // The report keeps the contiguous prefix that completed.
  for (std::size_t i = 0; i < configs.size() && done[i]; ++i) r.records.push_back({configs[i], values[i]});
  detail::take_best(r);
  r.wall_time_s = detail::seconds_since(t0);
  if (first_failure < configs.size())
    throw CampaignAborted("evaluation failed for " + format_configuration(space, configs[first_failure]) + ": " + failure,
                          std::move(r), std::move(failure_output));
  return r;
}

namespace detail {

inline void fill_from_trace(CampaignReport& r, const SearchTrace& t) {
  r.records.clear();
  for (const auto& s : t.seeds) {
    const bool repeat = std::any_of(r.records.begin(), r.records.end(),
                                    [&](const EvaluationRecord& e) { return e.config == s.config; });
    if (!repeat) r.records.push_back({s.config, s.value});
  }
  for (const auto& s : t.steps)
    if (!s.cached) r.records.push_back({s.candidate, s.value});
  take_best(r);
  r.trace = t;
}

}  // namespace detail

/// Annealing search through `evaluator`. Records hold each distinct
/// evaluation once, so evaluations_used matches the trace's count.
inline CampaignReport run_aml(const ParameterSpace& space, Evaluator& evaluator, const AnnealParams& params,
                              std::string label = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  CampaignReport r;
  r.space = space.name();
  r.label = std::move(label);
  r.method = "AML";
  r.cardinality = cardinality(space);
  r.evaluator = evaluator.describe();
  r.params = params;
  try {
    const auto trace = anneal(space, [&](const Configuration& c) { return evaluator.evaluate(c); }, params);
    detail::fill_from_trace(r, trace);
  } catch (const SearchAborted& e) {
    detail::fill_from_trace(r, e.partial());
    r.wall_time_s = detail::seconds_since(t0);
    throw CampaignAborted(e.what(), std::move(r), e.output());
  }
  r.wall_time_s = detail::seconds_since(t0);
  return r;
}

// ---------------------------------------------------------------------------
// Comparison

struct CompareRow {
  std::string label;
  double em_value = 0;
  double aml_value = 0;
  double signed_difference = 0;  // em - aml
  double abs_difference = 0;
  std::optional<double> aml_fraction_of_em;  // percent; absent when em <= 0
  std::size_t em_evaluations = 0;
  std::size_t aml_evaluations = 0;
};

struct CompareSummary {
  std::vector<CompareRow> rows;
  double mean_abs_difference = 0;
  double max_abs_difference = 0;
  std::optional<double> mean_fraction;  // percent, over rows where defined
  std::size_t em_evaluations = 0;
  std::size_t aml_evaluations = 0;
};

inline CompareRow compare_values(std::string label, double em, double aml) {
  CompareRow row;
  row.label = std::move(label);
  row.em_value = em;
  row.aml_value = aml;
  row.signed_difference = em - aml;
  row.abs_difference = std::abs(em - aml);
  if (em > 0) row.aml_fraction_of_em = 100.0 * aml / em;
  return row;
}

inline CompareRow compare(const CampaignReport& em, const CampaignReport& aml) {
  if (em.space != aml.space)
    throw Error("cannot compare reports over different spaces ('" + em.space + "' vs '" + aml.space + "')");
  auto row = compare_values(em.label.empty() ? aml.label : em.label, em.best_value, aml.best_value);
  row.em_evaluations = em.evaluations_used;
  row.aml_evaluations = aml.evaluations_used;
  return row;
}

/// Pairs reports by label (in the order of `em`); every label needs exactly
/// one report on each side.
inline CompareSummary compare(const std::vector<CampaignReport>& em, const std::vector<CampaignReport>& aml) {
  std::map<std::string, const CampaignReport*> by_label;
  for (const auto& r : aml)
    if (!by_label.emplace(r.label, &r).second) throw Error("duplicate AML report for label '" + r.label + "'");
  if (em.size() != aml.size()) throw Error("EM and AML report counts differ");
  CompareSummary s;
  std::set<std::string> seen;
  std::size_t with_fraction = 0;
  double fraction_sum = 0;
  for (const auto& e : em) {
    if (!seen.insert(e.label).second) throw Error("duplicate EM report for label '" + e.label + "'");
    auto it = by_label.find(e.label);
    if (it == by_label.end()) throw Error("no AML report for label '" + e.label + "'");
    s.rows.push_back(compare(e, *it->second));
    const auto& row = s.rows.back();
    s.mean_abs_difference += row.abs_difference;
    s.max_abs_difference = std::max(s.max_abs_difference, row.abs_difference);
    if (row.aml_fraction_of_em) {
      fraction_sum += *row.aml_fraction_of_em;
      ++with_fraction;
    }
    s.em_evaluations += row.em_evaluations;
    s.aml_evaluations += row.aml_evaluations;
  }
  if (!s.rows.empty()) s.mean_abs_difference /= static_cast<double>(s.rows.size());
  if (with_fraction) s.mean_fraction = fraction_sum / static_cast<double>(with_fraction);
  return s;
}

/// Builds one report per (label, method) from an annotated measurement log.
/// Each report's records are the rows in file order; these are recorded
/// results, so EM reports need not cover the whole space.
inline std::vector<CampaignReport> reports_from_log(const ParameterSpace& space, const MeasurementLog& log,
                                                    const std::string& method) {
  if (!log.has_method) throw DataFormatError("<log>", 0, "log has no 'method' column");
  std::vector<CampaignReport> out;
  std::map<std::string, std::size_t> index;
  for (const auto& row : log.rows) {
    if (row.method != method) continue;
    auto [it, fresh] = index.emplace(row.label, out.size());
    if (fresh) {
      CampaignReport r;
      r.space = space.name();
      r.label = row.label;
      r.method = method;
      r.cardinality = cardinality(space);
      r.evaluator = "log";
      out.push_back(std::move(r));
    }
    out[it->second].records.push_back({row.measurement.config, derive_all(row.measurement).energy_efficiency});
  }
  for (auto& r : out) detail::take_best(r);
  return out;
}

// ---------------------------------------------------------------------------
// Datasets and training

struct Sampling {
  enum class Kind { full, random } kind = Kind::full;
  std::size_t n = 0;

  static Sampling all() { return {}; }
  static Sampling random_n(std::size_t n) { return {Kind::random, n}; }
};

/// Measurements for the sampled configurations, in enumeration order. Random
/// sampling draws n distinct configurations.
inline std::vector<RawMeasurement> gen_dataset(const MeasuringEvaluator& oracle, const ParameterSpace& space,
                                               Sampling sampling, std::uint64_t seed) {
  auto configs = enumerate_all(space);
  if (sampling.kind == Sampling::Kind::random) {
    if (sampling.n == 0 || sampling.n > configs.size())
      throw Error("random sampling needs 1 <= n <= " + std::to_string(configs.size()));
    Rng rng(seed);
    std::vector<std::size_t> idx(configs.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    // Partial Fisher-Yates: only the first n positions are needed.
    for (std::size_t i = 0; i < sampling.n; ++i) std::swap(idx[i], idx[i + rng.index(idx.size() - i)]);
    idx.resize(sampling.n);
    std::sort(idx.begin(), idx.end());
    std::vector<Configuration> picked;
    picked.reserve(idx.size());
    for (auto i : idx) picked.push_back(std::move(configs[i]));
    configs = std::move(picked);
  }
  std::vector<RawMeasurement> out;
  out.reserve(configs.size());
  for (const auto& c : configs) out.push_back(oracle.measure(c));
  return out;
}

struct ValidationScheme {
  enum class Kind { kfold, split, none } kind = Kind::kfold;
  std::size_t k = 10;
  double train_fraction = 0.8;

  static ValidationScheme kfold(std::size_t k = 10) { return {Kind::kfold, k, 0.8}; }
  static ValidationScheme split(double f = 0.8) { return {Kind::split, 10, f}; }
  static ValidationScheme none() { return {Kind::none, 10, 0.8}; }
};

struct TrainResult {
  BoostedModel model;
  ModelMetrics metrics;
};

inline constexpr std::size_t kMinTrainingRows = 10;

/// Scores the chosen scheme, then fits the returned model on every row.
/// Validation and the final fit draw from separate streams of `seed`.
inline TrainResult train_model(const ParameterSpace& space, const std::vector<RawMeasurement>& rows,
                               const BoostParams& params, ValidationScheme scheme, std::uint64_t seed) {
  if (rows.size() < kMinTrainingRows)
    throw ModelError("training needs at least " + std::to_string(kMinTrainingRows) + " rows, got " +
                     std::to_string(rows.size()));
  const auto data = make_dataset(space, rows);
  Rng validation_rng(derive_seed(seed, 0));
  ModelMetrics metrics;
  switch (scheme.kind) {
    case ValidationScheme::Kind::kfold:
      metrics = kfold_cv(data, scheme.k, params, validation_rng);
      break;
    case ValidationScheme::Kind::split:
      metrics = holdout_score(data, scheme.train_fraction, params, validation_rng);
      break;
    case ValidationScheme::Kind::none:
      break;
  }
  Rng fit_rng(derive_seed(seed, 1));
  auto model = fit_boosted(data, params, fit_rng);
  if (scheme.kind == ValidationScheme::Kind::none) {
    metrics.scheme = "train";
    metrics.n_samples = data.size();
    metrics.r2 = r2_score(model.predict_all(data.rows), data.targets);
  }
  return {std::move(model), std::move(metrics)};
}

// ---------------------------------------------------------------------------
// Serialization

using ordered_json = nlohmann::ordered_json;

namespace detail {

inline ordered_json config_json(const ParameterSpace& space, const Configuration& c) {
  ordered_json j = ordered_json::object();
  for (std::size_t i = 0; i < space.size() && i < c.values.size(); ++i)
    j[space.parameter(i).name] = space.parameter(i).format(c.values[i]);
  return j;
}

inline Configuration config_from_json(const ParameterSpace& space, const ordered_json& j) {
  Configuration c;
  if (j.empty()) return c;
  c.values.resize(space.size());
  for (std::size_t i = 0; i < space.size(); ++i)
    c.values[i] = space.parameter(i).code_of(j.at(space.parameter(i).name).get<std::string>());
  return c;
}

}  // namespace detail

/// Wall time is machine-dependent; leaving it out keeps report files
/// byte-identical across reruns.
inline ordered_json report_to_json(const ParameterSpace& space, const CampaignReport& r, bool with_timing = true) {
  ordered_json j;
  j["format"] = "hetune-report";
  j["version"] = 1;
  j["space"] = r.space;
  j["label"] = r.label;
  j["method"] = r.method;
  j["evaluator"] = r.evaluator;
  j["best"] = {{"config", detail::config_json(space, r.best)}, {"value", r.best_value}};
  j["evaluations_used"] = r.evaluations_used;
  j["cardinality"] = r.cardinality;
  j["budget_fraction"] = r.budget_fraction();
  if (with_timing) j["wall_time_s"] = r.wall_time_s;
  if (r.params) {
    const auto& p = *r.params;
    j["anneal"] = {{"initial_temperature", p.initial_temperature},
                   {"cooling_factor", p.cooling_factor},
                   {"evaluation_budget", p.evaluation_budget ? ordered_json(*p.evaluation_budget) : ordered_json()},
                   {"seed", p.seed},
                   {"delta_scale", p.delta_scale}};
  }
  ordered_json recs = ordered_json::array();
  for (const auto& e : r.records) recs.push_back({{"config", detail::config_json(space, e.config)}, {"value", e.value}});
  j["records"] = std::move(recs);
  if (r.trace) {
    const auto& t = *r.trace;
    ordered_json seeds = ordered_json::array();
    for (const auto& s : t.seeds)
      seeds.push_back({{"role", s.role}, {"config", detail::config_json(space, s.config)}, {"value", s.value}});
    ordered_json steps = ordered_json::array();
    for (const auto& s : t.steps)
      steps.push_back({{"index", s.index},
                       {"T", s.temperature},
                       {"candidate", detail::config_json(space, s.candidate)},
                       {"value", s.value},
                       {"probability", s.probability},
                       {"accepted", s.accepted},
                       {"cached", s.cached},
                       {"best", s.best_value}});
    j["trace"] = {{"cooling_factor", t.cooling_factor},
                  {"final_temperature", t.final_temperature},
                  {"evaluations_used", t.evaluations_used},
                  {"winner", {{"config", detail::config_json(space, t.winner)}, {"value", t.winner_value}}},
                  {"seeds", std::move(seeds)},
                  {"steps", std::move(steps)}};
  }
  return j;
}

inline CampaignReport report_from_json(const ParameterSpace& space, const ordered_json& j) {
  try {
    if (j.at("format").get<std::string>() != "hetune-report") throw DataFormatError("<report>", 0, "not a report");
    CampaignReport r;
    r.space = j.at("space").get<std::string>();
    if (r.space != space.name())
      throw DataFormatError("<report>", 0, "report is for space '" + r.space + "', not '" + space.name() + "'");
    r.label = j.at("label").get<std::string>();
    r.method = j.at("method").get<std::string>();
    r.evaluator = j.at("evaluator").get<std::string>();
    r.best = detail::config_from_json(space, j.at("best").at("config"));
    r.best_value = j.at("best").at("value").get<double>();
    r.evaluations_used = j.at("evaluations_used").get<std::size_t>();
    r.cardinality = j.at("cardinality").get<std::uint64_t>();
    r.wall_time_s = j.value("wall_time_s", 0.0);
    if (j.contains("anneal")) {
      const auto& a = j.at("anneal");
      AnnealParams p;
      p.initial_temperature = a.at("initial_temperature").get<double>();
      p.cooling_factor = a.at("cooling_factor").get<double>();
      if (!a.at("evaluation_budget").is_null()) p.evaluation_budget = a.at("evaluation_budget").get<std::size_t>();
      p.seed = a.at("seed").get<std::uint64_t>();
      p.delta_scale = a.at("delta_scale").get<double>();
      r.params = p;
    }
    for (const auto& e : j.at("records"))
      r.records.push_back({detail::config_from_json(space, e.at("config")), e.at("value").get<double>()});
    if (j.contains("trace")) {
      const auto& tj = j.at("trace");
      SearchTrace t;
      t.cooling_factor = tj.at("cooling_factor").get<double>();
      t.final_temperature = tj.at("final_temperature").get<double>();
      t.evaluations_used = tj.at("evaluations_used").get<std::size_t>();
      t.winner = detail::config_from_json(space, tj.at("winner").at("config"));
      t.winner_value = tj.at("winner").at("value").get<double>();
      for (const auto& s : tj.at("seeds"))
        t.seeds.push_back({s.at("role").get<std::string>(), detail::config_from_json(space, s.at("config")),
                           s.at("value").get<double>()});
      for (const auto& s : tj.at("steps")) {
        SearchStep st;
        st.index = s.at("index").get<std::size_t>();
        st.temperature = s.at("T").get<double>();
        st.candidate = detail::config_from_json(space, s.at("candidate"));
        st.value = s.at("value").get<double>();
        st.probability = s.at("probability").get<double>();
        st.accepted = s.at("accepted").get<bool>();
        st.cached = s.at("cached").get<bool>();
        st.best_value = s.at("best").get<double>();
        t.steps.push_back(std::move(st));
      }
      r.trace = std::move(t);
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw DataFormatError("<report>", 0, std::string("malformed report: ") + e.what());
  } catch (const EncodingError& e) {
    throw DataFormatError("<report>", 0, std::string("malformed report: ") + e.what());
  }
}

inline bool same_report(const CampaignReport& a, const CampaignReport& b) {
  auto key = [](const CampaignReport& r) {
    return std::tie(r.space, r.label, r.method, r.best, r.best_value, r.evaluations_used, r.cardinality, r.evaluator,
                    r.records);
  };
  if (key(a) != key(b) || a.params.has_value() != b.params.has_value() || a.trace.has_value() != b.trace.has_value())
    return false;
  if (a.params) {
    const auto &p = *a.params, &q = *b.params;
    if (std::tie(p.initial_temperature, p.cooling_factor, p.evaluation_budget, p.seed, p.delta_scale) !=
        std::tie(q.initial_temperature, q.cooling_factor, q.evaluation_budget, q.seed, q.delta_scale))
      return false;
  }
  if (a.trace) {
    const auto &s = *a.trace, &t = *b.trace;
    if (std::tie(s.winner, s.winner_value, s.evaluations_used, s.cooling_factor, s.final_temperature) !=
            std::tie(t.winner, t.winner_value, t.evaluations_used, t.cooling_factor, t.final_temperature) ||
        s.seeds.size() != t.seeds.size() || s.steps.size() != t.steps.size())
      return false;
    for (std::size_t i = 0; i < s.seeds.size(); ++i)
      if (std::tie(s.seeds[i].role, s.seeds[i].config, s.seeds[i].value) !=
          std::tie(t.seeds[i].role, t.seeds[i].config, t.seeds[i].value))
        return false;
    for (std::size_t i = 0; i < s.steps.size(); ++i) {
      const auto &x = s.steps[i], &y = t.steps[i];
      if (std::tie(x.index, x.temperature, x.candidate, x.value, x.probability, x.accepted, x.cached, x.best_value) !=
          std::tie(y.index, y.temperature, y.candidate, y.value, y.probability, y.accepted, y.cached, y.best_value))
        return false;
    }
  }
  return true;
}

inline ordered_json compare_to_json(const CompareSummary& s) {
  ordered_json rows = ordered_json::array();
  for (const auto& r : s.rows)
    rows.push_back({{"label", r.label},
                    {"em", r.em_value},
                    {"aml", r.aml_value},
                    {"abs_difference", r.abs_difference},
                    {"signed_difference", r.signed_difference},
                    {"aml_fraction_of_em", r.aml_fraction_of_em ? ordered_json(*r.aml_fraction_of_em) : ordered_json()},
                    {"em_evaluations", r.em_evaluations},
                    {"aml_evaluations", r.aml_evaluations}});
  return {{"rows", std::move(rows)},
          {"summary",
           {{"mean_abs_difference", s.mean_abs_difference},
            {"max_abs_difference", s.max_abs_difference},
            {"mean_fraction", s.mean_fraction ? ordered_json(*s.mean_fraction) : ordered_json()},
            {"em_evaluations", s.em_evaluations},
            {"aml_evaluations", s.aml_evaluations}}}};
}

}  // namespace hetune
