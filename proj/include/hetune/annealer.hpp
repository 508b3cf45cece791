#pragma once

// Simulated annealing over a discrete parameter space, maximizing the value an
// evaluator reports (energy efficiency, MB/J).
//
// The search first evaluates the CPU-only and accelerator-only variants of the
// initial configuration, then the initial configuration itself, then proposes
// one-parameter moves while the temperature stays above 1, cooling
// geometrically after every proposal.

#include <cmath>
#include <concepts>
#include <cstdint>
#include <exception>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "hetune/config_space.hpp"
#include "hetune/error.hpp"
#include "hetune/rng.hpp"

namespace hetune {

struct AnnealParams {
  double initial_temperature = 1000.0;
  double cooling_factor = 0.95;
  /// Maximum number of distinct evaluations inside the loop (the two boundary
  /// seeds and the initial point are not counted). When set, the cooling
  /// factor becomes T0^(-1/budget) so the schedule ends at the budget.
  std::optional<std::size_t> evaluation_budget;
  std::uint64_t seed = 0;
  /// Relative differences are multiplied by this before entering exp(delta/T);
  /// 100 expresses them in percent of the incumbent best.
  double delta_scale = 100.0;

  /// Throws Error when T0 <= 1, alpha outside (0, 1), a zero budget or a
  /// non-positive delta scale.
  void check() const {
    if (!(initial_temperature > 1.0)) throw Error("initial temperature must exceed 1");
    if (!(cooling_factor > 0.0 && cooling_factor < 1.0)) throw Error("cooling factor must lie in (0, 1)");
    if (evaluation_budget && *evaluation_budget == 0) throw Error("evaluation budget must be positive");
    if (!(delta_scale > 0.0)) throw Error("delta scale must be positive");
  }

  double effective_cooling_factor() const {
    if (evaluation_budget) return std::pow(initial_temperature, -1.0 / static_cast<double>(*evaluation_budget));
    return cooling_factor;
  }
};

inline constexpr double kDeltaFloor = 1e-9;

/// Boltzmann acceptance for maximization. delta = scale * (candidate - current)
/// / max(|incumbent_best|, 1e-9); returns 1 for delta >= 0, else exp(delta / T).
inline double acceptance_probability(double current, double candidate, double temperature, double incumbent_best,
                                     double delta_scale = 1.0) {
  if (!std::isfinite(current) || !std::isfinite(candidate) || !std::isfinite(incumbent_best) ||
      !std::isfinite(temperature))
    throw Error("acceptance_probability: non-finite input");
  if (!(temperature > 0)) throw Error("acceptance_probability: temperature must be positive");
  const double delta = delta_scale * (candidate - current) / std::max(std::abs(incumbent_best), kDeltaFloor);
  if (delta >= 0) return 1.0;
  return std::clamp(std::exp(delta / temperature), 0.0, 1.0);
}

/// Consecutive already-evaluated proposals after which a budgeted search stops.
inline constexpr std::size_t kMaxIdleProposals = 10000;

inline double cooling_step(double temperature, double alpha) { return alpha * temperature; }

struct SearchStep {
  std::size_t index = 0;
  double temperature = 0;
  Configuration candidate;
  double value = 0;
  double probability = 0;
  bool accepted = false;
  bool cached = false;      // value came from the run's memo, no evaluation spent
  double best_value = 0;    // incumbent winner after this step
};

struct SeedEvaluation {
  std::string role;  // "cpu-only", "accelerator-only", "initial"
  Configuration config;
  double value = 0;
};

struct SearchTrace {
  std::vector<SeedEvaluation> seeds;
  std::vector<SearchStep> steps;
  Configuration winner;
  double winner_value = -std::numeric_limits<double>::infinity();
  std::size_t evaluations_used = 0;  // distinct evaluator calls
  double cooling_factor = 0;
  double final_temperature = 0;
};

/// Thrown when the evaluator fails mid-search; carries what was found so far.
class SearchAborted : public EvaluationError {
 public:
  SearchAborted(const std::string& what, SearchTrace partial, std::string output = {})
      : EvaluationError(what, std::move(output)), partial_(std::move(partial)) {}
  const SearchTrace& partial() const noexcept { return partial_; }

 private:
  SearchTrace partial_;
};

template <typename F>
concept ConfigurationEvaluator = std::invocable<F&, const Configuration&> &&
                                 std::convertible_to<std::invoke_result_t<F&, const Configuration&>, double>;

/// Runs the search. Evaluations are memoized per configuration; repeated
/// proposals reuse the stored value and do not count against the budget.
/// Ties for the winner keep the configuration found first.
template <ConfigurationEvaluator Evaluate>
SearchTrace anneal(const ParameterSpace& space, Evaluate&& evaluate, const AnnealParams& params) {
  params.check();
  if (space.free_parameters().empty()) throw Error("space '" + space.name() + "' has no free parameter");

  Rng rng(params.seed);
  SearchTrace trace;
  trace.cooling_factor = params.effective_cooling_factor();
  std::unordered_map<Configuration, double, ConfigurationHash> memo;

  auto value_of = [&](const Configuration& c, bool& cached) {
    if (auto it = memo.find(c); it != memo.end()) {
      cached = true;
      return it->second;
    }
    cached = false;
    double v = 0;
    try {
      v = static_cast<double>(evaluate(c));
    } catch (const EvaluationError& e) {
      throw SearchAborted("evaluation failed for " + format_configuration(space, c) + ": " + e.what(), trace,
                          e.output());
    } catch (const std::exception& e) {
      throw SearchAborted("evaluation failed for " + format_configuration(space, c) + ": " + e.what(), trace);
    }
    if (std::isnan(v)) throw SearchAborted("evaluator returned NaN for " + format_configuration(space, c), trace);
    ++trace.evaluations_used;
    memo.emplace(c, v);
    return v;
  };
  auto offer = [&](const Configuration& c, double v) {
    if (v > trace.winner_value) {
      trace.winner_value = v;
      trace.winner = c;
    }
  };

  Configuration x = random_config(space, rng);
  if (auto w = space.workload_parameter()) {
    const auto& dom = space.parameter(*w).values;
    Configuration cpu_only = x, acc_only = x;
    cpu_only.values[*w] = dom.back();
    acc_only.values[*w] = dom.front();
    space.fill_derived(cpu_only);
    space.fill_derived(acc_only);
    for (auto& [role, c] : {std::pair{"cpu-only", cpu_only}, std::pair{"accelerator-only", acc_only}}) {
      bool cached = false;
      const double v = value_of(c, cached);
      trace.seeds.push_back({role, c, v});
      offer(c, v);
    }
  }
  bool cached = false;
  double xv = value_of(x, cached);
  trace.seeds.push_back({"initial", x, xv});
  offer(x, xv);

  const std::size_t budget = params.evaluation_budget.value_or(std::numeric_limits<std::size_t>::max());
  const std::size_t spent_on_seeds = trace.evaluations_used;
  const bool can_move = [&] {
    for (auto i : space.free_parameters())
      if (space.parameter(i).values.size() > 1) return true;
    return false;
  }();

  // With a budget the schedule advances per fresh evaluation, so it ends when
  // the budget does; repeated proposals are free in both budget and time.
  const bool cool_per_evaluation = params.evaluation_budget.has_value();
  const std::uint64_t space_size = cardinality(space);
  std::size_t idle_streak = 0;
  double t = params.initial_temperature;
  while (can_move && t > 1.0 && trace.evaluations_used - spent_on_seeds < budget) {
    if (cool_per_evaluation && (memo.size() >= space_size || idle_streak >= kMaxIdleProposals)) break;
    SearchStep step;
    step.index = trace.steps.size();
    step.temperature = t;
    step.candidate = neighbor(space, x, rng);
    step.value = value_of(step.candidate, step.cached);
    step.probability = acceptance_probability(xv, step.value, t, trace.winner_value, params.delta_scale);
    step.accepted = step.value > xv || step.probability >= 1.0 || rng.uniform() < step.probability;
    if (step.accepted) {
      x = step.candidate;
      xv = step.value;
    }
    offer(step.candidate, step.value);
    step.best_value = trace.winner_value;
    trace.steps.push_back(std::move(step));
    idle_streak = trace.steps.back().cached ? idle_streak + 1 : 0;
    if (!cool_per_evaluation || !trace.steps.back().cached) t = cooling_step(t, trace.cooling_factor);
  }
  trace.final_temperature = t;
  return trace;
}

// ---------------------------------------------------------------------------
// Export

inline nlohmann::json assignment_json(const ParameterSpace& space, const Configuration& c) {
  nlohmann::json j = nlohmann::json::object();
  for (std::size_t i = 0; i < space.size(); ++i) j[space.parameter(i).name] = space.parameter(i).format(c.values[i]);
  return j;
}

/// One JSON object per line: a header record, the seed evaluations, every
/// step, and a closing winner record.
inline void write_trace_jsonl(std::ostream& out, const ParameterSpace& space, const SearchTrace& trace) {
  out << nlohmann::json{{"record", "header"},
                        {"space", space.name()},
                        {"cooling_factor", trace.cooling_factor},
                        {"steps", trace.steps.size()}}
             .dump()
      << '\n';
  for (const auto& s : trace.seeds)
    out << nlohmann::json{{"record", "seed"}, {"role", s.role}, {"candidate", assignment_json(space, s.config)},
                          {"value", s.value}}
               .dump()
        << '\n';
  for (const auto& s : trace.steps)
    out << nlohmann::json{{"record", "step"},
                          {"index", s.index},
                          {"T", s.temperature},
                          {"candidate", assignment_json(space, s.candidate)},
                          {"value", s.value},
                          {"probability", s.probability},
                          {"accepted", s.accepted},
                          {"cached", s.cached},
                          {"best", s.best_value}}
               .dump()
        << '\n';
  out << nlohmann::json{{"record", "winner"},
                        {"candidate", assignment_json(space, trace.winner)},
                        {"value", trace.winner_value},
                        {"evaluations_used", trace.evaluations_used}}
             .dump()
      << '\n';
}

}  // namespace hetune
