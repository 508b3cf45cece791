#pragma once

// Synthetic analytic evaluators standing in for real program runs.
//
// ida-pcc: pairwise correlation over an R x C matrix. Row i is compared with
// every later row, so the work per row shrinks linearly; the CPU takes the
// first k = ceil(CPU-W * R / 100) rows (the heavy ones) and the GPU the rest.
//
// emil-pm: pattern matching over an input split linearly between host and
// accelerator, with thread-count scaling, affinity multipliers and a seeded
// ruggedness term that makes the landscape multi-modal.

#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <string_view>

#include "hetune/config_space.hpp"
#include "hetune/error.hpp"
#include "hetune/evaluators.hpp"
#include "hetune/measurement_log.hpp"
#include "hetune/metrics.hpp"
#include "hetune/rng.hpp"

namespace hetune {

enum class OracleFamily { ida_pcc, emil_pm };

inline std::string_view to_string(OracleFamily f) { return f == OracleFamily::ida_pcc ? "ida-pcc" : "emil-pm"; }

struct OracleSpec {
  OracleFamily family = OracleFamily::ida_pcc;

  // ida-pcc workload and constants.
  double rows = 1024;
  double cols = 8192;
  double cell_cost_s = 1e-9;       // per comparison cell, one CPU thread
  double cpu_parallelism = 24;     // host threads
  double cache_pressure = 0.5;     // CPU slowdown growing with its row share
  double gpu_speedup = 20;         // c_gpu = c_cpu / gpu_speedup
  double bandwidth_bps = 4e9;      // host -> device, bytes per second
  double cpu_power_w = 100;
  double gpu_idle_power_w = 5;
  double gpu_dynamic_power_w = 800;  // scaled by the cube of the GPU row share
  double transfer_power_w = 5;

  // emil-pm workload and constants.
  double input_mb = 1024;
  double cpu_rate_mbps = 0.9;      // per scaled thread
  double acc_rate_mbps = 0.55;
  double cpu_latency_s = 0.05;
  double acc_latency_s = 0.4;
  double acc_bandwidth_mbps = 6000;
  double cpu_base_power_w = 20;
  double cpu_thread_power_w = 3.5;
  double acc_base_power_w = 60;
  double acc_thread_power_w = 0.6;
  double acc_transfer_power_w = 10;
  double cpu_contention = 1.0;     // slowdown per unit of CPU share
  double acc_contention = 2.0;     // slowdown per unit of accelerator share
  double ruggedness = 0.10;        // peak-to-peak relative perturbation of compute time
  std::uint64_t seed = 0;

  /// Throws Error when a constant is non-positive (ruggedness may be zero).
  void check() const {
    const double positive[] = {rows, cols, cell_cost_s, cpu_parallelism, gpu_speedup, bandwidth_bps, cpu_power_w,
                               gpu_idle_power_w, gpu_dynamic_power_w, transfer_power_w, input_mb, cpu_rate_mbps,
                               acc_rate_mbps, cpu_latency_s, acc_latency_s, acc_bandwidth_mbps, cpu_base_power_w,
                               cpu_thread_power_w, acc_base_power_w, acc_thread_power_w, acc_transfer_power_w,
                               cpu_contention, acc_contention};
    for (double v : positive)
      if (!(v > 0) || !std::isfinite(v)) throw Error("oracle constants must be positive and finite");
    if (cache_pressure < 0 || !std::isfinite(cache_pressure)) throw Error("cache pressure must be non-negative");
    if (!(ruggedness >= 0 && ruggedness < 1)) throw Error("ruggedness must lie in [0, 1)");
    if (rows < 2 || rows != std::floor(rows)) throw Error("rows must be an integer >= 2");
    if (cols != std::floor(cols)) throw Error("cols must be an integer");
  }
};

/// Parses "ida-pcc" or "emil-pm", optionally followed by ":key=value,...".
/// Keys are the OracleSpec field names.
inline OracleSpec parse_oracle_spec(std::string_view text) {
  OracleSpec s;
  const auto colon = text.find(':');
  const auto family = text.substr(0, colon);
  if (family == "ida-pcc") {
    s.family = OracleFamily::ida_pcc;
  } else if (family == "emil-pm") {
    s.family = OracleFamily::emil_pm;
  } else {
    throw Error("unknown oracle '" + std::string(family) + "' (expected ida-pcc or emil-pm)");
  }
  std::map<std::string_view, double*> fields = {
      {"rows", &s.rows},
      {"cols", &s.cols},
      {"cell_cost_s", &s.cell_cost_s},
      {"cpu_parallelism", &s.cpu_parallelism},
      {"cache_pressure", &s.cache_pressure},
      {"gpu_speedup", &s.gpu_speedup},
      {"bandwidth_bps", &s.bandwidth_bps},
      {"cpu_power_w", &s.cpu_power_w},
      {"gpu_idle_power_w", &s.gpu_idle_power_w},
      {"gpu_dynamic_power_w", &s.gpu_dynamic_power_w},
      {"transfer_power_w", &s.transfer_power_w},
      {"input_mb", &s.input_mb},
      {"cpu_rate_mbps", &s.cpu_rate_mbps},
      {"acc_rate_mbps", &s.acc_rate_mbps},
      {"cpu_latency_s", &s.cpu_latency_s},
      {"acc_latency_s", &s.acc_latency_s},
      {"acc_bandwidth_mbps", &s.acc_bandwidth_mbps},
      {"cpu_base_power_w", &s.cpu_base_power_w},
      {"cpu_thread_power_w", &s.cpu_thread_power_w},
      {"acc_base_power_w", &s.acc_base_power_w},
      {"acc_thread_power_w", &s.acc_thread_power_w},
      {"acc_transfer_power_w", &s.acc_transfer_power_w},
      {"cpu_contention", &s.cpu_contention},
      {"acc_contention", &s.acc_contention},
      {"ruggedness", &s.ruggedness},
  };
  auto rest = colon == std::string_view::npos ? std::string_view{} : text.substr(colon + 1);
  while (!rest.empty()) {
    const auto comma = rest.find(',');
    const auto item = rest.substr(0, comma);
    rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
    const auto eq = item.find('=');
    if (eq == std::string_view::npos) throw Error("oracle option '" + std::string(item) + "' is not key=value");
    const auto key = item.substr(0, eq);
    const auto val = item.substr(eq + 1);
    double v = 0;
    if (!detail::parse_double(val, v)) throw Error("oracle option '" + std::string(key) + "' is not a number");
    if (key == "seed") {
      if (v < 0 || v != std::floor(v)) throw Error("oracle seed must be a non-negative integer");
      s.seed = static_cast<std::uint64_t>(v);
    } else if (auto it = fields.find(key); it != fields.end()) {
      *it->second = v;
    } else {
      throw Error("unknown oracle option '" + std::string(key) + "'");
    }
  }
  s.check();
  return s;
}

// ---------------------------------------------------------------------------

class IdaPccOracle final : public MeasuringEvaluator {
 public:
  IdaPccOracle(OracleSpec spec, ParameterSpace space)
      : spec_(spec), space_(std::move(space)), cpu_w_(space_.require("CPU-W")) {
    spec_.check();
  }

  const OracleSpec& spec() const noexcept { return spec_; }

  /// Rows the CPU processes at CPU-W = w.
  std::uint64_t cpu_rows(std::int64_t w) const {
    const auto r = static_cast<std::uint64_t>(spec_.rows);
    return (static_cast<std::uint64_t>(w) * r + 99) / 100;
  }

  /// Pair comparisons over the first k rows: sum of (R - i - 1) for i < k.
  std::uint64_t work_of_first(std::uint64_t k) const {
    const auto r = static_cast<std::uint64_t>(spec_.rows);
    return k * r - k * (k + 1) / 2;
  }

  std::uint64_t total_work() const {
    const auto r = static_cast<std::uint64_t>(spec_.rows);
    return r * (r - 1) / 2;
  }

  RawMeasurement measure(const Configuration& c) const override {
    require_valid(space_, c);
    const std::int64_t w = c.values[cpu_w_];
    if (w < 0 || w > 100) throw SpaceError("CPU-W must lie in 0..100");
    const double rows = spec_.rows;
    const double cols = spec_.cols;
    const auto k = cpu_rows(w);
    const auto cpu_work = work_of_first(k);
    const auto acc_work = total_work() - cpu_work;
    const double share = static_cast<double>(k) / rows;

    RawMeasurement m;
    m.config = c;
    m.workload_mb = rows * cols * 4 / 1e6;
    m.cpu_workload_mb = m.workload_mb * share;
    m.acc_workload_mb = m.workload_mb - m.cpu_workload_mb;
    if (cpu_work > 0) {
      m.cpu_time_s = static_cast<double>(cpu_work) * cols * spec_.cell_cost_s / spec_.cpu_parallelism *
                     (1 + spec_.cache_pressure * share);
      m.cpu_energy_j = spec_.cpu_power_w * m.cpu_time_s;
    }
    if (acc_work > 0) {
      const double compute = static_cast<double>(acc_work) * cols * spec_.cell_cost_s / spec_.gpu_speedup;
      const double transfer = rows * cols * 4 / spec_.bandwidth_bps;
      const double u = 1 - share;
      m.acc_time_s = compute + transfer;
      m.acc_energy_j =
          (spec_.gpu_idle_power_w + spec_.gpu_dynamic_power_w * u * u * u) * compute + spec_.transfer_power_w * transfer;
    }
    if (acc_work == 0) {  // remaining rows (if any) have nothing left to compare
      m.cpu_workload_mb = m.workload_mb;
      m.acc_workload_mb = 0;
    }
    return m;
  }

  std::string describe() const override {
    return "oracle(ida-pcc, rows=" + format_double(spec_.rows) + ", cols=" + format_double(spec_.cols) + ")";
  }

 private:
  OracleSpec spec_;
  ParameterSpace space_;
  std::size_t cpu_w_;
};

// ---------------------------------------------------------------------------

class EmilPmOracle final : public MeasuringEvaluator {
 public:
  EmilPmOracle(OracleSpec spec, ParameterSpace space)
      : spec_(spec),
        space_(std::move(space)),
        cpu_t_(space_.require("CPU-T")),
        acc_t_(space_.require("ACC-T")),
        cpu_a_(space_.require("CPU-A")),
        acc_a_(space_.require("ACC-A")),
        cpu_w_(space_.require("CPU-W")) {
    spec_.check();
  }

  const OracleSpec& spec() const noexcept { return spec_; }

  /// Host scaling: sublinear up to the 24 physical cores, then hyper-threads
  /// cost 6% per extra 12 threads.
  static double cpu_scaling(double threads) {
    double s = std::pow(std::min(threads, 24.0), 0.9);
    if (threads > 24) s *= std::pow(0.94, (threads - 24) / 12);
    return s;
  }

  /// Accelerator scaling; the fourth hardware thread per core costs 3%.
  static double acc_scaling(double threads) {
    return std::pow(threads, 0.85) * (threads >= 240 ? 0.97 : 1.0);
  }

  /// Affinity multipliers indexed by code (none/scatter/compact on host,
  /// balanced/scatter/compact on the accelerator). At 240 accelerator threads
  /// compact packing wins.
  static double cpu_affinity(std::int64_t code) {
    static constexpr double f[] = {1.0, 1.08, 0.96};
    return f[code];
  }
  static double acc_affinity(std::int64_t code, double threads) {
    static constexpr double f[] = {1.0, 0.95, 0.9};
    static constexpr double full[] = {0.97, 0.95, 1.05};
    return threads >= 240 ? full[code] : f[code];
  }

  /// Deterministic value in [0, 1) from the seed and configuration.
  double rugged_hash(const Configuration& c) const {
    std::uint64_t h = derive_seed(spec_.seed, 0);
    for (auto v : c.values) h = derive_seed(h, static_cast<std::uint64_t>(v));
    return static_cast<double>(h >> 11) * 0x1.0p-53;
  }

  RawMeasurement measure(const Configuration& c) const override {
    require_valid(space_, c);
    const double ct = static_cast<double>(c.values[cpu_t_]);
    const double at = static_cast<double>(c.values[acc_t_]);
    const auto ca = c.values[cpu_a_];
    const auto aa = c.values[acc_a_];
    if (ct <= 0 || at <= 0) throw SpaceError("thread counts must be positive");
    if (ca < 0 || ca > 2 || aa < 0 || aa > 2) throw SpaceError("affinity codes must lie in 0..2");
    const double w = static_cast<double>(c.values[cpu_w_]);
    if (w < 0 || w > 100) throw SpaceError("CPU-W must lie in 0..100");
    const double rugged = 1 + spec_.ruggedness * (rugged_hash(c) - 0.5);

    RawMeasurement m;
    m.config = c;
    m.workload_mb = spec_.input_mb;
    m.cpu_workload_mb = spec_.input_mb * w / 100;
    m.acc_workload_mb = w == 100 ? 0 : spec_.input_mb - m.cpu_workload_mb;
    if (m.cpu_workload_mb > 0) {
      const double compute = m.cpu_workload_mb / (spec_.cpu_rate_mbps * cpu_scaling(ct) * cpu_affinity(ca)) *
                             (1 + spec_.cpu_contention * w / 100) * rugged;
      m.cpu_time_s = spec_.cpu_latency_s + compute;
      m.cpu_energy_j = (spec_.cpu_base_power_w + spec_.cpu_thread_power_w * std::min(ct, 24.0)) * m.cpu_time_s;
    }
    if (m.acc_workload_mb > 0) {
      const double compute = m.acc_workload_mb / (spec_.acc_rate_mbps * acc_scaling(at) * acc_affinity(aa, at)) *
                             (1 + spec_.acc_contention * (100 - w) / 100) * rugged;
      const double transfer = m.acc_workload_mb / spec_.acc_bandwidth_mbps;
      m.acc_time_s = spec_.acc_latency_s + compute + transfer;
      m.acc_energy_j = (spec_.acc_base_power_w + spec_.acc_thread_power_w * at) * (spec_.acc_latency_s + compute) +
                       spec_.acc_transfer_power_w * transfer;
    }
    return m;
  }

  std::string describe() const override {
    return "oracle(emil-pm, input_mb=" + format_double(spec_.input_mb) +
           ", ruggedness=" + format_double(spec_.ruggedness) + ", seed=" + std::to_string(spec_.seed) + ")";
  }

 private:
  OracleSpec spec_;
  ParameterSpace space_;
  std::size_t cpu_t_, acc_t_, cpu_a_, acc_a_, cpu_w_;
};

inline std::unique_ptr<MeasuringEvaluator> make_oracle(const OracleSpec& spec, const ParameterSpace& space) {
  if (spec.family == OracleFamily::ida_pcc) return std::make_unique<IdaPccOracle>(spec, space);
  return std::make_unique<EmilPmOracle>(spec, space);
}

}  // namespace hetune
