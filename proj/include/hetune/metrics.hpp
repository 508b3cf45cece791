#pragma once

// Performance and energy metrics of one hybrid CPU + accelerator run.
// Units are fixed by field names: MB (10^6 bytes), s, J, W, MB/s, MB/J.

#include <algorithm>
#include <cmath>
#include <string>

#include "hetune/config_space.hpp"
#include "hetune/error.hpp"

namespace hetune {

struct RawMeasurement {
  Configuration config;
  double workload_mb = 0;
  double cpu_time_s = 0;
  double acc_time_s = 0;  // includes host <-> device transfers
  double cpu_energy_j = 0;
  double acc_energy_j = 0;
  double cpu_workload_mb = 0;
  double acc_workload_mb = 0;

  friend bool operator==(const RawMeasurement&, const RawMeasurement&) = default;
};

struct UnitPower {
  double cpu_w = 0;
  double acc_w = 0;
  double total_w = 0;
};

struct DerivedMetrics {
  double time_s = 0;
  double throughput_mbps = 0;
  double cpu_throughput_mbps = 0;
  double acc_throughput_mbps = 0;
  double energy_j = 0;
  double cpu_power_w = 0;
  double acc_power_w = 0;
  double power_w = 0;
  double energy_efficiency = 0;  // MB/J
};

/// Throws InvalidMeasurement when the record breaks its invariants: negative
/// or non-finite quantities, unit workloads not summing to the total, or an
/// idle unit reporting time or energy.
inline void check_measurement(const RawMeasurement& m) {
  const double fields[] = {m.workload_mb,  m.cpu_time_s,      m.acc_time_s,     m.cpu_energy_j,
                           m.acc_energy_j, m.cpu_workload_mb, m.acc_workload_mb};
  for (double v : fields)
    if (!std::isfinite(v) || v < 0) throw InvalidMeasurement("measurement fields must be finite and non-negative");
  const double sum = m.cpu_workload_mb + m.acc_workload_mb;
  if (std::abs(sum - m.workload_mb) > 1e-9 * std::max(1.0, m.workload_mb))
    throw InvalidMeasurement("cpu_workload_mb + acc_workload_mb must equal workload_mb");
  if (m.cpu_workload_mb == 0 && (m.cpu_time_s != 0 || m.cpu_energy_j != 0))
    throw InvalidMeasurement("idle CPU must report zero time and energy");
  if (m.acc_workload_mb == 0 && (m.acc_time_s != 0 || m.acc_energy_j != 0))
    throw InvalidMeasurement("idle accelerator must report zero time and energy");
}

/// Wall time: the slower of the two units.
inline double exec_time(const RawMeasurement& m) { return std::max(m.cpu_time_s, m.acc_time_s); }

inline double throughput(const RawMeasurement& m) {
  const double t = exec_time(m);
  if (t == 0) {
    if (m.workload_mb != 0) throw InvalidMeasurement("nonzero workload processed in zero time");
    return 0;
  }
  return m.workload_mb / t;
}

/// Per-unit throughput; a unit that did not run reports 0 MB/s.
inline double cpu_throughput(const RawMeasurement& m) {
  return m.cpu_time_s > 0 ? m.cpu_workload_mb / m.cpu_time_s : 0.0;
}

inline double acc_throughput(const RawMeasurement& m) {
  return m.acc_time_s > 0 ? m.acc_workload_mb / m.acc_time_s : 0.0;
}

inline double energy(const RawMeasurement& m) { return m.cpu_energy_j + m.acc_energy_j; }

/// Average power of each unit over its own busy time, and their sum. The sum
/// is not the physical average system power when the units finish at
/// different times; it is the quantity the efficiency metric is defined on.
inline UnitPower power(const RawMeasurement& m) {
  auto unit = [](double e, double t, const char* name) {
    if (t == 0) {
      if (e != 0) throw InvalidMeasurement(std::string(name) + " reports energy with zero time");
      return 0.0;
    }
    return e / t;
  };
  UnitPower p;
  p.cpu_w = unit(m.cpu_energy_j, m.cpu_time_s, "CPU");
  p.acc_w = unit(m.acc_energy_j, m.acc_time_s, "accelerator");
  p.total_w = p.cpu_w + p.acc_w;
  return p;
}

inline double energy_efficiency(const RawMeasurement& m) {
  const double p = power(m).total_w;
  if (p == 0) throw UndefinedEfficiency("energy efficiency undefined: total power is zero");
  return throughput(m) / p;
}

inline DerivedMetrics derive_all(const RawMeasurement& m) {
  check_measurement(m);
  DerivedMetrics d;
  d.time_s = exec_time(m);
  d.throughput_mbps = throughput(m);
  d.cpu_throughput_mbps = cpu_throughput(m);
  d.acc_throughput_mbps = acc_throughput(m);
  d.energy_j = energy(m);
  const auto p = power(m);
  d.cpu_power_w = p.cpu_w;
  d.acc_power_w = p.acc_w;
  d.power_w = p.total_w;
  if (p.total_w == 0) throw UndefinedEfficiency("energy efficiency undefined: total power is zero");
  d.energy_efficiency = d.throughput_mbps / d.power_w;
  return d;
}

}  // namespace hetune
