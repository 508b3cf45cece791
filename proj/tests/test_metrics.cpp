#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "hetune/metrics.hpp"

using namespace hetune;

namespace {

RawMeasurement both_busy(double cpu_mb, double acc_mb, double ct, double at, double ce, double ae) {
  RawMeasurement m;
  m.workload_mb = cpu_mb + acc_mb;
  m.cpu_workload_mb = cpu_mb;
  m.acc_workload_mb = acc_mb;
  m.cpu_time_s = ct;
  m.acc_time_s = at;
  m.cpu_energy_j = ce;
  m.acc_energy_j = ae;
  return m;
}

bool close(double a, double b, double rel) { return std::abs(a - b) <= rel * std::max(std::abs(a), std::abs(b)); }

}  // namespace

TEST(Metrics, TimeIsSlowestUnit) {
  const auto m = both_busy(10, 30, 2.0, 3.0, 100, 300);
  EXPECT_EQ(exec_time(m), 3.0);
  EXPECT_DOUBLE_EQ(throughput(m), 40.0 / 3.0);
}

TEST(Metrics, PerUnitThroughput) {
  const auto m = both_busy(10, 30, 2.0, 3.0, 100, 300);
  EXPECT_DOUBLE_EQ(cpu_throughput(m), 5.0);
  EXPECT_DOUBLE_EQ(acc_throughput(m), 10.0);
}

TEST(Metrics, PowerIsSumOfUnitAverages) {
  const auto m = both_busy(10, 30, 2.0, 4.0, 100, 600);
  const auto p = power(m);
  EXPECT_DOUBLE_EQ(p.cpu_w, 50.0);
  EXPECT_DOUBLE_EQ(p.acc_w, 150.0);
  EXPECT_DOUBLE_EQ(p.total_w, 200.0);
  // 40 MB in 4 s over 200 W.
  EXPECT_DOUBLE_EQ(energy_efficiency(m), 10.0 / 200.0);
}

TEST(Metrics, IdleAcceleratorReducesToCpu) {
  const auto m = both_busy(64, 0, 2.0, 0, 80, 0);
  const auto d = derive_all(m);
  EXPECT_EQ(d.acc_throughput_mbps, 0);
  EXPECT_EQ(d.acc_power_w, 0);
  EXPECT_DOUBLE_EQ(d.time_s, 2.0);
  EXPECT_DOUBLE_EQ(d.throughput_mbps, 32.0);
  EXPECT_DOUBLE_EQ(d.energy_efficiency, 32.0 / 40.0);
}

TEST(Metrics, IdleCpuReducesToAccelerator) {
  const auto m = both_busy(0, 64, 0, 4.0, 0, 200);
  const auto d = derive_all(m);
  EXPECT_EQ(d.cpu_throughput_mbps, 0);
  EXPECT_DOUBLE_EQ(d.energy_efficiency, 16.0 / 50.0);
}

TEST(Metrics, ZeroPowerIsUndefined) {
  const auto m = both_busy(10, 10, 1.0, 1.0, 0, 0);
  EXPECT_THROW(energy_efficiency(m), UndefinedEfficiency);
  EXPECT_THROW(derive_all(m), UndefinedEfficiency);
}

TEST(Metrics, EnergyWithoutTimeIsInvalid) {
  auto m = both_busy(10, 10, 0, 1.0, 5, 5);
  EXPECT_THROW(power(m), InvalidMeasurement);
}

TEST(Metrics, WorkWithoutTimeIsInvalid) {
  RawMeasurement m;
  m.workload_mb = 5;
  m.cpu_workload_mb = 5;
  EXPECT_THROW(throughput(m), InvalidMeasurement);
}

TEST(Metrics, InvariantChecks) {
  EXPECT_THROW(check_measurement(both_busy(10, 10, -1, 1, 1, 1)), InvalidMeasurement);
  auto split = both_busy(10, 10, 1, 1, 1, 1);
  split.workload_mb = 25;
  EXPECT_THROW(check_measurement(split), InvalidMeasurement);
  EXPECT_THROW(check_measurement(both_busy(0, 10, 1, 1, 1, 1)), InvalidMeasurement);
  EXPECT_THROW(check_measurement(both_busy(10, 10, NAN, 1, 1, 1)), InvalidMeasurement);
  EXPECT_NO_THROW(check_measurement(both_busy(10, 10, 1, 1, 1, 1)));
}

TEST(MetricsProperty, IdentitiesOverRandomMeasurements) {
  std::mt19937_64 gen(20240601);
  std::uniform_real_distribution<double> mb(0.1, 5000), t(1e-3, 100), e(1e-2, 1e5);
  std::uniform_int_distribution<int> idle(0, 5);
  const double tol = 1e-12;
  for (int i = 0; i < 10000; ++i) {
    const int which = idle(gen);  // 0: CPU idle, 1: accelerator idle, else both busy
    RawMeasurement m;
    if (which != 0) {
      m.cpu_workload_mb = mb(gen);
      m.cpu_time_s = t(gen);
      m.cpu_energy_j = e(gen);
    }
    if (which != 1) {
      m.acc_workload_mb = mb(gen);
      m.acc_time_s = t(gen);
      m.acc_energy_j = e(gen);
    }
    m.workload_mb = m.cpu_workload_mb + m.acc_workload_mb;
    const auto d = derive_all(m);

    const double slowest = std::max(m.cpu_time_s, m.acc_time_s);
    ASSERT_EQ(d.time_s, slowest);
    ASSERT_GE(d.time_s, m.cpu_time_s);
    ASSERT_GE(d.time_s, m.acc_time_s);
    ASSERT_TRUE(close(d.throughput_mbps, m.workload_mb / slowest, tol));
    ASSERT_TRUE(close(d.energy_j, m.cpu_energy_j + m.acc_energy_j, tol));
    const double pc = m.cpu_time_s > 0 ? m.cpu_energy_j / m.cpu_time_s : 0;
    const double pa = m.acc_time_s > 0 ? m.acc_energy_j / m.acc_time_s : 0;
    ASSERT_TRUE(close(d.power_w, pc + pa, tol));
    ASSERT_TRUE(close(d.energy_efficiency, d.throughput_mbps / d.power_w, tol));
    ASSERT_TRUE(close(d.energy_efficiency, (m.workload_mb / slowest) / (pc + pa), tol));
    if (which == 0) {
      ASSERT_EQ(d.cpu_throughput_mbps, 0);
      ASSERT_EQ(d.cpu_power_w, 0);
      ASSERT_TRUE(close(d.energy_efficiency, (m.acc_workload_mb / m.acc_time_s) / pa, tol));
    }
    if (which == 1) {
      ASSERT_EQ(d.acc_throughput_mbps, 0);
      ASSERT_EQ(d.acc_power_w, 0);
      ASSERT_TRUE(close(d.energy_efficiency, (m.cpu_workload_mb / m.cpu_time_s) / pc, tol));
    }
  }
}
