#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <thread>

#include <gtest/gtest.h>

#include "hetune/campaign.hpp"
#include "hetune/evaluators.hpp"
#include "hetune/oracles.hpp"

using namespace hetune;
namespace fs = std::filesystem;

namespace {

Configuration ida(std::int64_t w) { return {{w, 100 - w}}; }

std::string fixture(const std::string& name) { return std::string(HETUNE_DATA_DIR) + "/fixtures/" + name; }

MeasurementLog parse(const ParameterSpace& s, const std::string& text) {
  std::istringstream in(text);
  return read_log(in, s);
}

fs::path scratch_dir(const std::string& tag) {
  auto d = fs::temp_directory_path() / ("hetune_eval_" + tag + "_" + std::to_string(::getpid()));
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

// Writes an executable shell script that prints a measurement row for the
// CPU-W given as $1 (efficiency = 100 MB / 20 J = 5).
fs::path write_stub(const fs::path& dir, const std::string& body) {
  const auto p = dir / "stub.sh";
  std::ofstream(p) << "#!/bin/sh\n" << body;
  fs::permissions(p, fs::perms::owner_all);
  return p;
}

double ida_eff(const IdaPccOracle& o, std::int64_t w) { return energy_efficiency(o.measure(ida(w))); }

}  // namespace

// --- model -----------------------------------------------------------------

TEST(ModelEvaluatorTest, MatchesDirectPrediction) {
  const auto s = ida_space();
  const IdaPccOracle oracle(OracleSpec{}, s);
  const auto rows = gen_dataset(oracle, s, Sampling::all(), 0);
  BoostParams bp;
  bp.n_estimators = 10;
  auto model = std::make_shared<const BoostedModel>(fit_boosted(make_dataset(s, rows), bp, 3));
  ModelEvaluator ev(model, s, rows.front().workload_mb);
  for (std::int64_t w = 0; w <= 100; ++w) {
    const std::vector<double> x = {static_cast<double>(w), static_cast<double>(100 - w), rows.front().workload_mb};
    ASSERT_EQ(ev.evaluate(ida(w)), model->predict(x));
  }
  EXPECT_EQ(ev.evaluation_count(), 101u);
}

TEST(ModelEvaluatorTest, RejectsForeignSpace) {
  const auto s = ida_space();
  const IdaPccOracle oracle(OracleSpec{}, s);
  BoostParams bp;
  bp.n_estimators = 3;
  auto model = std::make_shared<const BoostedModel>(
      fit_boosted(make_dataset(s, gen_dataset(oracle, s, Sampling::all(), 0)), bp, 1));
  EXPECT_THROW(ModelEvaluator(model, emil_space(), 100), FeatureMismatch);
  ModelEvaluator ev(model, s, 100);
  EXPECT_THROW(ev.evaluate(Configuration{{1, 2, 3}}), FeatureMismatch);
}

// --- replay ----------------------------------------------------------------

TEST(ReplayEvaluatorTest, FixtureReproducesRecordedEfficiency) {
  const auto s = ida_space();
  std::ifstream in(fixture("ida_em_vs_aml.csv"));
  ASSERT_TRUE(in);
  const auto log = read_log(in, s);
  ReplayEvaluator ev(s, log, "512x32768");
  // Row recorded at CPU-W = 20: 67.108864 MB over 7.4118... + 13.7648... J.
  const double expected = 67.108864 / (7.411834143262858 + 13.764834837488168);
  EXPECT_NEAR(ev.evaluate(ida(20)), expected, 1e-12);
  EXPECT_NEAR(ev.evaluate(ida(20)), 3.169, 1e-9);
  EXPECT_THROW(ev.evaluate(ida(21)), NotRecorded);
  EXPECT_EQ(ev.evaluation_count(), 3u);
}

TEST(ReplayEvaluatorTest, DuplicateRowsAreAmbiguous) {
  const auto s = ida_space();
  const std::string row = "40,60,10,1,1,2,3,4,6\n";
  ReplayEvaluator ev(s, parse(s, log_header(s) + "\n" + row + row));
  EXPECT_THROW(ev.evaluate(ida(40)), AmbiguousRecord);
}

TEST(ReplayEvaluatorTest, IdleUnitRow) {
  const auto s = ida_space();
  ReplayEvaluator ev(s, parse(s, log_header(s) + "\n100,0,10,2,0,8,0,10,0\n"));
  EXPECT_DOUBLE_EQ(ev.evaluate(ida(100)), 10.0 / 8.0);
}

TEST(ReplayEvaluatorTest, LabelFilter) {
  const auto s = ida_space();
  const auto text = log_header(s, true) + "\na,40,60,10,1,1,2,3,4,6\nb,40,60,10,1,1,4,4,4,6\n";
  EXPECT_DOUBLE_EQ(ReplayEvaluator(s, parse(s, text), "a").evaluate(ida(40)), 2.0);
  EXPECT_DOUBLE_EQ(ReplayEvaluator(s, parse(s, text), "b").evaluate(ida(40)), 1.25);
  EXPECT_THROW(ReplayEvaluator(s, parse(s, text)).evaluate(ida(40)), AmbiguousRecord);
}

// --- ida oracle ------------------------------------------------------------

TEST(IdaOracle, PositiveFiniteAndConsistent) {
  const auto s = ida_space();
  for (double rows : {256.0, 1024.0, 4096.0}) {
    OracleSpec spec;
    spec.rows = rows;
    const IdaPccOracle o(spec, s);
    for (std::int64_t w = 0; w <= 100; ++w) {
      const auto m = o.measure(ida(w));
      ASSERT_NO_THROW(check_measurement(m));
      const double e = energy_efficiency(m);
      ASSERT_TRUE(std::isfinite(e) && e > 0);
    }
  }
}

TEST(IdaOracle, WorkSplitCoversEveryPairOnce) {
  OracleSpec spec;
  spec.rows = 300;
  const IdaPccOracle o(spec, ida_space());
  const std::uint64_t r = 300;
  EXPECT_EQ(o.total_work(), r * (r - 1) / 2);
  for (std::int64_t w = 0; w <= 100; ++w) {
    const auto k = o.cpu_rows(w);
    // k = smallest row count with k / R >= w / 100.
    ASSERT_GE(k * 100, static_cast<std::uint64_t>(w) * r);
    if (k > 0) {
      ASSERT_LT((k - 1) * 100, static_cast<std::uint64_t>(w) * r);
    }
    std::uint64_t brute = 0;
    for (std::uint64_t i = 0; i < k; ++i) brute += r - i - 1;
    ASSERT_EQ(o.work_of_first(k), brute);
  }
}

TEST(IdaOracle, BoundaryConfigurationsIdleOneUnit) {
  const IdaPccOracle o(OracleSpec{}, ida_space());
  const auto cpu_only = o.measure(ida(100));
  EXPECT_EQ(cpu_only.acc_time_s, 0.0);
  EXPECT_EQ(cpu_only.acc_energy_j, 0.0);
  EXPECT_EQ(cpu_only.acc_workload_mb, 0.0);
  const auto acc_only = o.measure(ida(0));
  EXPECT_EQ(acc_only.cpu_time_s, 0.0);
  EXPECT_EQ(acc_only.cpu_energy_j, 0.0);
  EXPECT_EQ(acc_only.cpu_workload_mb, 0.0);
}

TEST(IdaOracle, MetricsPeakAtDifferentSplits) {
  for (double cols : {8192.0, 32768.0}) {
    OracleSpec spec;
    spec.cols = cols;
    const IdaPccOracle o(spec, ida_space());
    std::int64_t best_tp = 0, best_eff = 0, least_power = 0;
    double tp = -1, eff = -1, pw = INFINITY;
    for (std::int64_t w = 0; w <= 100; ++w) {
      const auto d = derive_all(o.measure(ida(w)));
      if (d.throughput_mbps > tp) tp = d.throughput_mbps, best_tp = w;
      if (d.energy_efficiency > eff) eff = d.energy_efficiency, best_eff = w;
      if (d.power_w < pw) pw = d.power_w, least_power = w;
    }
    EXPECT_NE(best_tp, best_eff);
    EXPECT_NE(best_tp, least_power);
    EXPECT_NE(best_eff, least_power);
    EXPECT_GT(best_eff, 0);
    EXPECT_LT(best_eff, 100);
    EXPECT_GT(best_tp, 0);
    EXPECT_LT(best_tp, 100);
    EXPECT_EQ(least_power, 100);
  }
}

TEST(IdaOracle, EfficiencyHasInteriorPeak) {
  const IdaPccOracle o(OracleSpec{}, ida_space());
  double best = 0;
  for (std::int64_t w = 0; w <= 100; ++w) best = std::max(best, ida_eff(o, w));
  EXPECT_GT(best, ida_eff(o, 0));
  EXPECT_GT(best, ida_eff(o, 100));
}

// --- emil oracle -----------------------------------------------------------

TEST(EmilOracle, PositiveFiniteEverywhere) {
  const auto s = emil_space();
  const EmilPmOracle o(OracleSpec{.family = OracleFamily::emil_pm}, s);
  for (const auto& c : enumerate_all(s)) {
    const auto m = o.measure(c);
    ASSERT_NO_THROW(check_measurement(m));
    const double e = energy_efficiency(m);
    ASSERT_TRUE(std::isfinite(e) && e > 0);
  }
}

TEST(EmilOracle, SeveralStrictLocalOptima) {
  const auto s = emil_space();
  const auto o = make_oracle(parse_oracle_spec("emil-pm"), s);
  const auto all = enumerate_all(s);
  std::map<Configuration, double> v;
  for (const auto& c : all) v[c] = energy_efficiency(o->measure(c));
  // Neighbourhood: one free parameter moved to an adjacent value, or any other
  // label for a categorical parameter.
  std::size_t optima = 0;
  for (const auto& c : all) {
    bool strict = true;
    for (auto i : s.free_parameters()) {
      const auto& p = s.parameter(i);
      const auto pos = p.position(c.values[i]);
      for (std::size_t q = 0; q < p.values.size() && strict; ++q) {
        if (q == pos) continue;
        if (p.ordered() && q + 1 != pos && q != pos + 1) continue;
        Configuration n = c;
        n.values[i] = p.values[q];
        s.fill_derived(n);
        if (v.at(n) >= v.at(c)) strict = false;
      }
    }
    optima += strict;
  }
  EXPECT_GE(optima, 2u);
}

TEST(EmilOracle, SmoothVariantIsUnimodalAlongInteriorSplit) {
  const auto s = emil_space();
  const auto o = make_oracle(parse_oracle_spec("emil-pm:ruggedness=0"), s);
  const auto w = s.require("CPU-W");
  for (const auto& c : enumerate_all(s)) {
    if (c.values[w] != 1) continue;
    int turns = 0;
    double prev = NAN;
    bool rising = true;
    for (std::int64_t x = 1; x <= 99; ++x) {
      Configuration d = c;
      d.values[w] = x;
      s.fill_derived(d);
      const double e = energy_efficiency(o->measure(d));
      if (!std::isnan(prev)) {
        const bool up = e > prev;
        if (up != rising) {
          ++turns;
          rising = up;
        }
      }
      prev = e;
    }
    // Rising then falling: at most one turn, and never falling then rising.
    ASSERT_LE(turns, 1) << format_configuration(s, c);
  }
}

TEST(EmilOracle, DeterministicPerSeed) {
  const auto s = emil_space();
  const auto a = make_oracle(parse_oracle_spec("emil-pm:seed=4"), s);
  const auto b = make_oracle(parse_oracle_spec("emil-pm:seed=4"), s);
  const auto c = make_oracle(parse_oracle_spec("emil-pm:seed=5"), s);
  std::size_t differ = 0;
  for (const auto& cfg : enumerate_all(s)) {
    const double x = energy_efficiency(a->measure(cfg));
    ASSERT_EQ(x, energy_efficiency(b->measure(cfg)));
    differ += x != energy_efficiency(c->measure(cfg));
  }
  EXPECT_GT(differ, 0u);
}

TEST(EmilOracle, LogRoundTripPreservesEfficiency) {
  const auto s = emil_space();
  const auto o = make_oracle(parse_oracle_spec("emil-pm"), s);
  const auto rows = gen_dataset(*o, s, Sampling::random_n(500), 11);
  std::stringstream buf;
  write_log(buf, s, rows);
  const auto log = read_log(buf, s);
  ASSERT_EQ(log.rows.size(), rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double e = energy_efficiency(rows[i]);
    ASSERT_EQ(log.rows[i].measurement.config, rows[i].config);
    ASSERT_NEAR(energy_efficiency(log.rows[i].measurement), e, 1e-9 * e);
  }
}

TEST(OracleSpecParsing, KeysAndErrors) {
  const auto spec = parse_oracle_spec("ida-pcc:rows=512,cols=32768");
  EXPECT_EQ(spec.family, OracleFamily::ida_pcc);
  EXPECT_EQ(spec.rows, 512);
  EXPECT_EQ(spec.cols, 32768);
  EXPECT_EQ(parse_oracle_spec("emil-pm:seed=9").seed, 9u);
  EXPECT_THROW(parse_oracle_spec("nope"), Error);
  EXPECT_THROW(parse_oracle_spec("ida-pcc:rows"), Error);
  EXPECT_THROW(parse_oracle_spec("ida-pcc:bogus=1"), Error);
  EXPECT_THROW(parse_oracle_spec("ida-pcc:rows=-3"), Error);
  EXPECT_THROW(parse_oracle_spec("emil-pm:ruggedness=1"), Error);
}

// --- external command ------------------------------------------------------

TEST(CommandEvaluatorTest, SubstitutesParameterValues) {
  const auto s = ida_space();
  CommandEvaluator ev(s, "run --cpu-w {CPU-W} --gpu-w {GPU-W}");
  EXPECT_EQ(ev.render(ida(60)), "run --cpu-w 60 --gpu-w 40");
  const auto e = emil_space();
  CommandEvaluator ee(e, "x {CPU-A} {ACC-A}");
  Configuration c = enumerate_all(e).front();
  c.values[e.require("CPU-A")] = 2;
  c.values[e.require("ACC-A")] = 1;
  EXPECT_EQ(ee.render(c), "x compact scatter");
  EXPECT_THROW(CommandEvaluator(s, "run {NOPE}"), SpaceError);
  EXPECT_THROW(CommandEvaluator(s, "run {CPU-W"), SpaceError);
}

TEST(CommandEvaluatorTest, ParsesLastRowAndAppendsLog) {
  const auto s = ida_space();
  const auto dir = scratch_dir("ok");
  const auto stub = write_stub(dir,
                               "echo starting\n"
                               "echo \"$1,$((100-$1)),1,1,1,1,1,1,0\"\n"
                               "echo \"$1,$((100-$1)),100,1,1,10,10,50,50\"\n");
  CommandOptions opt;
  opt.log_path = (dir / "measured.csv").string();
  CommandEvaluator ev(s, stub.string() + " {CPU-W}", opt);
  EXPECT_DOUBLE_EQ(ev.evaluate(ida(60)), 5.0);
  EXPECT_DOUBLE_EQ(ev.evaluate(ida(10)), 5.0);
  ASSERT_EQ(ev.recorded().size(), 2u);
  EXPECT_EQ(ev.recorded()[0].config, ida(60));

  std::ifstream in(opt.log_path);
  const auto log = read_log(in, s);
  ASSERT_EQ(log.rows.size(), 2u);
  EXPECT_EQ(log.rows[1].measurement.config, ida(10));
  fs::remove_all(dir);
}

TEST(CommandEvaluatorTest, RowStoredUnderRequestedConfiguration) {
  const auto s = ida_space();
  const auto dir = scratch_dir("cfg");
  const auto stub = write_stub(dir, "echo \"5,95,100,1,1,10,10,50,50\"\n");
  CommandEvaluator ev(s, stub.string() + " {CPU-W}");
  EXPECT_EQ(ev.run(ida(70)).config, ida(70));
  fs::remove_all(dir);
}

TEST(CommandEvaluatorTest, FailuresCarryCapturedOutput) {
  const auto s = ida_space();
  const auto dir = scratch_dir("fail");
  const auto bad = write_stub(dir, "echo oops-out; echo oops-err >&2; exit 3\n");
  CommandEvaluator failing(s, bad.string() + " {CPU-W}");
  try {
    failing.evaluate(ida(1));
    FAIL() << "expected ExecutionError";
  } catch (const ExecutionError& e) {
    EXPECT_NE(std::string(e.what()).find("status 3"), std::string::npos);
    EXPECT_NE(e.output().find("oops-out"), std::string::npos);
    EXPECT_NE(e.output().find("oops-err"), std::string::npos);
  }
  CommandEvaluator garbage(s, "echo not,a,row");
  EXPECT_THROW(garbage.evaluate(ida(1)), ExecutionError);
  EXPECT_EQ(garbage.evaluation_count(), 1u);
  fs::remove_all(dir);
}

TEST(CommandEvaluatorTest, TimeoutKillsTheCommand) {
  const auto s = ida_space();
  CommandOptions opt;
  opt.timeout = std::chrono::milliseconds(200);
  CommandEvaluator ev(s, "sleep 5; echo {CPU-W}", opt);
  const auto t0 = std::chrono::steady_clock::now();
  try {
    ev.evaluate(ida(1));
    FAIL() << "expected ExecutionError";
  } catch (const ExecutionError& e) {
    EXPECT_NE(std::string(e.what()).find("timed out"), std::string::npos);
  }
  EXPECT_LT(std::chrono::steady_clock::now() - t0, std::chrono::seconds(3));
}

TEST(CommandEvaluatorTest, ParallelInvocationsRespectLimit) {
  const ParameterSpace s("coarse", {ParameterDef::range("CPU-W", 0, 100, 10), ParameterDef::complement("GPU-W", "CPU-W")});
  const auto dir = scratch_dir("par");
  // Each run registers itself in a directory, records the peak, then leaves.
  const auto stub = write_stub(dir,
                               "d=" + (dir / "live").string() + "\n"
                               "mkdir -p $d; touch $d/$1\n"
                               "ls $d | wc -l >> " + (dir / "peaks").string() + "\n"
                               "sleep 0.2; rm $d/$1\n"
                               "echo \"$1,$((100-$1)),100,1,1,10,10,50,50\"\n");
  CommandOptions opt;
  opt.max_parallel = 2;
  CommandEvaluator ev(s, stub.string() + " {CPU-W}", opt);
  const auto r = run_em(s, ev, 4);
  EXPECT_EQ(r.evaluations_used, 11u);
  std::ifstream peaks(dir / "peaks");
  int n = 0, peak = 0;
  while (peaks >> n) peak = std::max(peak, n);
  EXPECT_LE(peak, 2);
  fs::remove_all(dir);
}
