#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <gtest/gtest.h>

#include "hetune/campaign.hpp"
#include "hetune/model_io.hpp"
#include "hetune/oracles.hpp"
#include "support/recorded_comparison.hpp"

using namespace hetune;

namespace {

std::string fixture(const std::string& name) { return std::string(HETUNE_DATA_DIR) + "/fixtures/" + name; }

MeasurementLog fixture_log(const ParameterSpace& s) {
  std::ifstream in(fixture("ida_em_vs_aml.csv"));
  return read_log(in, s, "fixture");
}

// Fails on the n-th call.
class FlakyEvaluator final : public Evaluator {
 public:
  explicit FlakyEvaluator(std::uint64_t fail_at) : fail_at_(fail_at) {}
  bool concurrent() const noexcept override { return false; }
  std::string describe() const override { return "flaky"; }

 protected:
  double do_evaluate(const Configuration& c) override {
    if (++calls_ == fail_at_) throw std::runtime_error("sensor offline");
    return 1.0 + static_cast<double>(c.values[0]);
  }

 private:
  std::uint64_t fail_at_;
  std::uint64_t calls_ = 0;
};

}  // namespace

// --- exhaustive --------------------------------------------------------------

TEST(RunEm, IdaEvaluatesEverySplit) {
  const auto s = ida_space();
  IdaPccOracle oracle(OracleSpec{}, s);
  const auto r = run_em(s, oracle);
  EXPECT_EQ(r.evaluations_used, 101u);
  EXPECT_EQ(r.cardinality, 101u);
  EXPECT_DOUBLE_EQ(r.budget_fraction(), 1.0);
  EXPECT_EQ(oracle.evaluation_count(), 101u);
  std::int64_t arg = -1;
  double best = -1;
  for (std::int64_t w = 0; w <= 100; ++w) {
    const double e = energy_efficiency(oracle.measure(Configuration{{w, 100 - w}}));
    if (e > best) best = e, arg = w;
  }
  EXPECT_EQ(r.best_value, best);
  EXPECT_EQ(r.best.values[0], arg);
}

TEST(RunEm, EmilMatchesIndependentArgmaxAndParallelRun) {
  const auto s = emil_space();
  const auto oracle = make_oracle(parse_oracle_spec("emil-pm"), s);
  const auto serial = run_em(s, *oracle);
  EXPECT_EQ(serial.evaluations_used, 14544u);
  double best = -1;
  Configuration arg;
  for (std::int64_t ct : {12, 24, 36, 48})
    for (std::int64_t at : {60, 120, 180, 240})
      for (std::int64_t ca = 0; ca < 3; ++ca)
        for (std::int64_t aa = 0; aa < 3; ++aa)
          for (std::int64_t w = 0; w <= 100; ++w) {
            const Configuration c{{ct, at, ca, aa, w, 100 - w}};
            const double e = energy_efficiency(oracle->measure(c));
            if (e > best) best = e, arg = c;
          }
  EXPECT_EQ(serial.best_value, best);
  EXPECT_EQ(serial.best, arg);
  const auto parallel = run_em(s, *oracle, 4);
  EXPECT_TRUE(same_report(serial, parallel));
}

TEST(RunEm, FailureKeepsCompletedPrefix) {
  FlakyEvaluator ev(51);
  try {
    run_em(ida_space(), ev);
    FAIL() << "expected CampaignAborted";
  } catch (const CampaignAborted& e) {
    EXPECT_EQ(e.partial().records.size(), 50u);
    EXPECT_EQ(e.partial().best_value, 50.0);
    EXPECT_NE(std::string(e.what()).find("sensor offline"), std::string::npos);
  }
}

TEST(RunEm, AbortKeepsCommandOutput) {
  const auto s = ida_space();
  CommandEvaluator ev(s, "echo probe-{CPU-W} >&2; exit 1");
  try {
    run_em(s, ev);
    FAIL() << "expected CampaignAborted";
  } catch (const CampaignAborted& e) {
    EXPECT_NE(e.output().find("probe-0"), std::string::npos);
  }
  AnnealParams p;
  try {
    run_aml(s, ev, p);
    FAIL() << "expected CampaignAborted";
  } catch (const CampaignAborted& e) {
    EXPECT_NE(e.output().find("probe-100"), std::string::npos);
  }
}

// --- annealing campaigns -----------------------------------------------------

TEST(RunAml, SevenPercentBudgetOnEmil) {
  const auto s = emil_space();
  const auto oracle = make_oracle(parse_oracle_spec("emil-pm"), s);
  const auto em = run_em(s, *oracle);
  AnnealParams p;
  p.evaluation_budget = static_cast<std::size_t>(0.07 * static_cast<double>(cardinality(s)));
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    p.seed = seed;
    const auto a = run_aml(s, *oracle, p);
    const auto b = run_aml(s, *oracle, p);
    EXPECT_TRUE(same_report(a, b));
    EXPECT_LE(a.evaluations_used, *p.evaluation_budget + 3);
    EXPECT_EQ(a.evaluations_used, a.records.size());
    EXPECT_EQ(a.evaluations_used, a.trace->evaluations_used);
    EXPECT_LE(a.best_value, em.best_value);
    for (const auto& seed_eval : a.trace->seeds) EXPECT_GE(a.best_value, seed_eval.value);
    const auto max_rec = std::max_element(a.records.begin(), a.records.end(),
                                          [](const auto& x, const auto& y) { return x.value < y.value; });
    EXPECT_EQ(a.best_value, max_rec->value);
  }
}

TEST(RunAml, AbortCarriesPartialReport) {
  FlakyEvaluator ev(20);
  AnnealParams p;
  p.seed = 1;
  try {
    run_aml(ida_space(), ev, p);
    FAIL() << "expected CampaignAborted";
  } catch (const CampaignAborted& e) {
    EXPECT_EQ(e.partial().records.size(), 19u);
    EXPECT_EQ(e.partial().method, "AML");
  }
}

// --- comparison --------------------------------------------------------------

TEST(Compare, PrintedValues) {
  const auto row = compare_values("1024x4096", 2.072, 2.067);
  EXPECT_NEAR(row.abs_difference, 0.005, 1e-12);
  EXPECT_NEAR(row.abs_difference, 0.00474, 1e-3);
  const auto pct = compare_values("emil", 44.97, 43.87);
  ASSERT_TRUE(pct.aml_fraction_of_em);
  EXPECT_NEAR(*pct.aml_fraction_of_em, 97.55, 0.01);
}

TEST(Compare, IdenticalAndSymmetry) {
  const auto same = compare_values("x", 1.25, 1.25);
  EXPECT_EQ(same.abs_difference, 0.0);
  EXPECT_DOUBLE_EQ(*same.aml_fraction_of_em, 100.0);
  const auto ab = compare_values("x", 3.0, 2.0);
  const auto ba = compare_values("x", 2.0, 3.0);
  EXPECT_EQ(ab.abs_difference, ba.abs_difference);
  EXPECT_EQ(ab.signed_difference, -ba.signed_difference);
  EXPECT_FALSE(compare_values("x", 0.0, 1.0).aml_fraction_of_em);
}

TEST(Compare, RejectsMismatchedInputs) {
  CampaignReport a, b;
  a.space = "ida";
  b.space = "emil";
  EXPECT_THROW(compare(a, b), Error);
  b.space = "ida";
  a.label = "p";
  b.label = "q";
  EXPECT_THROW(compare(std::vector{a}, std::vector{b}), Error);
  EXPECT_THROW(compare(std::vector{a, a}, std::vector{a, a}), Error);
  EXPECT_THROW(compare(std::vector{a}, std::vector<CampaignReport>{}), Error);
}

TEST(Compare, BundledFixtureReproducesRecordedDifferences) {
  const auto s = ida_space();
  const auto log = fixture_log(s);
  ASSERT_EQ(log.rows.size(), 48u);
  const auto em = reports_from_log(s, log, "EM");
  const auto aml = reports_from_log(s, log, "AML");
  ASSERT_EQ(em.size(), 24u);
  const auto summary = compare(em, aml);
  ASSERT_EQ(summary.rows.size(), kRecordedComparison.size());
  std::map<std::string, CompareRow> by_label;
  for (const auto& r : summary.rows) by_label[r.label] = r;
  for (const auto& want : kRecordedComparison) {
    const auto it = by_label.find(std::string(want.label));
    ASSERT_NE(it, by_label.end()) << want.label;
    EXPECT_NEAR(it->second.abs_difference, want.abs_difference, 1e-3) << want.label;
    EXPECT_NEAR(it->second.em_value, want.em, 5e-4 + 1e-12) << want.label;
    EXPECT_NEAR(it->second.aml_value, want.aml, 5e-4 + 1e-12) << want.label;
  }
  EXPECT_NEAR(by_label.at("8192x16384").abs_difference, 0.00338, 1e-3);
}

TEST(Compare, JsonCarriesSummary) {
  CampaignReport e, a;
  e.space = a.space = "ida";
  e.label = a.label = "w";
  e.best_value = 2.0;
  a.best_value = 1.5;
  const auto j = compare_to_json(compare(std::vector{e}, std::vector{a}));
  EXPECT_DOUBLE_EQ(j["rows"][0]["abs_difference"].get<double>(), 0.5);
  EXPECT_DOUBLE_EQ(j["summary"]["mean_fraction"].get<double>(), 75.0);
}

// --- datasets and training ---------------------------------------------------

TEST(GenDataset, FullIdaInEnumerationOrder) {
  const auto s = ida_space();
  const IdaPccOracle oracle(OracleSpec{}, s);
  const auto rows = gen_dataset(oracle, s, Sampling::all(), 0);
  ASSERT_EQ(rows.size(), 101u);
  for (std::int64_t w = 0; w <= 100; ++w) EXPECT_EQ(rows[static_cast<std::size_t>(w)].config.values[0], w);

  // Replaying the generated log reproduces the oracle.
  std::stringstream buf;
  write_log(buf, s, rows);
  ReplayEvaluator replay(s, read_log(buf, s));
  for (const auto& m : rows) {
    const double e = energy_efficiency(m);
    ASSERT_NEAR(replay.evaluate(m.config), e, 1e-9 * e);
  }
}

TEST(GenDataset, RandomSamplesAreDistinctAndReproducible) {
  const auto s = emil_space();
  const auto oracle = make_oracle(parse_oracle_spec("emil-pm"), s);
  const auto a = gen_dataset(*oracle, s, Sampling::random_n(300), 5);
  const auto b = gen_dataset(*oracle, s, Sampling::random_n(300), 5);
  const auto c = gen_dataset(*oracle, s, Sampling::random_n(300), 6);
  ASSERT_EQ(a.size(), 300u);
  std::vector<Configuration> ca, cc;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ASSERT_EQ(a[i].config, b[i].config);
    ca.push_back(a[i].config);
    cc.push_back(c[i].config);
  }
  EXPECT_TRUE(std::is_sorted(ca.begin(), ca.end()));
  EXPECT_EQ(std::adjacent_find(ca.begin(), ca.end()), ca.end());
  EXPECT_NE(ca, cc);
  EXPECT_THROW(gen_dataset(*oracle, s, Sampling::random_n(0), 1), Error);
  EXPECT_THROW(gen_dataset(*oracle, s, Sampling::random_n(14545), 1), Error);
}

TEST(TrainModel, SplitSizesAndDeterminism) {
  const auto s = ida_space();
  const IdaPccOracle oracle(OracleSpec{}, s);
  const auto rows = gen_dataset(oracle, s, Sampling::all(), 0);
  BoostParams bp;
  bp.n_estimators = 10;
  const auto a = train_model(s, rows, bp, ValidationScheme::split(0.8), 42);
  EXPECT_EQ(a.metrics.train_size, 81u);
  EXPECT_EQ(a.metrics.test_size, 20u);
  const auto b = train_model(s, rows, bp, ValidationScheme::split(0.8), 42);
  EXPECT_EQ(serialize_model(a.model), serialize_model(b.model));
  EXPECT_EQ(a.metrics.r2, b.metrics.r2);

  const auto k = train_model(s, rows, bp, ValidationScheme::kfold(5), 42);
  EXPECT_EQ(k.metrics.fold_r2.size(), 5u);
  const auto none = train_model(s, rows, bp, ValidationScheme::none(), 42);
  EXPECT_EQ(none.metrics.scheme, "train");
  // Same fit stream regardless of the validation scheme.
  EXPECT_EQ(serialize_model(none.model), serialize_model(a.model));
}

TEST(TrainModel, TooFewRows) {
  const auto s = ida_space();
  const IdaPccOracle oracle(OracleSpec{}, s);
  auto rows = gen_dataset(oracle, s, Sampling::all(), 0);
  rows.resize(kMinTrainingRows - 1);
  EXPECT_THROW(train_model(s, rows, BoostParams{}, ValidationScheme::none(), 1), ModelError);
}

TEST(TrainModel, MalformedLogReportsLine) {
  const auto s = ida_space();
  std::istringstream in(log_header(s) + "\n10,90,10,1,1,1,1,1,9\n10,90,ten,1,1,1,1,1,9\n");
  try {
    read_log(in, s, "bad.csv");
    FAIL() << "expected DataFormatError";
  } catch (const DataFormatError& e) {
    EXPECT_EQ(e.line(), 3u);
    EXPECT_NE(std::string(e.what()).find("bad.csv:3"), std::string::npos);
  }
}

// --- report serialization ----------------------------------------------------

TEST(ReportJson, RoundTripWithTrace) {
  const auto s = emil_space();
  const auto oracle = make_oracle(parse_oracle_spec("emil-pm"), s);
  AnnealParams p;
  p.seed = 3;
  p.evaluation_budget = 200;
  const auto r = run_aml(s, *oracle, p, "run");
  const auto back = report_from_json(s, report_to_json(s, r));
  EXPECT_TRUE(same_report(r, back));
  EXPECT_EQ(back.wall_time_s, r.wall_time_s);

  const auto untimed = report_to_json(s, r, false);
  EXPECT_FALSE(untimed.contains("wall_time_s"));
  EXPECT_TRUE(same_report(r, report_from_json(s, untimed)));
  EXPECT_EQ(untimed.dump(), report_to_json(s, back, false).dump());
}

TEST(ReportJson, RejectsForeignOrMalformed) {
  const auto s = ida_space();
  IdaPccOracle oracle(OracleSpec{}, s);
  const auto j = report_to_json(s, run_em(s, oracle));
  EXPECT_THROW(report_from_json(emil_space(), j), DataFormatError);
  auto broken = j;
  broken.erase("records");
  EXPECT_THROW(report_from_json(s, broken), DataFormatError);
}
