#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "fhn/harness.hpp"
#include "json.hpp"

using namespace fhn;
namespace fs = std::filesystem;

namespace {

ExperimentSpec tiny_spec() {
  ExperimentSpec s;
  s.grid.nx = 3;
  s.grid.nv = 48;
  s.grid.nw = 32;
  s.solver.dt = 0.004;
  s.solver.t_end = 0.08;
  s.epsilons = {0.2, 0.1, 0.05};
  s.n_geometric = 3;
  s.n_uniform = 4;
  s.random_pairs = 20;
  s.monitor_shifts = {1};
  s.floor_estimate = false;
  s.cross.enabled = false;
  return s;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("fhn_test_" + name);
  fs::remove_all(p);
  return p;
}

std::vector<std::pair<double, double>> power_law(double c, double p, Abscissa a) {
  std::vector<std::pair<double, double>> d;
  for (double e : {0.1, 0.05, 0.025, 0.0125}) d.emplace_back(e, c * std::pow(abscissa_value(a, e), p));
  return d;
}

}  // namespace

TEST(FitRate, RecoversExactPowerLaws) {
  const auto lin = power_law(3.0, 1.0, Abscissa::eps);
  const RateFit a = fit_rate(lin, Abscissa::eps);
  ASSERT_TRUE(a.ok);
  EXPECT_NEAR(a.slope, 1.0, 1e-12);
  EXPECT_NEAR(std::exp(a.intercept), 3.0, 1e-10);
  EXPECT_NEAR(a.r_squared, 1.0, 1e-12);

  const auto half = power_law(1.0, 0.5, Abscissa::eps);
  EXPECT_NEAR(fit_rate(half, Abscissa::eps).slope, 0.5, 1e-12);
  // sqrt(eps) data is linear in the sqrt(eps) abscissa.
  EXPECT_NEAR(fit_rate(half, Abscissa::sqrt_eps).slope, 1.0, 1e-12);

  const auto sl = power_law(2.0, 1.0, Abscissa::eps_sqrt_log);
  EXPECT_NEAR(fit_rate(sl, Abscissa::eps_sqrt_log).slope, 1.0, 1e-12);
}

TEST(FitRate, NoisyLinearData) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0.0, 0.02);
  std::vector<std::pair<double, double>> d;
  for (double e : {0.2, 0.1, 0.05, 0.025, 0.0125, 0.00625}) d.emplace_back(e, 3.0 * e * std::exp(n(rng)));
  const RateFit f = fit_rate(d, Abscissa::eps);
  ASSERT_TRUE(f.ok);
  EXPECT_NEAR(f.slope, 1.0, 0.05);
  EXPECT_GT(f.r_squared, 0.99);
  EXPECT_EQ(f.residuals.size(), d.size());
}

TEST(FitRate, RefusesTooFewPositivePairs) {
  const std::vector<std::pair<double, double>> d{{0.1, 1.0}, {0.05, 0.0}, {0.025, -1.0}, {0.0125, 0.5}};
  const RateFit f = fit_rate(d, Abscissa::eps);
  EXPECT_FALSE(f.ok);
  EXPECT_FALSE(f.reason.empty());
}

TEST(Abscissa, Values) {
  EXPECT_DOUBLE_EQ(abscissa_value(Abscissa::eps, 0.25), 0.25);
  EXPECT_DOUBLE_EQ(abscissa_value(Abscissa::sqrt_eps, 0.25), 0.5);
  EXPECT_NEAR(abscissa_value(Abscissa::eps_sqrt_log, 0.1), 0.1 * std::sqrt(std::log(10.0) + 1.0), 1e-15);
}

TEST(SampleTimes, SortedUniqueOnStepMultiples) {
  ExperimentSpec s = tiny_spec();
  const auto t = sample_times(s);
  ASSERT_FALSE(t.empty());
  EXPECT_EQ(t.front(), 0.0);
  EXPECT_NEAR(t.back(), s.solver.t_end, 1e-12);
  for (std::size_t k = 1; k < t.size(); ++k) {
    EXPECT_GT(t[k], t[k - 1]);
    const double steps = t[k] / s.solver.dt;
    EXPECT_NEAR(steps, std::round(steps), 1e-9);
  }
}

TEST(RunId, DeterministicSixteenHex) {
  const std::string a = make_run_id("{\"x\":1}", 7);
  EXPECT_EQ(a.size(), 16u);
  EXPECT_EQ(a.find_first_not_of("0123456789abcdef"), std::string::npos);
  EXPECT_EQ(a, make_run_id("{\"x\":1}", 7));
  EXPECT_NE(a, make_run_id("{\"x\":1}", 8));
  EXPECT_NE(a, make_run_id("{\"x\":2}", 7));
}

TEST(Report, EmptySweepIsWellFormed) {
  ExperimentSpec s = tiny_spec();
  s.epsilons.clear();
  const SweepReport r = run_validation(s, false);
  EXPECT_TRUE(r.criteria.empty());
  const fs::path dir = scratch("empty");
  emit_report(r, dir.string());
  const auto j = nlohmann::json::parse(slurp(dir / "summary.json"));
  EXPECT_EQ(j["status"], "empty");
  EXPECT_EQ(j["schema_version"], kReportSchemaVersion);
  EXPECT_TRUE(j["criteria"].empty());
  EXPECT_EQ(slurp(dir / "metrics.csv"), "run_id,eps,t,metric,value,flag\n");
  fs::remove_all(dir);
}

TEST(Report, RerunIsByteIdentical) {
  const ExperimentSpec s = tiny_spec();
  SweepReport a = run_validation(s, false), b = run_validation(s, false);
  a.run_id = b.run_id = make_run_id("tiny", s.seed);
  const fs::path da = scratch("rerun_a"), db = scratch("rerun_b");
  emit_report(a, da.string());
  emit_report(b, db.string());
  for (const char* f : {"metrics.csv", "summary.json", "diagnostics_eps0.1.csv"}) {
    ASSERT_TRUE(fs::exists(da / f)) << f;
    EXPECT_EQ(slurp(da / f), slurp(db / f)) << f;
  }
  const auto j = nlohmann::json::parse(slurp(da / "summary.json"));
  EXPECT_EQ(j["status"], "ok");
  EXPECT_EQ(j["criteria"].size(), 6u);
  fs::remove_all(da);
  fs::remove_all(db);
}

TEST(Report, CriterionSummaryLineFormat) {
  CriterionResult c;
  c.id = 4;
  c.title = "demo";
  c.checks = {{"first", true, ""}, {"second", false, ""}};
  EXPECT_FALSE(c.pass());
  const std::string line = c.summary_line();
  EXPECT_EQ(line.rfind("criterion 4 FAIL", 0), 0u) << line;
  EXPECT_NE(line.find("1/2"), std::string::npos);
  EXPECT_NE(line.find("second"), std::string::npos);
}

TEST(Specs, ValidateRejectsBadGrids) {
  ExperimentSpec s = tiny_spec();
  s.grid.nv = 2;
  EXPECT_ANY_THROW(s.validate());
  ExperimentSpec e = tiny_spec();
  e.epsilons = {0.1, -0.1};
  EXPECT_ANY_THROW(e.validate());
}
