#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fhn/diagnostics.hpp"
#include "fhn/kinetic_solver.hpp"
#include "fhn/model.hpp"
#include "fhn/phase_space.hpp"

namespace fhn {

enum class InitialData { well_prepared, ill_prepared_wide, ill_prepared_shifted };
std::string to_string(InitialData d);
InitialData initial_data_from_string(const std::string& s);

struct GridSpec {
  int nx = 8, nv = 256, nw = 128;
  double Lv = 8.0, Lw = 8.0;
  void validate() const;
};

struct ModelConfig {
  DriftSpec drift;
  AdaptationParams adaptation;
  KernelSpec kernel;
  std::string rho0_kind = "cosine";  // cosine | constant
  double rho0_base = 1.5, rho0_amplitude = 0.3;
  double m_star = 1.0 / 1.8;
  double V0_base = 0.5, V0_amplitude = 0.3;  // V0(x) = base + amplitude cos(2 pi x)
  double W0 = 0.0;

  Model build(const SpatialGrid& space) const;
  std::vector<double> V0(const SpatialGrid& space) const;
  void validate() const;
};

// Direct-kinetic against rescaled-coupled comparison.
struct CrossValidationSpec {
  bool enabled = true;
  double epsilon = 0.1, t = 1.0;
  double dt = 5e-4;  // own step; the comparison is first-order limited in dt
  int nv = 512, nw = 256;
  double Lv = 4.0, Lw = 8.0;
  double tolerance = 5e-3;
};

// Quadrature functionals against a refined grid.
struct OracleSpec {
  bool enabled = true;
  int refinement = 4;
  double tolerance = 0.01;
};

struct Tolerances {
  double l1_slope_min = 0.35, l1_slope_max = 0.65;
  double marginal_slope_min = 0.8, marginal_slope_max = 1.2;
  double r2_min = 0.95;
  double envelope_margin = 2.0;
  double ratio_variation_max = 3.0;
  double monitor_scale = 1.0;   // multiplies the dt + dw^2 budget
  double mass_defect = 1e-10;
  double theta_residual = 1e-10;
  double fixed_point = 1e-13;
  double sandwich_abs = 1e-12;
  double lemma_bar_nu_rel = 0.02;
};

struct ExperimentSpec {
  std::vector<double> epsilons{0.1, 0.05, 0.025, 0.0125};
  InitialData initial_data = InitialData::well_prepared;
  double w_variance = 1.0;
  int n_geometric = 15;
  double geometric_t_max = 0.1;
  int n_uniform = 25;
  GridSpec grid;
  ModelConfig model;
  SolverConfig solver;
  WeightSpec weight{1.0, WeightVariant::m_eps};
  double alpha_star = 0.25;
  std::uint64_t seed = 20240601;
  int random_pairs = 1000;
  std::vector<int> monitor_shifts{1, 4};
  double equicontinuity_max_shift = 1.0;
  bool floor_estimate = true;
  CrossValidationSpec cross;
  OracleSpec oracle;
  Tolerances tol;
  int threads = 1;

  void validate() const;
};

// Sample times: t = 0, n_geometric points geometric in [dt, geometric_t_max],
// n_uniform points uniform in (0, T]; rounded to step multiples, deduplicated.
std::vector<double> sample_times(const ExperimentSpec& spec);

struct InitialState {
  DensityField nu0;                       // rescaled frame, centered
  MacroFields macro0;
  std::vector<double> bar_nu0;            // w-marginal of nu0 (same for all nodes)
  std::vector<std::vector<double>> bar_mu0;  // physical-frame adaptation profile per node
};
InitialState make_initial_state(const ExperimentSpec& spec, const Model& model);

struct CheckCount {
  long checked = 0, violated = 0;
  double worst = 0.0;  // worst (lhs - rhs), or worst ratio where noted
  void add(bool ok, double excess);
};

struct DiagnosticRow {
  double t;
  int x;
  std::string name;
  double value;
  std::string flags;
};

// Results of one epsilon run. Series are aligned with t (sample times);
// node-dependent quantities are reduced by max over x.
struct EpsilonRun {
  double epsilon = 0.0;
  bool ok = false;
  std::string failure;
  std::vector<double> t;
  std::map<std::string, std::vector<double>> series;
  std::map<std::string, std::vector<std::string>> flags;  // optional, aligned with series
  std::map<std::string, double> scalars;
  std::map<std::string, CheckCount> checks;
  std::vector<DiagnosticRow> diagnostics;
  StepTelemetry telemetry;
  double closure_defect = 0.0;
  double seconds = 0.0;
};

EpsilonRun run_epsilon(const ExperimentSpec& spec, double epsilon);

struct FloorEstimate {
  bool computed = false;
  double l1 = 0.0, marginal = 0.0;   // |e(2h) - e(h)| at the smallest epsilon
  bool l1_subtracted = false, marginal_subtracted = false;
};

struct SweepData {
  ExperimentSpec spec;
  std::vector<EpsilonRun> runs;
  FloorEstimate floor;
};

SweepData run_sweep(const ExperimentSpec& spec);

enum class Abscissa { eps, sqrt_eps, eps_sqrt_log };
std::string to_string(Abscissa a);
double abscissa_value(Abscissa a, double eps);

struct RateFit {
  bool ok = false;
  std::string reason;
  double slope = 0.0, intercept = 0.0, r_squared = 0.0;
  std::vector<double> residuals;
};
// Least squares of log(value) against log(abscissa(eps)). Needs >= 3 positive pairs.
RateFit fit_rate(std::span<const std::pair<double, double>> errors, Abscissa abscissa);

struct NamedFit {
  std::string name;
  std::string metric;   // CSV metric name holding the fitted values (t = T rows)
  Abscissa abscissa = Abscissa::eps;
  std::vector<std::pair<double, double>> data;
  RateFit fit;
  bool gated = false;
};

struct Check {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct CriterionResult {
  int id = 0;
  std::string title;
  std::vector<Check> checks;
  std::vector<NamedFit> fits;
  bool pass() const;
  std::string summary_line() const;
};

CriterionResult check_structural(const SweepData& sweep);
CriterionResult run_l1_rate(const SweepData& sweep);
CriterionResult run_marginal_rate(const SweepData& sweep);
CriterionResult validate_preliminary(const SweepData& sweep);
CriterionResult inequality_suite(const SweepData& sweep);
CriterionResult equicontinuity_suite(const SweepData& sweep);
CriterionResult oracle_equivalence(const ExperimentSpec& spec);

struct SweepReport {
  std::string run_id;
  SweepData sweep;
  std::vector<CriterionResult> criteria;
  bool all_pass() const;
};

// Runs the sweep and the criteria; include_oracles adds criterion 7.
SweepReport run_validation(const ExperimentSpec& spec, bool include_oracles);

// Deterministic identifier from the config text and the seed.
std::string make_run_id(const std::string& config_text, std::uint64_t seed);

constexpr int kReportSchemaVersion = 1;
// Writes <dir>/metrics.csv, <dir>/diagnostics_eps<eps>.csv per run and <dir>/summary.json.
void emit_report(const SweepReport& report, const std::string& dir);

}  // namespace fhn
