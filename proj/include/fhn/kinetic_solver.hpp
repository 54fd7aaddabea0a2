#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "fhn/model.hpp"
#include "fhn/phase_space.hpp"

namespace fhn {

enum class SolverMode { direct_kinetic, rescaled_coupled };
// characteristic: exact w-characteristics plus implicit exponential fitting of
// the whole v-drift. upwind: explicit first-order upwind transport, sub-cycled
// under CFL, with only the relaxation/diffusion part implicit.
enum class TransportScheme { characteristic, upwind };

std::string to_string(SolverMode m);
std::string to_string(TransportScheme s);
SolverMode solver_mode_from_string(const std::string& s);
TransportScheme transport_scheme_from_string(const std::string& s);

struct SolverConfig {
  double dt = 1e-3;
  double t_end = 2.0;
  double cfl_safety = 0.45;
  SolverMode mode = SolverMode::rescaled_coupled;
  TransportScheme transport = TransportScheme::characteristic;
  int checkpoint_every = 0;
  // Recentering threshold on the rescaled-frame means.
  double recenter_tol = 1e-7;
  void validate() const;
};

struct StepTelemetry {
  double mass_defect = 0.0;      // max per-node |mass change| before renormalization
  int positivity_clamps = 0;     // entries below -1e-14 set to zero
  double clamped_mass = 0.0;
  int substeps = 1;
  double recenter_v = 0.0;       // max |theta * v-mean| absorbed into V this step
  double recenter_w = 0.0;       // max |w-mean| absorbed into W this step
  bool stiffness_warning = false;
  void merge(const StepTelemetry& o);
};

// Rescaled-frame state. nu lives on a w grid that contracts with the flow:
// half-width Lw0 * exp(-b t), so the node values track characteristics of -b w.
struct CoupledState {
  DensityField nu;
  MacroFields macro;
  ThetaField theta;
  double t = 0.0;
  double epsilon = 1.0;
  double Lw0 = 1.0;
  std::vector<double> E;               // nonlinearity error at the last evaluation
  double closure_defect = 0.0;         // accumulated |V correction| absorbed by recentering
  StepTelemetry telemetry;             // accumulated over all steps
};

CoupledState make_coupled_state(DensityField nu0, MacroFields macro0, double epsilon, const Model& model);

// Backward-Euler exponential-fitting (Chang-Cooper / Scharfetter-Gummel) step of
// d_t nu = prefactor * d_v (rho0 v nu + d_v nu) along every (x, w) line.
DensityField fokker_planck_step(const DensityField& nu, double dt, std::span<const double> prefactor,
                                std::span<const double> rho0, StepTelemetry* tel = nullptr);

using DriftFn = std::function<double(int ix, double v, double w)>;
// Explicit upwind step of d_t nu + d_v(drift_v nu) + d_w(drift_w nu) = 0,
// dimensionally split, no-flux boundaries. Throws CflViolation when dt is too
// large; required_dt carries the admissible step.
DensityField transport_step(const DensityField& nu, const DriftFn& drift_v, const DriftFn& drift_w,
                            double dt, double cfl_safety = 0.9);
// Largest dt admitted by transport_step for these drifts.
double transport_max_dt(const DensityField& nu, const DriftFn& drift_v, const DriftFn& drift_w,
                        double cfl_safety = 0.9);

struct RescaledStepOptions {
  TransportScheme transport = TransportScheme::characteristic;
  double cfl_safety = 0.45;
  double recenter_tol = 1e-7;
};

CoupledState step_rescaled_coupled(const CoupledState& state, double dt, const Model& model,
                                   const RescaledStepOptions& opt = {});

// Advances a rescaled-frame density with prescribed macro values over [t, t+dt]
// (half w-translation, implicit v step, half w-translation, grid contraction).
void advance_rescaled_density(DensityField& nu, double t, double dt, double epsilon, double Lw0,
                              std::span<const double> V_mid, std::span<const double> E_mid,
                              const Model& model, const RescaledStepOptions& opt, StepTelemetry& tel);

// Shifts every slice by (dv_shift, dw_shift) physical units per node with
// 4-point Lagrange interpolation, clamping and renormalizing per node.
void shift_density(DensityField& f, std::span<const double> v_shift, std::span<const double> w_shift,
                   StepTelemetry* tel = nullptr);

struct DirectStepOptions {
  TransportScheme transport = TransportScheme::characteristic;
  double cfl_safety = 0.45;
};

DensityField step_direct_kinetic(const DensityField& mu, double dt, double epsilon, const Model& model,
                                 const DirectStepOptions& opt = {}, StepTelemetry* tel = nullptr);

// L1 norm in w of the residual of
//   d_t bar_nu - b d_w(w bar_nu) + a theta d_w int v nu dv = 0
// between two consecutive stored states, evaluated on the later grid.
std::vector<double> marginal_residual(const CoupledState& prev, const CoupledState& curr, const Model& model);
// Residual for every consecutive pair; needs at least two states.
std::vector<std::vector<double>> marginal_residual(const std::vector<CoupledState>& history, const Model& model);

// Writes <stem>.bin (density dump) and <stem>.json (t, V, W, theta, mass
// defect, positivity clamps).
void write_checkpoint(const std::string& stem, const CoupledState& state);
void write_checkpoint(const std::string& stem, const DensityField& mu, double epsilon, const MacroFields& macro,
                      const StepTelemetry& tel);

}  // namespace fhn
