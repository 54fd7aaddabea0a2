#pragma once

#include <iosfwd>
#include <span>
#include <vector>

#include "fhn/model.hpp"
#include "fhn/phase_space.hpp"

namespace fhn {

// Limit system: d_t V = N(V) - W - L[V], and bar_mu transported by
// w' = a V + c - b w. The transport is represented through the initial profile
// and the characteristic offset Z(t) = int_0^t e^{bs} (a V(s) + c) ds, so that
//   bar_mu(t, w) = e^{bt} bar_mu0(e^{bt} w - Z(t)).
struct LimitState {
  std::vector<double> V, W, Z;
  double t = 0.0;
  Axis w0;                                   // axis of the initial profiles
  std::vector<std::vector<double>> bar_mu0;  // unit mass per node on w0
  double v_guard = 80.0;                     // |V| above this aborts
};

LimitState make_limit_state(std::vector<double> V0, std::vector<std::vector<double>> bar_mu0, const Axis& w0,
                            const Model& model, double v_guard = 80.0);

// Classical RK4 on (V, W, Z). Throws std::runtime_error if |V| exceeds v_guard.
LimitState step_limit_V(const LimitState& state, double dt, const Model& model);

// bar_mu at the state's time, sampled on target nodes, renormalized per node.
// raw_mass_defect receives the largest |1 - raw discrete mass|.
std::vector<std::vector<double>> evolve_bar_mu(const LimitState& state, const Axis& target, const Model& model,
                                               double* raw_mass_defect = nullptr);
// bar_mu(t, x_ix, w) at a single point.
double bar_mu_value(const LimitState& state, int ix, double w, const Model& model);
// Mean of bar_mu computed from its closed form: e^{-bt}(mean0 + Z).
std::vector<double> bar_mu_mean(const LimitState& state, const Model& model);

// e^{bt} bar_nu0(e^{bt} w) on target nodes (no renormalization). Values whose
// argument leaves axis0 are zero; mass_defect receives |1 - discrete mass|.
std::vector<double> evolve_bar_nu(std::span<const double> bar_nu0, const Axis& axis0, double t, double b,
                                  const Axis& target, double* mass_defect = nullptr);

struct LimitTrajectoryRow {
  double t, x, V, W;
};
void write_limit_csv(std::ostream& os, const std::vector<LimitTrajectoryRow>& rows);
void append_limit_rows(std::vector<LimitTrajectoryRow>& rows, const LimitState& s, const SpatialGrid& space);

}  // namespace fhn
