#include "fhn/kinetic_solver.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

#include "fhn/errors.hpp"
#include "fhn/interp.hpp"
#include "fhn/tridiag.hpp"

namespace fhn {

std::string to_string(SolverMode m) {
  return m == SolverMode::direct_kinetic ? "direct_kinetic" : "rescaled_coupled";
}
std::string to_string(TransportScheme s) { return s == TransportScheme::upwind ? "upwind" : "characteristic"; }

SolverMode solver_mode_from_string(const std::string& s) {
  if (s == "direct_kinetic") return SolverMode::direct_kinetic;
  if (s == "rescaled_coupled") return SolverMode::rescaled_coupled;
  throw std::invalid_argument("unknown solver mode '" + s + "'");
}

TransportScheme transport_scheme_from_string(const std::string& s) {
  if (s == "characteristic") return TransportScheme::characteristic;
  if (s == "upwind") return TransportScheme::upwind;
  throw std::invalid_argument("unknown transport scheme '" + s + "'");
}

void SolverConfig::validate() const {
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be > 0");
  if (!(t_end > 0.0)) throw std::invalid_argument("t_end must be > 0");
  if (!(cfl_safety > 0.0 && cfl_safety < 1.0)) throw std::invalid_argument("cfl_safety must lie in (0, 1)");
  if (checkpoint_every < 0) throw std::invalid_argument("checkpoint_every must be >= 0");
  if (!(recenter_tol > 0.0)) throw std::invalid_argument("recenter_tol must be > 0");
}

void StepTelemetry::merge(const StepTelemetry& o) {
  mass_defect = std::max(mass_defect, o.mass_defect);
  positivity_clamps += o.positivity_clamps;
  clamped_mass += o.clamped_mass;
  substeps = std::max(substeps, o.substeps);
  recenter_v = std::max(recenter_v, o.recenter_v);
  recenter_w = std::max(recenter_w, o.recenter_w);
  stiffness_warning = stiffness_warning || o.stiffness_warning;
}

namespace {

constexpr double kNegTol = 1e-14;

inline double bernoulli(double z) {
  if (std::abs(z) < 1e-8) return 1.0 - 0.5 * z;
  return z / std::expm1(z);
}

struct Workspace {
  std::vector<double> a, b, c, cp, beta, z, line, out;
};

Workspace& workspace() {
  thread_local Workspace ws;
  return ws;
}

// Backward-Euler solve of d_t f = P d_v [ a f + d_v f ] on one slice, where the
// face values z = dv * a are given in ws.z with layout [(face) * nw + j].
// r = dt * P / dv^2.
void implicit_v_solve(double* f, int nv, int nw, double r, Workspace& ws) {
  const std::size_t N = static_cast<std::size_t>(nv) * nw;
  ws.a.assign(N, 0.0);
  ws.b.assign(N, 1.0);
  ws.c.assign(N, 0.0);
  for (int i = 0; i + 1 < nv; ++i) {
    const std::size_t r0 = static_cast<std::size_t>(i) * nw, r1 = r0 + nw;
    for (int j = 0; j < nw; ++j) {
      const double zz = ws.z[r0 + j];
      const double bp = bernoulli(zz), bm = bp + zz;  // B(z), B(-z)
      ws.b[r0 + j] += r * bp;
      ws.c[r0 + j] = -r * bm;
      ws.b[r1 + j] += r * bm;
      ws.a[r1 + j] = -r * bp;
    }
  }
  solve_tridiagonal_batched(nv, nw, ws.a.data(), ws.b.data(), ws.c.data(), f, ws.cp, ws.beta);
}

double sum_span(std::span<const double> s) {
  double acc = 0.0;
  for (double x : s) acc += x;
  return acc;
}

// Clamps entries below zero; counts those below -kNegTol.
void clamp_negative(std::span<double> s, StepTelemetry& tel, double cell) {
  for (double& x : s)
    if (x < 0.0) {
      if (x < -kNegTol) ++tel.positivity_clamps;
      tel.clamped_mass -= x * cell;
      x = 0.0;
    }
}

// Rescales each node to its prescribed mass and records the defect.
void restore_mass(DensityField& f, std::span<const double> target, StepTelemetry& tel) {
  for (int ix = 0; ix < f.nx(); ++ix) {
    const double m = f.mass(ix);
    tel.mass_defect = std::max(tel.mass_defect, std::abs(m - target[ix]));
    if (m > 0.0)
      for (double& x : f.slice_span(ix)) x *= target[ix] / m;
  }
}

std::vector<double> masses(const DensityField& f) {
  std::vector<double> m(f.nx());
  for (int ix = 0; ix < f.nx(); ++ix) m[ix] = f.mass(ix);
  return m;
}

// 4-point Lagrange value at fractional index s, zero outside.
double lagrange_at(std::span<const double> y, double s) {
  const long n = static_cast<long>(y.size());
  if (!(s > -1.0) || !(s < static_cast<double>(n))) return 0.0;
  const double fl = std::floor(s);
  const long k = static_cast<long>(fl);
  const double t = s - fl;
  auto get = [&](long i) { return (i >= 0 && i < n) ? y[i] : 0.0; };
  if (t == 0.0) return get(k);
  const double wm = -t * (t - 1.0) * (t - 2.0) / 6.0;
  const double w0 = (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0;
  const double w1 = -(t + 1.0) * t * (t - 2.0) / 2.0;
  const double w2 = (t + 1.0) * t * (t - 1.0) / 6.0;
  return wm * get(k - 1) + w0 * get(k) + w1 * get(k + 1) + w2 * get(k + 2);
}

// Translates every (x, v) line in w by shift_cells(ix, iv) cells, keeping each
// line's mass.
template <class F>
void translate_w_lines(DensityField& f, F shift_cells, StepTelemetry& tel) {
  Workspace& ws = workspace();
  const int nv = f.grid().nv(), nw = f.grid().nw();
  const double cell = f.grid().cell_area();
  ws.out.resize(nw);
  for (int ix = 0; ix < f.nx(); ++ix)
    for (int i = 0; i < nv; ++i) {
      const double s = shift_cells(ix, i);
      if (s == 0.0) continue;
      std::span<double> line(&f.at(ix, i, 0), nw);
      const double before = sum_span(line);
      lagrange_shift(line, ws.out, s);
      std::copy(ws.out.begin(), ws.out.end(), line.begin());
      clamp_negative(line, tel, cell);
      const double after = sum_span(line);
      if (after > 0.0 && before > 0.0)
        for (double& x : line) x *= before / after;
    }
}

// Integral of theta(tau) exp(b tau) over [t0, t1] by composite Simpson.
double theta_exp_integral(double t0, double t1, double rho, double eps, double b) {
  const int n = 16;
  const double h = (t1 - t0) / n;
  double acc = 0.0;
  for (int k = 0; k <= n; ++k) {
    const double t = t0 + k * h;
    const double wgt = (k == 0 || k == n) ? 1.0 : (k % 2 ? 4.0 : 2.0);
    acc += wgt * theta(t, rho, eps) * std::exp(b * t);
  }
  return acc * h / 3.0;
}

// Co-moving w-translation over [t0, t1] on the hat grid.
void rescaled_w_translation(DensityField& nu, double t0, double t1, double eps, double Lw0, const Model& model,
                            StepTelemetry& tel) {
  const double a = model.adaptation().a, b = model.adaptation().b;
  if (a == 0.0) return;
  const double dw_hat = 2.0 * Lw0 / (nu.grid().nw() - 1);
  std::vector<double> I(nu.nx());
  for (int ix = 0; ix < nu.nx(); ++ix) I[ix] = theta_exp_integral(t0, t1, model.rho0().values[ix], eps, b);
  const Axis& vax = nu.grid().v;
  translate_w_lines(nu, [&](int ix, int iv) { return a * vax.node(iv) * I[ix] / dw_hat; }, tel);
}

// Multiplies values by exp(b (t1 - t0)) and contracts the w grid to time t1.
void contract_w_grid(DensityField& nu, double t0, double t1, double Lw0, double b) {
  const double g = std::exp(b * (t1 - t0));
  for (double& x : nu.data()) x *= g;
  PhaseGrid pg = nu.grid();
  pg.w = Axis(pg.w.n, Lw0 * std::exp(-b * t1));
  nu.set_grid(pg);
}

void rescaled_upwind_transport(DensityField& nu, double t0, double t1, double eps, double Lw0,
                               std::span<const double> V, std::span<const double> E, const Model& model,
                               double cfl, StepTelemetry& tel) {
  // Transport on the hat grid: d_v(B0/theta nu) + d_what(a theta v e^{bt} nu).
  const double a = model.adaptation().a, b = model.adaptation().b;
  const double tm = 0.5 * (t0 + t1);
  const PhaseGrid phys = nu.grid();
  const double wscale = std::exp(-b * tm);
  std::vector<double> th(nu.nx());
  for (int ix = 0; ix < nu.nx(); ++ix) th[ix] = theta(tm, model.rho0().values[ix], eps);
  const auto& psr = model.psi_rho();
  DriftFn dv = [&](int ix, double v, double what) {
    const double T = th[ix], w = what * wscale;
    return (model.drift_spec()(V[ix] + T * v) - model.drift_spec()(V[ix]) - w - T * v * psr[ix] - E[ix]) / T;
  };
  DriftFn dw = [&](int ix, double v, double) { return a * th[ix] * v / wscale; };
  DensityField hat = nu;
  PhaseGrid hg = phys;
  hg.w = Axis(phys.w.n, Lw0);
  hat.set_grid(hg);
  const double h = t1 - t0;
  const double max_dt = transport_max_dt(hat, dv, dw, cfl);
  const int n = std::max(1, static_cast<int>(std::ceil(h / max_dt)));
  tel.substeps = std::max(tel.substeps, n);
  for (int k = 0; k < n; ++k) hat = transport_step(hat, dv, dw, h / n, 1.0);
  hat.set_grid(phys);
  nu = std::move(hat);
}

}  // namespace

CoupledState make_coupled_state(DensityField nu0, MacroFields macro0, double epsilon, const Model& model) {
  if (!(epsilon > 0.0 && epsilon <= 1.0)) throw std::invalid_argument("epsilon must lie in (0, 1]");
  if (nu0.nx() != model.nx()) throw ShapeError("density does not match model spatial grid");
  if (macro0.V.size() != static_cast<std::size_t>(model.nx()) || macro0.W.size() != macro0.V.size())
    throw ShapeError("macro fields do not match spatial grid");
  nu0.require_normalized(1e-8);
  nu0.normalize();
  CoupledState s;
  s.t = nu0.time();
  s.epsilon = epsilon;
  s.Lw0 = nu0.grid().w.half_width * std::exp(model.adaptation().b * s.t);
  s.theta = theta_field(s.t, model.rho0().values, epsilon);
  s.macro = std::move(macro0);
  s.nu = std::move(nu0);
  const MacroFields m = macro_moments(s.nu);
  for (int ix = 0; ix < s.nu.nx(); ++ix)
    if (std::abs(m.V[ix]) > 1e-6 || std::abs(m.W[ix]) > 1e-6)
      throw ContractViolation("rescaled-frame density must be centered");
  s.E.resize(s.nu.nx());
  for (int ix = 0; ix < s.nu.nx(); ++ix)
    s.E[ix] = model.nonlinearity_error_rescaled(s.nu.slice(ix), s.macro.V[ix], s.theta.values[ix]);
  return s;
}

DensityField fokker_planck_step(const DensityField& nu, double dt, std::span<const double> prefactor,
                                std::span<const double> rho0, StepTelemetry* tel) {
  const int nx = nu.nx(), nv = nu.grid().nv(), nw = nu.grid().nw();
  if (prefactor.size() != static_cast<std::size_t>(nx) || rho0.size() != static_cast<std::size_t>(nx))
    throw ShapeError("fokker_planck_step: per-node inputs do not match grid");
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be > 0");
  DensityField out = nu;
  Workspace& ws = workspace();
  const double dv = nu.grid().dv();
  StepTelemetry local;
  const std::vector<double> before = masses(nu);
  ws.z.resize(static_cast<std::size_t>(nv - 1) * nw);
  for (int ix = 0; ix < nx; ++ix) {
    if (!(prefactor[ix] > 0.0)) throw std::invalid_argument("prefactor must be positive");
    for (int i = 0; i + 1 < nv; ++i) {
      const double vf = nu.grid().v.node(i) + 0.5 * dv;
      std::fill_n(ws.z.begin() + static_cast<std::ptrdiff_t>(i) * nw, nw, dv * rho0[ix] * vf);
    }
    implicit_v_solve(out.slice_span(ix).data(), nv, nw, dt * prefactor[ix] / (dv * dv), ws);
    clamp_negative(out.slice_span(ix), local, nu.grid().cell_area());
  }
  for (int ix = 0; ix < nx; ++ix)
    local.mass_defect = std::max(local.mass_defect, std::abs(out.mass(ix) - before[ix]));
  if (tel) tel->merge(local);
  return out;
}

double transport_max_dt(const DensityField& nu, const DriftFn& drift_v, const DriftFn& drift_w, double cfl) {
  const PhaseGrid& g = nu.grid();
  const double dv = g.dv(), dw = g.dw();
  double rate_v = 0.0, rate_w = 0.0;
  for (int ix = 0; ix < nu.nx(); ++ix)
    for (int i = 0; i < g.nv(); ++i)
      for (int j = 0; j < g.nw(); ++j) {
        const double v = g.v.node(i), w = g.w.node(j);
        // Outflow through the two faces of the cell.
        const double ovr = i + 1 < g.nv() ? std::max(0.0, drift_v(ix, v + 0.5 * dv, w)) : 0.0;
        const double ovl = i > 0 ? std::max(0.0, -drift_v(ix, v - 0.5 * dv, w)) : 0.0;
        const double owr = j + 1 < g.nw() ? std::max(0.0, drift_w(ix, v, w + 0.5 * dw)) : 0.0;
        const double owl = j > 0 ? std::max(0.0, -drift_w(ix, v, w - 0.5 * dw)) : 0.0;
        rate_v = std::max(rate_v, (ovr + ovl) / dv);
        rate_w = std::max(rate_w, (owr + owl) / dw);
      }
  const double rate = std::max(rate_v, rate_w);
  return rate > 0.0 ? cfl / rate : INFINITY;
}

DensityField transport_step(const DensityField& nu, const DriftFn& drift_v, const DriftFn& drift_w, double dt,
                            double cfl) {
  const double max_dt = transport_max_dt(nu, drift_v, drift_w, cfl);
  if (dt > max_dt * (1.0 + 1e-12)) {
    std::ostringstream os;
    os << "transport step violates CFL: dt=" << dt << " exceeds admissible " << max_dt;
    throw CflViolation(os.str(), max_dt);
  }
  const PhaseGrid& g = nu.grid();
  const int nv = g.nv(), nw = g.nw();
  const double dv = g.dv(), dw = g.dw();
  DensityField mid = nu, out = nu;
  std::vector<double> F(std::max(nv, nw) + 1);
  // v sweep
  for (int ix = 0; ix < nu.nx(); ++ix)
    for (int j = 0; j < nw; ++j) {
      const double w = g.w.node(j);
      F[0] = F[nv] = 0.0;
      for (int i = 0; i + 1 < nv; ++i) {
        const double u = drift_v(ix, g.v.node(i) + 0.5 * dv, w);
        F[i + 1] = u > 0.0 ? u * nu.at(ix, i, j) : u * nu.at(ix, i + 1, j);
      }
      for (int i = 0; i < nv; ++i) mid.at(ix, i, j) = nu.at(ix, i, j) - dt / dv * (F[i + 1] - F[i]);
    }
  // w sweep
  for (int ix = 0; ix < nu.nx(); ++ix)
    for (int i = 0; i < nv; ++i) {
      const double v = g.v.node(i);
      F[0] = F[nw] = 0.0;
      for (int j = 0; j + 1 < nw; ++j) {
        const double u = drift_w(ix, v, g.w.node(j) + 0.5 * dw);
        F[j + 1] = u > 0.0 ? u * mid.at(ix, i, j) : u * mid.at(ix, i, j + 1);
      }
      for (int j = 0; j < nw; ++j) out.at(ix, i, j) = mid.at(ix, i, j) - dt / dw * (F[j + 1] - F[j]);
    }
  for (double& x : out.data())
    if (x < 0.0 && x > -kNegTol) x = 0.0;
  return out;
}

void shift_density(DensityField& f, std::span<const double> v_shift, std::span<const double> w_shift,
                   StepTelemetry* tel) {
  StepTelemetry local;
  Workspace& ws = workspace();
  const int nv = f.grid().nv(), nw = f.grid().nw();
  const double dv = f.grid().dv(), dw = f.grid().dw();
  const std::vector<double> before = masses(f);
  ws.line.resize(nv);
  ws.out.resize(nv);
  for (int ix = 0; ix < f.nx(); ++ix) {
    const double sv = v_shift[ix] / dv;
    if (sv != 0.0)
      for (int j = 0; j < nw; ++j) {
        for (int i = 0; i < nv; ++i) ws.line[i] = f.at(ix, i, j);
        lagrange_shift(ws.line, ws.out, sv);
        for (int i = 0; i < nv; ++i) f.at(ix, i, j) = ws.out[i];
      }
  }
  std::vector<double> sw(f.nx());
  for (int ix = 0; ix < f.nx(); ++ix) sw[ix] = w_shift[ix] / dw;
  ws.out.resize(nw);
  for (int ix = 0; ix < f.nx(); ++ix) {
    if (sw[ix] == 0.0) continue;
    for (int i = 0; i < nv; ++i) {
      std::span<double> line(&f.at(ix, i, 0), nw);
      lagrange_shift(line, ws.out, sw[ix]);
      std::copy(ws.out.begin(), ws.out.end(), line.begin());
    }
  }
  for (int ix = 0; ix < f.nx(); ++ix) clamp_negative(f.slice_span(ix), local, f.grid().cell_area());
  restore_mass(f, before, local);
  if (tel) tel->merge(local);
}

void advance_rescaled_density(DensityField& nu, double t, double dt, double eps, double Lw0,
                              std::span<const double> V_mid, std::span<const double> E_mid, const Model& model,
                              const RescaledStepOptions& opt, StepTelemetry& tel) {
  const double b = model.adaptation().b;
  const double th = t + 0.5 * dt, t1 = t + dt;
  const int nx = nu.nx(), nv = nu.grid().nv(), nw = nu.grid().nw();
  const std::vector<double> before = masses(nu);
  const bool upwind = opt.transport == TransportScheme::upwind;

  // First half: translation then contraction to the midpoint.
  if (upwind)
    rescaled_upwind_transport(nu, t, th, eps, Lw0, V_mid, E_mid, model, opt.cfl_safety, tel);
  else
    rescaled_w_translation(nu, t, th, eps, Lw0, model, tel);
  contract_w_grid(nu, t, th, Lw0, b);

  // Implicit v step at the midpoint.
  Workspace& ws = workspace();
  const PhaseGrid& g = nu.grid();
  const double dv = g.dv();
  const auto& N = model.drift_spec();
  const auto& psr = model.psi_rho();
  ws.z.resize(static_cast<std::size_t>(nv - 1) * nw);
  for (int ix = 0; ix < nx; ++ix) {
    const double rho = model.rho0().values[ix];
    const double T = theta(th, rho, eps);
    const double NV = N(V_mid[ix]);
    for (int i = 0; i + 1 < nv; ++i) {
      const double vf = g.v.node(i) + 0.5 * dv;
      double* zr = ws.z.data() + static_cast<std::size_t>(i) * nw;
      if (upwind) {
        std::fill_n(zr, nw, dv * rho * vf);
        continue;
      }
      const double G = N(V_mid[ix] + T * vf) - NV - T * vf * psr[ix] - E_mid[ix];
      const double base = dv * (rho * vf - T * G);
      const double slope = dv * T;
      for (int j = 0; j < nw; ++j) zr[j] = base + slope * g.w.node(j);
    }
    implicit_v_solve(nu.slice_span(ix).data(), nv, nw, dt / (T * T * dv * dv), ws);
    clamp_negative(nu.slice_span(ix), tel, g.cell_area());
  }

  // Second half.
  // The hat-grid translation is expressed on the contracted grid: undo the
  // contraction temporarily by working in cell units, which are invariant.
  if (upwind) {
    // Values are stored on the midpoint grid; transport in hat coordinates.
    rescaled_upwind_transport(nu, th, t1, eps, Lw0, V_mid, E_mid, model, opt.cfl_safety, tel);
  } else {
    rescaled_w_translation(nu, th, t1, eps, Lw0, model, tel);
  }
  contract_w_grid(nu, th, t1, Lw0, b);
  // Mass at the new time equals the old mass (grid contraction and growth cancel).
  restore_mass(nu, before, tel);
  nu.set_time(t1);
}

CoupledState step_rescaled_coupled(const CoupledState& s, double dt, const Model& model,
                                   const RescaledStepOptions& opt) {
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be > 0");
  const int nx = s.nu.nx();
  const auto& N = model.drift_spec();
  const auto& ad = model.adaptation();
  const auto& rho = model.rho0().values;
  const double t = s.t, th = t + 0.5 * dt, t1 = t + dt;

  auto errors = [&](std::span<const double> V, double tt) {
    std::vector<double> E(nx);
    for (int ix = 0; ix < nx; ++ix)
      E[ix] = model.nonlinearity_error_rescaled(s.nu.slice(ix), V[ix], theta(tt, rho[ix], s.epsilon));
    return E;
  };
  auto rhs = [&](std::span<const double> V, std::span<const double> W, std::span<const double> E,
                 std::vector<double>& dV, std::vector<double>& dW) {
    const std::vector<double> L = model.nonlocal_operator_L(V);
    dV.resize(nx);
    dW.resize(nx);
    for (int ix = 0; ix < nx; ++ix) {
      dV[ix] = N(V[ix]) + E[ix] - W[ix] - L[ix];
      dW[ix] = ad.a * V[ix] + ad.c - ad.b * W[ix];
    }
  };

  // Explicit midpoint rule for the macro ODEs, E re-evaluated at the stage.
  std::vector<double> k1V, k1W, k2V, k2W;
  const std::vector<double> E0 = errors(s.macro.V, t);
  rhs(s.macro.V, s.macro.W, E0, k1V, k1W);
  std::vector<double> Vh(nx), Wh(nx);
  for (int ix = 0; ix < nx; ++ix) {
    Vh[ix] = s.macro.V[ix] + 0.5 * dt * k1V[ix];
    Wh[ix] = s.macro.W[ix] + 0.5 * dt * k1W[ix];
  }
  const std::vector<double> Eh = errors(Vh, th);
  rhs(Vh, Wh, Eh, k2V, k2W);

  CoupledState out;
  out.epsilon = s.epsilon;
  out.Lw0 = s.Lw0;
  out.closure_defect = s.closure_defect;
  out.telemetry = s.telemetry;
  out.macro.V.resize(nx);
  out.macro.W.resize(nx);
  for (int ix = 0; ix < nx; ++ix) {
    out.macro.V[ix] = s.macro.V[ix] + dt * k2V[ix];
    out.macro.W[ix] = s.macro.W[ix] + dt * k2W[ix];
  }

  StepTelemetry tel;
  out.nu = s.nu;
  advance_rescaled_density(out.nu, t, dt, s.epsilon, s.Lw0, Vh, Eh, model, opt, tel);
  out.t = t1;
  out.theta = theta_field(t1, rho, s.epsilon);

  // Keep the frame centered: absorb residual means into (V, W).
  const MacroFields m = macro_moments(out.nu);
  double worst = 0.0;
  for (int ix = 0; ix < nx; ++ix) worst = std::max({worst, std::abs(m.V[ix]), std::abs(m.W[ix])});
  if (worst > opt.recenter_tol) {
    std::vector<double> sv(nx), sw(nx);
    for (int ix = 0; ix < nx; ++ix) {
      out.macro.V[ix] += out.theta.values[ix] * m.V[ix];
      out.macro.W[ix] += m.W[ix];
      tel.recenter_v = std::max(tel.recenter_v, std::abs(out.theta.values[ix] * m.V[ix]));
      tel.recenter_w = std::max(tel.recenter_w, std::abs(m.W[ix]));
      sv[ix] = -m.V[ix];
      sw[ix] = -m.W[ix];
    }
    shift_density(out.nu, sv, sw, &tel);
    out.closure_defect += tel.recenter_v;
  }
  out.E.resize(nx);
  for (int ix = 0; ix < nx; ++ix)
    out.E[ix] = model.nonlinearity_error_rescaled(out.nu.slice(ix), out.macro.V[ix], out.theta.values[ix]);
  out.telemetry.merge(tel);
  return out;
}

namespace {

// Semi-Lagrangian update along the exact characteristics of w' = a v + c - b w
// over time h, line by line, mass-preserving per line.
void direct_w_characteristics(DensityField& mu, double h, const Model& model, StepTelemetry& tel) {
  const auto& ad = model.adaptation();
  const PhaseGrid& g = mu.grid();
  const int nv = g.nv(), nw = g.nw();
  const double beta = std::exp(ad.b * h);
  Workspace& ws = workspace();
  ws.out.resize(nw);
  for (int ix = 0; ix < mu.nx(); ++ix)
    for (int i = 0; i < nv; ++i) {
      std::span<double> line(&mu.at(ix, i, 0), nw);
      const double before = sum_span(line);
      if (before == 0.0) continue;
      const double wstar = (ad.a * g.v.node(i) + ad.c) / ad.b;
      for (int j = 0; j < nw; ++j) {
        const double wd = wstar + (g.w.node(j) - wstar) * beta;
        ws.out[j] = beta * lagrange_at(line, g.w.index_of(wd));
      }
      std::copy(ws.out.begin(), ws.out.end(), line.begin());
      clamp_negative(line, tel, g.cell_area());
      const double after = sum_span(line);
      if (after > 0.0)
        for (double& x : line) x *= before / after;
    }
}

void direct_upwind_transport(DensityField& mu, double h, const Model& model, double cfl, StepTelemetry& tel) {
  const auto& N = model.drift_spec();
  const MacroFields m = macro_moments(mu);
  const auto& psr = model.psi_rho();
  std::vector<double> rv(mu.nx());
  for (int ix = 0; ix < mu.nx(); ++ix) rv[ix] = model.rho0().values[ix] * m.V[ix];
  const std::vector<double> cr = model.conv_right(rv);
  DriftFn dv = [&](int ix, double v, double w) { return N(v) - w - (v * psr[ix] - cr[ix]); };
  DriftFn dw = [&](int, double v, double w) { return model.adaptation()(v, w); };
  const double max_dt = transport_max_dt(mu, dv, dw, cfl);
  const int n = std::max(1, static_cast<int>(std::ceil(h / max_dt)));
  tel.substeps = std::max(tel.substeps, n);
  for (int k = 0; k < n; ++k) mu = transport_step(mu, dv, dw, h / n, 1.0);
}

}  // namespace

DensityField step_direct_kinetic(const DensityField& mu_in, double dt, double eps, const Model& model,
                                 const DirectStepOptions& opt, StepTelemetry* tel_out) {
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be > 0");
  if (!(eps > 0.0 && eps <= 1.0)) throw std::invalid_argument("epsilon must lie in (0, 1]");
  StepTelemetry tel;
  DensityField mu = mu_in;
  const std::vector<double> before = masses(mu);
  if (eps < mu.grid().dv()) tel.stiffness_warning = true;
  const bool upwind = opt.transport == TransportScheme::upwind;
  auto half = [&] {
    if (upwind)
      direct_upwind_transport(mu, 0.5 * dt, model, opt.cfl_safety, tel);
    else
      direct_w_characteristics(mu, 0.5 * dt, model, tel);
  };
  half();
  restore_mass(mu, before, tel);

  const PhaseGrid& g = mu.grid();
  const int nv = g.nv(), nw = g.nw();
  const double dv = g.dv();
  const MacroFields m = macro_moments(mu);
  std::vector<double> rv(mu.nx());
  for (int ix = 0; ix < mu.nx(); ++ix) rv[ix] = model.rho0().values[ix] * m.V[ix];
  const std::vector<double> cr = model.conv_right(rv);
  const auto& psr = model.psi_rho();
  const auto& N = model.drift_spec();
  Workspace& ws = workspace();
  ws.z.resize(static_cast<std::size_t>(nv - 1) * nw);
  for (int ix = 0; ix < mu.nx(); ++ix) {
    const double k = model.rho0().values[ix] / eps;
    for (int i = 0; i + 1 < nv; ++i) {
      const double vf = g.v.node(i) + 0.5 * dv;
      double* zr = ws.z.data() + static_cast<std::size_t>(i) * nw;
      const double relax = k * (vf - m.V[ix]);
      if (upwind) {
        std::fill_n(zr, nw, dv * relax);
        continue;
      }
      const double base = dv * (relax - N(vf) + vf * psr[ix] - cr[ix]);
      for (int j = 0; j < nw; ++j) zr[j] = base + dv * g.w.node(j);
    }
    implicit_v_solve(mu.slice_span(ix).data(), nv, nw, dt / (dv * dv), ws);
    clamp_negative(mu.slice_span(ix), tel, g.cell_area());
  }
  restore_mass(mu, before, tel);
  half();
  restore_mass(mu, before, tel);
  mu.set_time(mu_in.time() + dt);
  if (tel_out) tel_out->merge(tel);
  return mu;
}

std::vector<double> marginal_residual(const CoupledState& prev, const CoupledState& curr, const Model& model) {
  const double dt = curr.t - prev.t;
  if (!(dt > 0.0)) throw std::invalid_argument("marginal_residual needs increasing times");
  if (prev.nu.nx() != curr.nu.nx()) throw ShapeError("states on different spatial grids");
  const double a = model.adaptation().a, b = model.adaptation().b;
  const int nx = curr.nu.nx();
  const PhaseGrid& g1 = curr.nu.grid();
  const int nw = g1.nw();
  const double dw = g1.dw();
  std::vector<double> out(nx);

  // Marginal and current J = int v nu dv of a state, resampled on curr's w nodes.
  auto profiles = [&](const CoupledState& s, int ix, std::vector<double>& bar, std::vector<double>& J) {
    const Slice sl = s.nu.slice(ix);
    const PhaseGrid& g = sl.grid;
    std::vector<double> b0 = w_marginal(sl), j0(g.nw(), 0.0);
    for (int i = 0; i < g.nv(); ++i)
      for (int j = 0; j < g.nw(); ++j) j0[j] += g.v.node(i) * sl(i, j) * g.dv();
    bar.resize(nw);
    J.resize(nw);
    Pchip pb(b0), pj(j0);
    for (int j = 0; j < nw; ++j) {
      const double s_idx = g.w.index_of(g1.w.node(j));
      bar[j] = pb(s_idx);
      J[j] = pj(s_idx);
    }
  };
  auto spatial = [&](const std::vector<double>& bar, const std::vector<double>& J, double th, int j) {
    auto d = [&](auto f) {
      if (j == 0) return (f(1) - f(0)) / dw;
      if (j == nw - 1) return (f(nw - 1) - f(nw - 2)) / dw;
      return (f(j + 1) - f(j - 1)) / (2.0 * dw);
    };
    const double dwbar = d([&](int k) { return g1.w.node(k) * bar[k]; });
    const double dJ = a == 0.0 ? 0.0 : d([&](int k) { return J[k]; });
    return -b * dwbar + a * th * dJ;
  };
  std::vector<double> bar0, J0, bar1, J1;
  for (int ix = 0; ix < nx; ++ix) {
    profiles(prev, ix, bar0, J0);
    profiles(curr, ix, bar1, J1);
    double acc = 0.0;
    for (int j = 0; j < nw; ++j) {
      const double r = (bar1[j] - bar0[j]) / dt +
                       0.5 * (spatial(bar0, J0, prev.theta.values[ix], j) + spatial(bar1, J1, curr.theta.values[ix], j));
      acc += std::abs(r);
    }
    out[ix] = acc * dw;
  }
  return out;
}

std::vector<std::vector<double>> marginal_residual(const std::vector<CoupledState>& history, const Model& model) {
  if (history.size() < 2) throw std::invalid_argument("marginal_residual needs at least two stored states");
  std::vector<std::vector<double>> out;
  for (std::size_t k = 1; k < history.size(); ++k) out.push_back(marginal_residual(history[k - 1], history[k], model));
  return out;
}

void write_checkpoint(const std::string& stem, const DensityField& f, double epsilon, const MacroFields& macro,
                      const StepTelemetry& tel) {
  write_density_dump(stem + ".bin", f, epsilon);
  nlohmann::json j = {{"t", f.time()},
                      {"eps", epsilon},
                      {"V", macro.V},
                      {"W", macro.W},
                      {"mass_defect", tel.mass_defect},
                      {"positivity_clamps", tel.positivity_clamps}};
  std::ofstream os(stem + ".json");
  if (!os) throw std::runtime_error("cannot open " + stem + ".json for writing");
  os << j.dump(2) << '\n';
}

void write_checkpoint(const std::string& stem, const CoupledState& s) {
  write_density_dump(stem + ".bin", s.nu, s.epsilon);
  nlohmann::json j = {{"t", s.t},
                      {"eps", s.epsilon},
                      {"V", s.macro.V},
                      {"W", s.macro.W},
                      {"theta", s.theta.values},
                      {"Lw0", s.Lw0},
                      {"closure_defect", s.closure_defect},
                      {"mass_defect", s.telemetry.mass_defect},
                      {"positivity_clamps", s.telemetry.positivity_clamps}};
  std::ofstream os(stem + ".json");
  if (!os) throw std::runtime_error("cannot open " + stem + ".json for writing");
  os << j.dump(2) << '\n';
}

}  // namespace fhn
