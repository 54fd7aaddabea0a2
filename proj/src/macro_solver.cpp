#include "fhn/macro_solver.hpp"

#include <cmath>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "fhn/errors.hpp"
#include "fhn/interp.hpp"

namespace fhn {

LimitState make_limit_state(std::vector<double> V0, std::vector<std::vector<double>> bar_mu0, const Axis& w0,
                            const Model& model, double v_guard) {
  const std::size_t nx = static_cast<std::size_t>(model.nx());
  if (V0.size() != nx || bar_mu0.size() != nx) throw ShapeError("limit state does not match spatial grid");
  LimitState s;
  s.V = std::move(V0);
  s.W.assign(nx, 0.0);
  s.Z.assign(nx, 0.0);
  s.w0 = w0;
  s.v_guard = v_guard;
  for (std::size_t ix = 0; ix < nx; ++ix) {
    auto& p = bar_mu0[ix];
    if (p.size() != static_cast<std::size_t>(w0.n)) throw ShapeError("bar_mu0 profile length");
    double m = 0.0, mw = 0.0;
    for (int j = 0; j < w0.n; ++j) {
      if (p[j] < 0.0) throw ContractViolation("bar_mu0 must be non-negative");
      m += p[j];
      mw += p[j] * w0.node(j);
    }
    m *= w0.spacing();
    if (!(m > 0.0)) throw ContractViolation("bar_mu0 has zero mass");
    for (double& x : p) x /= m;
    s.W[ix] = mw * w0.spacing() / m;
  }
  s.bar_mu0 = std::move(bar_mu0);
  return s;
}

LimitState step_limit_V(const LimitState& s, double dt, const Model& model) {
  const int nx = model.nx();
  const auto& N = model.drift_spec();
  const auto& ad = model.adaptation();
  using Vec = std::vector<double>;
  auto f = [&](double t, const Vec& V, const Vec& W, Vec& dV, Vec& dW, Vec& dZ) {
    const Vec L = model.nonlocal_operator_L(V);
    dV.resize(nx);
    dW.resize(nx);
    dZ.resize(nx);
    const double eb = std::exp(ad.b * t);
    for (int i = 0; i < nx; ++i) {
      dV[i] = N(V[i]) - W[i] - L[i];
      dW[i] = ad.a * V[i] + ad.c - ad.b * W[i];
      dZ[i] = eb * (ad.a * V[i] + ad.c);
    }
  };
  Vec k1V, k1W, k1Z, k2V, k2W, k2Z, k3V, k3W, k3Z, k4V, k4W, k4Z, V(nx), W(nx);
  f(s.t, s.V, s.W, k1V, k1W, k1Z);
  for (int i = 0; i < nx; ++i) V[i] = s.V[i] + 0.5 * dt * k1V[i], W[i] = s.W[i] + 0.5 * dt * k1W[i];
  f(s.t + 0.5 * dt, V, W, k2V, k2W, k2Z);
  for (int i = 0; i < nx; ++i) V[i] = s.V[i] + 0.5 * dt * k2V[i], W[i] = s.W[i] + 0.5 * dt * k2W[i];
  f(s.t + 0.5 * dt, V, W, k3V, k3W, k3Z);
  for (int i = 0; i < nx; ++i) V[i] = s.V[i] + dt * k3V[i], W[i] = s.W[i] + dt * k3W[i];
  f(s.t + dt, V, W, k4V, k4W, k4Z);
  LimitState out = s;
  out.t = s.t + dt;
  for (int i = 0; i < nx; ++i) {
    out.V[i] = s.V[i] + dt / 6.0 * (k1V[i] + 2 * k2V[i] + 2 * k3V[i] + k4V[i]);
    out.W[i] = s.W[i] + dt / 6.0 * (k1W[i] + 2 * k2W[i] + 2 * k3W[i] + k4W[i]);
    out.Z[i] = s.Z[i] + dt / 6.0 * (k1Z[i] + 2 * k2Z[i] + 2 * k3Z[i] + k4Z[i]);
    if (!std::isfinite(out.V[i]) || std::abs(out.V[i]) > s.v_guard) {
      std::ostringstream os;
      os << "limit voltage blew up at node " << i << ", t=" << out.t << ": V=" << out.V[i];
      throw std::runtime_error(os.str());
    }
  }
  return out;
}

double bar_mu_value(const LimitState& s, int ix, double w, const Model& model) {
  const double eb = std::exp(model.adaptation().b * s.t);
  Pchip p(s.bar_mu0[ix]);
  return eb * p(s.w0.index_of(eb * w - s.Z[ix]));
}

std::vector<std::vector<double>> evolve_bar_mu(const LimitState& s, const Axis& target, const Model& model,
                                               double* raw_mass_defect) {
  const double eb = std::exp(model.adaptation().b * s.t);
  std::vector<std::vector<double>> out(s.bar_mu0.size(), std::vector<double>(target.n));
  double worst = 0.0;
  for (std::size_t ix = 0; ix < out.size(); ++ix) {
    Pchip p(s.bar_mu0[ix]);
    double m = 0.0;
    for (int j = 0; j < target.n; ++j) {
      out[ix][j] = eb * p(s.w0.index_of(eb * target.node(j) - s.Z[ix]));
      m += out[ix][j];
    }
    m *= target.spacing();
    worst = std::max(worst, std::abs(1.0 - m));
    if (m > 0.0)
      for (double& x : out[ix]) x /= m;
  }
  if (raw_mass_defect) *raw_mass_defect = worst;
  return out;
}

std::vector<double> bar_mu_mean(const LimitState& s, const Model& model) {
  const double emb = std::exp(-model.adaptation().b * s.t);
  std::vector<double> out(s.bar_mu0.size());
  for (std::size_t ix = 0; ix < out.size(); ++ix) {
    double m0 = 0.0;
    for (int j = 0; j < s.w0.n; ++j) m0 += s.w0.node(j) * s.bar_mu0[ix][j];
    m0 *= s.w0.spacing();
    out[ix] = emb * (m0 + s.Z[ix]);
  }
  return out;
}

std::vector<double> evolve_bar_nu(std::span<const double> bar_nu0, const Axis& axis0, double t, double b,
                                  const Axis& target, double* mass_defect) {
  if (bar_nu0.size() != static_cast<std::size_t>(axis0.n)) throw ShapeError("bar_nu0 profile length");
  if (t < 0.0) throw std::invalid_argument("evolve_bar_nu needs t >= 0");
  const double eb = std::exp(b * t);
  Pchip p(bar_nu0);
  std::vector<double> out(target.n);
  double m = 0.0;
  for (int j = 0; j < target.n; ++j) {
    // Snap to a node when the argument lands on one up to round-off.
    double s = axis0.index_of(eb * target.node(j));
    const double r = std::round(s);
    if (std::abs(s - r) < 1e-9) s = r;
    out[j] = eb * p(s);
    m += out[j];
  }
  if (mass_defect) *mass_defect = std::abs(1.0 - m * target.spacing());
  return out;
}

void append_limit_rows(std::vector<LimitTrajectoryRow>& rows, const LimitState& s, const SpatialGrid& space) {
  for (int ix = 0; ix < space.nx; ++ix) rows.push_back({s.t, space.x(ix), s.V[ix], s.W[ix]});
}

void write_limit_csv(std::ostream& os, const std::vector<LimitTrajectoryRow>& rows) {
  os << "t,x,V,W\n";
  os.precision(17);
  for (const auto& r : rows) os << r.t << ',' << r.x << ',' << r.V << ',' << r.W << '\n';
}

}  // namespace fhn
