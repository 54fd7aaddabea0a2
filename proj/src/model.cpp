#include "fhn/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "fhn/errors.hpp"

namespace fhn {

double DriftSpec::operator()(double v) const {
  double acc = 0.0;
  for (auto it = coefficients.rbegin(); it != coefficients.rend(); ++it) acc = acc * v + *it;
  return acc;
}

double DriftSpec::derivative(double v) const {
  double acc = 0.0;
  for (std::size_t k = coefficients.size(); k-- > 1;) acc = acc * v + static_cast<double>(k) * coefficients[k];
  return acc;
}

int DriftSpec::degree() const {
  int d = static_cast<int>(coefficients.size()) - 1;
  while (d > 0 && coefficients[d] == 0.0) --d;
  return d;
}

void DriftSpec::validate() const {
  if (coefficients.empty()) throw std::invalid_argument("drift needs coefficients");
  for (double c : coefficients)
    if (!std::isfinite(c)) throw std::invalid_argument("drift coefficients must be finite");
  if (growth_exponent_p < 2) throw std::invalid_argument("growth exponent p must be >= 2");
  const int d = degree();
  if (d < 3 || d % 2 == 0 || coefficients[d] >= 0.0)
    throw std::invalid_argument("drift must have odd degree >= 3 with negative leading coefficient");
}

double AdaptationParams::operator()(double v, double w) const { return a * v - b * w + c; }

void AdaptationParams::validate() const {
  if (!std::isfinite(a) || !std::isfinite(c)) throw std::invalid_argument("adaptation parameters must be finite");
  if (!(b > 0.0) || !std::isfinite(b)) throw std::invalid_argument("adaptation parameter b must be > 0");
}

void SpatialDensity::validate() const {
  if (!(m_star > 0.0)) throw std::invalid_argument("m_star must be > 0");
  for (double r : values)
    if (!(r >= m_star * (1 - 1e-12) && r <= (1.0 / m_star) * (1 + 1e-12)))
      throw std::invalid_argument("rho0 outside [m_star, 1/m_star]");
}

SpatialDensity cosine_density(const SpatialGrid& space, double base, double amplitude, double m_star) {
  SpatialDensity d;
  d.m_star = m_star;
  d.values.resize(space.nx);
  for (int i = 0; i < space.nx; ++i)
    d.values[i] = std::clamp(base + amplitude * std::cos(2.0 * std::numbers::pi * space.x(i)), m_star, 1.0 / m_star);
  return d;
}

SpatialDensity constant_density(const SpatialGrid& space, double value, double m_star) {
  return SpatialDensity{std::vector<double>(space.nx, value), m_star};
}

std::string to_string(KernelKind k) {
  switch (k) {
    case KernelKind::gaussian: return "gaussian";
    case KernelKind::exponential: return "exponential";
    case KernelKind::constant: return "constant";
    case KernelKind::table: return "table";
  }
  return "?";
}

KernelKind kernel_kind_from_string(const std::string& s) {
  if (s == "gaussian") return KernelKind::gaussian;
  if (s == "exponential") return KernelKind::exponential;
  if (s == "constant") return KernelKind::constant;
  if (s == "table" || s == "custom-table") return KernelKind::table;
  throw std::invalid_argument("unknown kernel kind '" + s + "'");
}

std::string AssumptionReport::summary() const {
  std::ostringstream os;
  os << "leading_coefficient_ok=" << leading_coefficient_ok << " growth_ratio_sup=" << growth_ratio_sup
     << " omega_decreasing=" << omega_decreasing << " confinement_ok=" << confinement_ok
     << " kernel_bound=" << kernel_bound << " rho_bounds_ok=" << rho_bounds_ok;
  return os.str();
}

Model::Model(DriftSpec drift, AdaptationParams adaptation, KernelSpec kernel, SpatialDensity rho0,
             SpatialGrid space)
    : drift_(std::move(drift)), adapt_(adaptation), kernel_(std::move(kernel)), rho0_(std::move(rho0)),
      space_(space) {
  drift_.validate();
  adapt_.validate();
  rho0_.validate();
  const int nx = space_.nx;
  if (rho0_.values.size() != static_cast<std::size_t>(nx)) throw ShapeError("rho0 does not match spatial grid");
  if (!(kernel_.exponent_r > 1.0)) throw std::invalid_argument("kernel exponent r must be > 1");
  wx_ = space_.weights();
  psi_.assign(static_cast<std::size_t>(nx) * nx, 0.0);
  auto need = [&](std::size_t k) {
    if (kernel_.parameters.size() < k) throw std::invalid_argument("kernel " + to_string(kernel_.kind) + " needs parameters");
  };
  switch (kernel_.kind) {
    case KernelKind::gaussian: {
      need(1);
      const double s = kernel_.parameters[0];
      if (!(s > 0.0)) throw std::invalid_argument("gaussian kernel sigma must be > 0");
      for (int i = 0; i < nx; ++i)
        for (int j = 0; j < nx; ++j) {
          const double d = space_.x(i) - space_.x(j);
          psi_[i * nx + j] = std::exp(-0.5 * d * d / (s * s)) / (std::sqrt(2.0 * std::numbers::pi) * s);
        }
      break;
    }
    case KernelKind::exponential: {
      need(1);
      const double l = kernel_.parameters[0];
      if (!(l > 0.0)) throw std::invalid_argument("exponential kernel lambda must be > 0");
      for (int i = 0; i < nx; ++i)
        for (int j = 0; j < nx; ++j) psi_[i * nx + j] = std::exp(-std::abs(space_.x(i) - space_.x(j)) / l) / (2.0 * l);
      break;
    }
    case KernelKind::constant:
      need(1);
      std::fill(psi_.begin(), psi_.end(), kernel_.parameters[0]);
      break;
    case KernelKind::table:
      if (kernel_.table.size() != psi_.size()) throw ShapeError("kernel table must be nx*nx");
      psi_ = kernel_.table;
      break;
  }
  for (double p : psi_)
    if (!std::isfinite(p)) throw std::invalid_argument("kernel values must be finite");
  double bound = 0.0;
  for (int i = 0; i < nx; ++i) {
    double acc = 0.0;
    for (int j = 0; j < nx; ++j)
      acc += wx_[j] * (std::abs(psi(j, i)) + std::pow(std::abs(psi(i, j)), kernel_.exponent_r));
    bound = std::max(bound, acc);
  }
  kernel_bound_ = bound;
  psi_rho_ = conv_right(rho0_.values);
}

double Model::eval_drift(double v) const {
  if (!std::isfinite(v)) throw std::domain_error("drift evaluated at non-finite voltage");
  return drift_(v);
}

double Model::eval_adaptation(double v, double w) const {
  if (!std::isfinite(v) || !std::isfinite(w)) throw std::domain_error("adaptation evaluated at non-finite input");
  return adapt_(v, w);
}

double Model::eval_adaptation0(double v, double w) const {
  if (!std::isfinite(v) || !std::isfinite(w)) throw std::domain_error("adaptation evaluated at non-finite input");
  return adapt_.centered(v, w);
}

std::vector<double> Model::conv_right(std::span<const double> g) const {
  const int nx = space_.nx;
  if (g.size() != static_cast<std::size_t>(nx)) throw ShapeError("conv_right: grid function size mismatch");
  std::vector<double> out(nx, 0.0);
  for (int i = 0; i < nx; ++i) {
    double acc = 0.0;
    for (int j = 0; j < nx; ++j) acc += wx_[j] * psi(i, j) * g[j];
    out[i] = acc;
  }
  return out;
}

double Model::nonlocal_interaction(const DensityField& mu, int ix, double v) const {
  if (mu.nx() != space_.nx) throw ShapeError("density does not match spatial grid");
  const MacroFields m = macro_moments(mu);
  return nonlocal_interaction(m.V, ix, v);
}

double Model::nonlocal_interaction(std::span<const double> V, int ix, double v) const {
  const int nx = space_.nx;
  if (V.size() != static_cast<std::size_t>(nx)) throw ShapeError("voltage means size mismatch");
  double acc = 0.0;
  for (int j = 0; j < nx; ++j) acc += wx_[j] * psi(ix, j) * rho0_.values[j] * V[j];
  return v * psi_rho_[ix] - acc;
}

std::vector<double> Model::nonlocal_operator_L(std::span<const double> V) const {
  std::vector<double> rv(V.size());
  for (std::size_t i = 0; i < V.size(); ++i) rv[i] = rho0_.values[i] * V[i];
  const std::vector<double> c = conv_right(rv);
  std::vector<double> out(V.size());
  for (std::size_t i = 0; i < V.size(); ++i) out[i] = V[i] * psi_rho_[i] - c[i];
  return out;
}

double Model::nonlinearity_error(Slice s) const {
  const double m = slice_mass(s);
  if (!(m > 0.0)) throw std::domain_error("nonlinearity error of a zero-mass slice");
  const std::vector<double> vm = v_marginal(s);
  const Axis& ax = s.grid.v;
  double mean = 0.0, en = 0.0;
  for (int i = 0; i < ax.n; ++i) {
    mean += ax.node(i) * vm[i];
    en += drift_(ax.node(i)) * vm[i];
  }
  mean *= ax.spacing() / m;
  en *= ax.spacing() / m;
  return en - drift_(mean);
}

double Model::nonlinearity_error_rescaled(Slice s, double V, double theta) const {
  const std::vector<double> vm = v_marginal(s);
  const Axis& ax = s.grid.v;
  double en = 0.0, m = 0.0;
  for (int i = 0; i < ax.n; ++i) {
    en += (drift_(V + theta * ax.node(i)) - drift_(V)) * vm[i];
    m += vm[i];
  }
  if (!(m > 0.0)) throw std::domain_error("nonlinearity error of a zero-mass slice");
  return en / m;
}

AssumptionReport Model::check_assumptions(double v_max) const {
  AssumptionReport r;
  const int d = drift_.degree();
  r.leading_coefficient_ok = d >= 3 && d % 2 == 1 && drift_.coefficients[d] < 0.0;
  const int samples = 2001;
  double sup_ratio = 0.0, prev_omega = 0.0, max_omega = -INFINITY, sup_conf = -INFINITY;
  bool decreasing = true, finite = true;
  for (int k = 0; k < samples; ++k) {
    const double v = 1.0 + (v_max - 1.0) * k / (samples - 1);
    for (double s : {v, -v}) {
      const double omega = drift_(s) / s;
      const double ratio = std::abs(omega) / std::pow(std::abs(s), drift_.growth_exponent_p - 1);
      if (!std::isfinite(ratio)) finite = false;
      sup_ratio = std::max(sup_ratio, ratio);
      max_omega = std::max(max_omega, omega);
      sup_conf = std::max(sup_conf, s * s * omega - drift_.derivative(s));
    }
    const double om = 0.5 * (drift_(v) / v + drift_(-v) / (-v));
    if (k > 0 && om > prev_omega + 1e-12) decreasing = false;
    prev_omega = om;
  }
  r.growth_ratio_sup = sup_ratio;
  r.growth_ratio_finite = finite && std::isfinite(sup_ratio);
  r.omega_decreasing = decreasing;
  r.omega_max_tail = max_omega;
  r.confinement_ok = std::isfinite(sup_conf);
  r.kernel_bound = kernel_bound_;
  r.rho_bounds_ok = true;
  for (double x : rho0_.values)
    if (x < rho0_.m_star * (1 - 1e-12) || x > (1 + 1e-12) / rho0_.m_star) r.rho_bounds_ok = false;
  return r;
}

}  // namespace fhn
