#include "fhn/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "fhn/errors.hpp"
#include "fhn/interp.hpp"

namespace fhn {

namespace {

constexpr double kPi = std::numbers::pi;
const double kLogOverflow = std::log(1e300);

double safe_log(double x) { return std::log(std::max(x, kLogFloor)); }

void require_same_grid(Slice f, Slice g) {
  if (!(f.grid == g.grid) || f.values.size() != g.values.size()) throw ShapeError("slices on different grids");
}

// Log of the weight, split into its v and w parts.
struct LogWeight {
  double prefactor = 0.0;  // log of the constant
  double cv = 0.0, cw = 0.0;
  double operator()(double v, double w) const { return prefactor + cv * v * v + cw * w * w; }
};

LogWeight log_weight(const WeightSpec& ws, double rho) {
  const double k = ws.kappa;
  switch (ws.variant) {
    case WeightVariant::m_eps:
      return {std::log(2.0 * kPi / std::sqrt(rho * k)), 0.5 * rho, 0.5 * k};
    case WeightVariant::m_minus:
      return {-0.5 * std::log(rho * k), 0.125 * rho, 0.125 * k};
    case WeightVariant::m_plus:
      return {-0.5 * std::log(rho * k), 2.0 * rho, 2.0 * k};
    case WeightVariant::bar_m:
      return {0.5 * std::log(2.0 * kPi / k), 0.0, 0.5 * k};
    case WeightVariant::bar_m_minus:
      return {-0.5 * std::log(k), 0.0, 0.125 * k};
    case WeightVariant::bar_m_plus:
      return {-0.5 * std::log(k), 0.0, 2.0 * k};
  }
  return {};
}

// Accumulates |x|^2 * m with the overflow guard applied in log space.
struct WeightedSum {
  double acc = 0.0;
  bool diverged = false;
  void add(double x, double log_m, double measure) {
    if (x == 0.0) return;
    const double e = 2.0 * std::log(std::abs(x)) + log_m;
    if (e > kLogOverflow) {
      diverged = true;
      return;
    }
    acc += std::exp(e) * measure;
  }
};

// l-th centered difference of a line with zero padding.
std::vector<double> w_derivative(std::span<const double> y, double h, int l) {
  std::vector<double> cur(y.begin(), y.end()), next(y.size());
  const long n = static_cast<long>(y.size());
  auto at = [&](long j) { return j >= 0 && j < n ? cur[j] : 0.0; };
  // Compact 3-point stencil per second derivative, centered difference for an odd remainder.
  for (; l >= 2; l -= 2) {
    for (long j = 0; j < n; ++j) next[j] = (at(j + 1) - 2.0 * cur[j] + at(j - 1)) / (h * h);
    cur.swap(next);
  }
  if (l == 1) {
    for (long j = 0; j < n; ++j) next[j] = (at(j + 1) - at(j - 1)) / (2.0 * h);
    cur.swap(next);
  }
  return cur;
}

std::vector<double> product_with_marginal(Slice nu, double rho) {
  const PhaseGrid& g = nu.grid;
  const Maxwellian M = maxwellian(rho, g.v);
  const std::vector<double> bar = w_marginal(nu);
  std::vector<double> out(g.size());
  for (int i = 0; i < g.nv(); ++i)
    for (int j = 0; j < g.nw(); ++j) out[static_cast<std::size_t>(i) * g.nw() + j] = M.values[i] * bar[j];
  return out;
}

}  // namespace

std::string to_string(WeightVariant v) {
  switch (v) {
    case WeightVariant::m_eps: return "m_eps";
    case WeightVariant::m_minus: return "m_minus";
    case WeightVariant::m_plus: return "m_plus";
    case WeightVariant::bar_m: return "bar_m";
    case WeightVariant::bar_m_minus: return "bar_m_minus";
    case WeightVariant::bar_m_plus: return "bar_m_plus";
  }
  return "?";
}

double WeightSpec::operator()(double rho, double v, double w) const {
  return std::exp(log_weight(*this, rho)(v, w));
}

double WeightSpec::marginal(double w) const {
  if (!is_marginal()) throw std::invalid_argument("marginal() needs a bar weight variant");
  return std::exp(log_weight(*this, 1.0)(0.0, w));
}

bool WeightSpec::is_marginal() const {
  return variant == WeightVariant::bar_m || variant == WeightVariant::bar_m_minus ||
         variant == WeightVariant::bar_m_plus;
}

void WeightSpec::validate(double b) const {
  if (!(b > 0.0)) throw std::invalid_argument("b must be > 0");
  if (!(kappa > 1.0 / (2.0 * b)))
    throw std::invalid_argument("kappa must exceed 1/(2b) = " + std::to_string(1.0 / (2.0 * b)));
}

double boltzmann_entropy(Slice mu) {
  double acc = 0.0;
  for (double x : mu.values)
    if (x > kLogFloor) acc += x * std::log(x);
  return acc * mu.grid.cell_area();
}

double free_energy(Slice nu, double rho) {
  const PhaseGrid& g = nu.grid;
  const Maxwellian M = maxwellian(rho, g.v);
  double acc = 0.0;
  for (int i = 0; i < g.nv(); ++i) {
    const double lm = safe_log(M.values[i]);
    for (int j = 0; j < g.nw(); ++j) {
      const double x = nu(i, j);
      if (x > kLogFloor) acc += x * (std::log(x) - lm);
    }
  }
  return acc * g.cell_area();
}

FisherResult fisher_information(Slice nu, double rho) {
  const PhaseGrid& g = nu.grid;
  const int nv = g.nv(), nw = g.nw();
  const double dv = g.dv();
  double acc = 0.0;
  long floored = 0;
  for (int i = 0; i < nv; ++i) {
    const double v = g.v.node(i);
    for (int j = 0; j < nw; ++j) {
      const double x = nu(i, j);
      if (x <= kLogFloor) {
        ++floored;
        continue;
      }
      // One-sided at the ends, centered inside.
      double d;
      if (i == 0)
        d = (safe_log(nu(1, j)) - std::log(x)) / dv;
      else if (i == nv - 1)
        d = (std::log(x) - safe_log(nu(nv - 2, j))) / dv;
      else
        d = (safe_log(nu(i + 1, j)) - safe_log(nu(i - 1, j))) / (2.0 * dv);
      const double r = d + rho * v;
      acc += r * r * x;
    }
  }
  FisherResult out;
  out.value = acc * g.cell_area();
  out.floored_fraction = static_cast<double>(floored) / static_cast<double>(g.size());
  out.unreliable = out.floored_fraction > 0.5;
  return out;
}

double relative_entropy(Slice nu, double rho) {
  const std::vector<double> q = product_with_marginal(nu, rho);
  double acc = 0.0;
  for (std::size_t k = 0; k < q.size(); ++k) {
    const double x = nu.values[k];
    if (x > kLogFloor) acc += x * (std::log(x) - safe_log(q[k]));
  }
  return acc * nu.grid.cell_area();
}

double product_l1_distance(Slice nu, double rho) {
  const std::vector<double> q = product_with_marginal(nu, rho);
  double acc = 0.0;
  for (std::size_t k = 0; k < q.size(); ++k) acc += std::abs(nu.values[k] - q[k]);
  return acc * nu.grid.cell_area();
}

EntropyReport entropy_report(Slice nu, double rho) {
  EntropyReport r;
  r.H = boltzmann_entropy(nu);
  r.E_free = free_energy(nu, rho);
  const FisherResult f = fisher_information(nu, rho);
  r.I_fisher = f.value;
  r.floored_fraction = f.floored_fraction;
  r.unreliable = f.unreliable;
  r.H_relative = relative_entropy(nu, rho);
  return r;
}

double l1_distance(Slice f, Slice g) {
  require_same_grid(f, g);
  double acc = 0.0;
  for (std::size_t k = 0; k < f.values.size(); ++k) acc += std::abs(f.values[k] - g.values[k]);
  return acc * f.grid.cell_area();
}

double half_entropy(Slice f, Slice g) {
  require_same_grid(f, g);
  double acc = 0.0;
  for (std::size_t k = 0; k < f.values.size(); ++k) {
    const double a = f.values[k];
    if (a > kLogFloor) acc += a * std::log(2.0 * a / (a + std::max(g.values[k], 0.0)));
  }
  return acc * f.grid.cell_area();
}

double half_fisher(Slice f, Slice g) {
  require_same_grid(f, g);
  const PhaseGrid& G = f.grid;
  const int nv = G.nv(), nw = G.nw();
  std::vector<double> q(G.size());
  for (std::size_t k = 0; k < q.size(); ++k) {
    const double a = std::max(f.values[k], kLogFloor), b = std::max(g.values[k], 0.0);
    q[k] = std::log(2.0 * a / (a + b));
  }
  auto Q = [&](int i, int j) { return q[static_cast<std::size_t>(i) * nw + j]; };
  auto diff = [](auto at, int i, int n, double h) {
    if (i == 0) return (at(1) - at(0)) / h;
    if (i == n - 1) return (at(n - 1) - at(n - 2)) / h;
    return (at(i + 1) - at(i - 1)) / (2.0 * h);
  };
  double acc = 0.0;
  for (int i = 0; i < nv; ++i)
    for (int j = 0; j < nw; ++j) {
      const double a = f(i, j);
      if (a <= kLogFloor) continue;
      const double dv = diff([&](int k) { return Q(k, j); }, i, nv, G.dv());
      const double dw = diff([&](int k) { return Q(i, k); }, j, nw, G.dw());
      acc += (dv * dv + dw * dw) * a;
    }
  return acc * G.cell_area();
}

SandwichResult ck_sandwich(Slice f, Slice g, double tol) {
  SandwichResult r;
  r.h_half = half_entropy(f, g);
  r.l1 = l1_distance(f, g);
  r.lower_slack = r.h_half - 0.125 * r.l1 * r.l1;
  r.upper_slack = r.l1 - r.h_half;
  r.lower_ok = r.lower_slack >= -tol;
  r.upper_ok = r.upper_slack >= -tol;
  return r;
}

InequalityResult csiszar_kullback(Slice nu, double rho, double rel_tol) {
  InequalityResult r;
  const double d = product_l1_distance(nu, rho);
  r.lhs = d * d;
  r.rhs = 2.0 * relative_entropy(nu, rho);
  r.ok = r.lhs <= r.rhs * (1.0 + rel_tol) + 1e-14;
  return r;
}

InequalityResult log_sobolev(Slice nu, double rho, double rel_tol) {
  InequalityResult r;
  r.lhs = 2.0 * relative_entropy(nu, rho);
  r.rhs = fisher_information(nu, rho).value;
  r.ok = r.lhs <= r.rhs * (1.0 + rel_tol) + 1e-14;
  return r;
}

NormResult weighted_norm(Slice nu, int k, const WeightSpec& weight, double rho) {
  if (k < 0 || k > 2) throw std::domain_error("weighted_norm: k must be 0, 1 or 2");
  const PhaseGrid& g = nu.grid;
  const LogWeight lw = log_weight(weight, rho);
  WeightedSum s;
  for (int i = 0; i < g.nv(); ++i) {
    std::span<const double> line = nu.values.subspan(static_cast<std::size_t>(i) * g.nw(), g.nw());
    for (int l = 0; l <= k; ++l) {
      const std::vector<double> d = w_derivative(line, g.dw(), l);
      for (int j = 0; j < g.nw(); ++j) s.add(d[j], lw(g.v.node(i), g.w.node(j)), g.cell_area());
    }
  }
  return {std::sqrt(s.acc), s.diverged};
}

NormResult weighted_norm_marginal(std::span<const double> profile, const Axis& w, int k, const WeightSpec& weight) {
  if (k < 0 || k > 2) throw std::domain_error("weighted_norm_marginal: k must be 0, 1 or 2");
  if (profile.size() != static_cast<std::size_t>(w.n)) throw ShapeError("profile does not match axis");
  const LogWeight lw = log_weight(weight, 1.0);
  WeightedSum s;
  for (int l = 0; l <= k; ++l) {
    const std::vector<double> d = w_derivative(profile, w.spacing(), l);
    for (int j = 0; j < w.n; ++j) s.add(d[j], lw(0.0, w.node(j)), w.spacing());
  }
  return {std::sqrt(s.acc), s.diverged};
}

NormResult weighted_norm_w_moment(Slice nu, const WeightSpec& weight, double rho) {
  const PhaseGrid& g = nu.grid;
  const LogWeight lw = log_weight(weight, rho);
  WeightedSum s;
  for (int i = 0; i < g.nv(); ++i)
    for (int j = 0; j < g.nw(); ++j)
      s.add(g.w.node(j) * nu(i, j), lw(g.v.node(i), g.w.node(j)), g.cell_area());
  return {std::sqrt(s.acc), s.diverged};
}

Projection projection_pi(const DensityField& nu, std::span<const double> rho0) {
  if (rho0.size() != static_cast<std::size_t>(nu.nx())) throw ShapeError("rho0 does not match spatial grid");
  Projection p{DensityField(nu.space(), nu.grid(), nu.time()), DensityField(nu.space(), nu.grid(), nu.time())};
  for (int ix = 0; ix < nu.nx(); ++ix) {
    const std::vector<double> q = product_with_marginal(nu.slice(ix), rho0[ix]);
    std::span<const double> src = nu.slice_span(ix);
    std::span<double> pi = p.pi.slice_span(ix), perp = p.perp.slice_span(ix);
    for (std::size_t k = 0; k < q.size(); ++k) {
      pi[k] = q[k];
      perp[k] = src[k] - q[k];
    }
  }
  return p;
}

NormResult fp_dissipation(Slice nu, double rho, const WeightSpec& weight) {
  const PhaseGrid& g = nu.grid;
  const LogWeight lw = log_weight(weight, rho);
  const double dv = g.dv();
  WeightedSum s;
  for (int j = 0; j < g.nw(); ++j) {
    const double w = g.w.node(j);
    for (int i = 0; i + 1 < g.nv(); ++i) {
      const double l0 = lw(g.v.node(i), w), l1 = lw(g.v.node(i + 1), w);
      const double lf = 0.5 * (l0 + l1);  // log of the geometric mean at the face
      // (h1 - h0)/dv with h = nu m, expressed relative to the face weight.
      const double d = (nu(i + 1, j) * std::exp(l1 - lf) - nu(i, j) * std::exp(l0 - lf)) / dv;
      // |d exp(lf)|^2 / exp(lf) = d^2 exp(lf)
      s.add(d, lf, g.cell_area());
    }
  }
  return {std::sqrt(s.acc), s.diverged};
}

InequalityResult gaussian_poincare(Slice nu_perp, double rho, const WeightSpec& weight, double rel_tol) {
  InequalityResult r;
  const NormResult n = weighted_norm(nu_perp, 0, weight, rho);
  const NormResult d = fp_dissipation(nu_perp, rho, weight);
  r.lhs = n.value * n.value;
  r.rhs = d.value * d.value;
  r.ok = !n.diverged && !d.diverged && r.lhs <= r.rhs * (1.0 + rel_tol) + 1e-300;
  return r;
}

PoincarePair poincare_pair(Slice nu, double rho, const WeightSpec& weight, double rel_tol) {
  // ||d_w nu|| alone: the k=1 norm squared minus the k=0 part.
  const NormResult n0 = weighted_norm(nu, 0, weight, rho);
  const NormResult n1 = weighted_norm(nu, 1, weight, rho);
  const NormResult nw_ = weighted_norm_w_moment(nu, weight, rho);
  const double dnorm = std::sqrt(std::max(0.0, n1.value * n1.value - n0.value * n0.value));
  const bool div = n0.diverged || n1.diverged || nw_.diverged;
  PoincarePair p;
  p.first.lhs = n0.value;
  p.first.rhs = dnorm / std::sqrt(weight.kappa);
  p.first.ok = !div && p.first.lhs <= p.first.rhs * (1.0 + rel_tol);
  p.second.lhs = nw_.value;
  p.second.rhs = 2.0 / weight.kappa * dnorm;
  p.second.ok = !div && p.second.lhs <= p.second.rhs * (1.0 + rel_tol);
  return p;
}

std::vector<double> translate_w(Slice s, int k) {
  const int nv = s.grid.nv(), nw = s.grid.nw();
  std::vector<double> out(s.grid.size(), 0.0);
  for (int i = 0; i < nv; ++i)
    for (int j = 0; j < nw; ++j) {
      const int src = j - k;
      if (src >= 0 && src < nw) out[static_cast<std::size_t>(i) * nw + j] = s(i, src);
    }
  return out;
}

std::vector<std::vector<double>> equicontinuity_modulus(const DensityField& nu, std::span<const int> shifts) {
  std::vector<std::vector<double>> table(nu.nx(), std::vector<double>(shifts.size()));
  const int nw = nu.grid().nw();
  for (int ix = 0; ix < nu.nx(); ++ix) {
    const Slice s = nu.slice(ix);
    for (std::size_t q = 0; q < shifts.size(); ++q) {
      const int k = shifts[q];
      if (std::abs(k) >= nw) throw std::domain_error("shift exceeds the w grid");
      const std::vector<double> t = translate_w(s, k);
      double acc = 0.0;
      for (std::size_t m = 0; m < t.size(); ++m) acc += std::abs(s.values[m] - t[m]);
      table[ix][q] = acc * s.grid.cell_area();
    }
  }
  return table;
}

double equicontinuity_constant(double m1, double b) { return std::sqrt(std::max(8.0 * m1, 1.0 / b)); }

double equicontinuity_m1(Slice nu) {
  const PhaseGrid& g = nu.grid;
  double acc = 0.0;
  for (int i = 0; i < g.nv(); ++i) {
    const std::vector<double> d =
        w_derivative(nu.values.subspan(static_cast<std::size_t>(i) * g.nw(), g.nw()), g.dw(), 1);
    const double wv = 1.0 + std::abs(g.v.node(i));
    for (double x : d) acc += wv * std::abs(x);
  }
  return acc * g.cell_area();
}

double gamma_eps(double t, double rho, double epsilon, double a) { return a * epsilon * theta(t, rho, epsilon) / rho; }

DensityField shear_transform(const DensityField& nu, std::span<const double> gamma, TransformTelemetry* telemetry) {
  if (gamma.size() != static_cast<std::size_t>(nu.nx())) throw ShapeError("gamma does not match spatial grid");
  const PhaseGrid& g = nu.grid();
  const int nv = g.nv(), nw = g.nw();
  DensityField out(nu.space(), g, nu.time());
  TransformTelemetry tel;
  tel.mass_lost.assign(nu.nx(), 0.0);
  tel.clamped_mass.assign(nu.nx(), 0.0);
  std::vector<double> line(nw);
  Pchip p;
  for (int ix = 0; ix < nu.nx(); ++ix) {
    const double before = nu.mass(ix);
    for (int i = 0; i < nv; ++i) {
      const double shift = gamma[ix] * g.v.node(i);
      for (int j = 0; j < nw; ++j) line[j] = nu.at(ix, i, j);
      p.reset(line);
      for (int j = 0; j < nw; ++j) {
        double val = p(g.w.index_of(g.w.node(j) - shift));
        if (val < 0.0) {
          tel.clamped_mass[ix] -= val * g.cell_area();
          val = 0.0;
        }
        out.at(ix, i, j) = val;
      }
    }
    const double after = out.mass(ix);
    tel.mass_lost[ix] = before - after;
    if (std::abs(before - after) > 1e-8) tel.truncated = true;
    if (after > 0.0)
      for (double& x : out.slice_span(ix)) x *= before / after;
  }
  if (telemetry) *telemetry = std::move(tel);
  return out;
}

double appendix_rate_bound(Slice f, Slice g, std::span<const double> b_diff, std::span<const double> b3,
                           double lambda, int delta) {
  require_same_grid(f, g);
  const PhaseGrid& G = f.grid;
  const int nv = G.nv(), nw = G.nw();
  const std::size_t n = G.size();
  if ((!b_diff.empty() && b_diff.size() != n) || (!b3.empty() && b3.size() != n))
    throw ShapeError("drift arrays do not match the slice");
  double acc = 0.0;
  if (!b_diff.empty())
    for (std::size_t k = 0; k < n; ++k) acc += 0.25 * b_diff[k] * b_diff[k] * f.values[k];
  if (!b3.empty() || delta != 1) {
    const double dv = G.dv();
    // Flux F = b3 g + (delta - 1) lambda d_v g, then lambda |d_v F|.
    std::vector<double> F(n, 0.0);
    for (int i = 0; i < nv; ++i)
      for (int j = 0; j < nw; ++j) {
        const std::size_t k = static_cast<std::size_t>(i) * nw + j;
        double val = b3.empty() ? 0.0 : b3[k] * g(i, j);
        if (delta != 1) {
          const double gp = i + 1 < nv ? g(i + 1, j) : 0.0, gm = i > 0 ? g(i - 1, j) : 0.0;
          val += (delta - 1) * lambda * (gp - gm) / (2.0 * dv);
        }
        F[k] = val;
      }
    for (int i = 0; i < nv; ++i)
      for (int j = 0; j < nw; ++j) {
        const double fp = i + 1 < nv ? F[static_cast<std::size_t>(i + 1) * nw + j] : 0.0;
        const double fm = i > 0 ? F[static_cast<std::size_t>(i - 1) * nw + j] : 0.0;
        acc += lambda * std::abs((fp - fm) / (2.0 * dv));
      }
  }
  return acc * G.cell_area();
}

}  // namespace fhn
