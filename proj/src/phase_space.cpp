#include "fhn/phase_space.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include "json.hpp"

#include "fhn/errors.hpp"
#include "fhn/interp.hpp"

namespace fhn {

Axis::Axis(int n_, double half_width_) : n(n_), half_width(half_width_) {
  if (n_ < 2) throw ShapeError("axis needs at least 2 nodes");
  if (!(half_width_ > 0.0) || !std::isfinite(half_width_)) throw ShapeError("axis half-width must be positive");
}

std::vector<double> Axis::nodes() const {
  std::vector<double> x(n);
  for (int i = 0; i < n; ++i) x[i] = node(i);
  return x;
}

SpatialGrid::SpatialGrid(int nx_) : nx(nx_) {
  if (nx_ < 1) throw ShapeError("spatial grid needs at least one node");
}

double SpatialGrid::weight(int i) const {
  if (nx == 1) return 1.0;
  const double h = 1.0 / (nx - 1);
  return (i == 0 || i == nx - 1) ? 0.5 * h : h;
}

std::vector<double> SpatialGrid::nodes() const {
  std::vector<double> x(nx);
  for (int i = 0; i < nx; ++i) x[i] = this->x(i);
  return x;
}

std::vector<double> SpatialGrid::weights() const {
  std::vector<double> w(nx);
  for (int i = 0; i < nx; ++i) w[i] = weight(i);
  return w;
}

DensityField::DensityField(SpatialGrid space, PhaseGrid grid, double t)
    : space_(space), grid_(grid), values_(static_cast<std::size_t>(space.nx) * grid.size(), 0.0), t_(t) {}

DensityField::DensityField(SpatialGrid space, PhaseGrid grid, std::vector<double> values, double t)
    : space_(space), grid_(grid), values_(std::move(values)), t_(t) {
  if (values_.size() != static_cast<std::size_t>(space.nx) * grid.size())
    throw ShapeError("density values do not match grid size");
}

void DensityField::set_grid(const PhaseGrid& g) {
  if (g.nv() != grid_.nv() || g.nw() != grid_.nw()) throw ShapeError("set_grid must keep node counts");
  grid_ = g;
}

std::span<double> DensityField::slice_span(int ix) {
  return {values_.data() + static_cast<std::size_t>(ix) * grid_.size(), grid_.size()};
}

std::span<const double> DensityField::slice_span(int ix) const {
  return {values_.data() + static_cast<std::size_t>(ix) * grid_.size(), grid_.size()};
}

double DensityField::mass(int ix) const { return slice_mass(slice(ix)); }

double DensityField::min_value() const {
  return values_.empty() ? 0.0 : *std::min_element(values_.begin(), values_.end());
}

double DensityField::normalize() {
  double worst = 0.0;
  for (int ix = 0; ix < nx(); ++ix) {
    const double m = mass(ix);
    if (!(m > 0.0)) throw ContractViolation("cannot normalize a zero-mass node");
    for (double& x : slice_span(ix)) x /= m;
    worst = std::max(worst, std::abs(m - 1.0));
  }
  return worst;
}

void DensityField::require_normalized(double tol) const {
  for (int ix = 0; ix < nx(); ++ix) {
    const double m = mass(ix);
    if (!(std::abs(m - 1.0) <= tol)) {
      std::ostringstream os;
      os << "density not normalized at node " << ix << " (mass " << m << ")";
      throw ContractViolation(os.str());
    }
  }
}

double slice_mass(Slice s) {
  double acc = 0.0;
  for (double x : s.values) acc += x;
  return acc * s.grid.cell_area();
}

std::vector<double> v_marginal(Slice s) {
  const int nv = s.grid.nv(), nw = s.grid.nw();
  std::vector<double> m(nv, 0.0);
  for (int i = 0; i < nv; ++i) {
    double acc = 0.0;
    for (int j = 0; j < nw; ++j) acc += s(i, j);
    m[i] = acc * s.grid.dw();
  }
  return m;
}

std::vector<double> w_marginal(Slice s) {
  const int nv = s.grid.nv(), nw = s.grid.nw();
  std::vector<double> m(nw, 0.0);
  for (int i = 0; i < nv; ++i)
    for (int j = 0; j < nw; ++j) m[j] += s(i, j);
  for (double& x : m) x *= s.grid.dv();
  return m;
}

MacroFields macro_moments(const DensityField& mu) {
  mu.require_normalized();
  const PhaseGrid& g = mu.grid();
  MacroFields out{std::vector<double>(mu.nx()), std::vector<double>(mu.nx())};
  for (int ix = 0; ix < mu.nx(); ++ix) {
    const Slice s = mu.slice(ix);
    double sv = 0.0, sw = 0.0;
    for (int i = 0; i < g.nv(); ++i) {
      double row = 0.0, roww = 0.0;
      for (int j = 0; j < g.nw(); ++j) {
        row += s(i, j);
        roww += s(i, j) * g.w.node(j);
      }
      sv += row * g.v.node(i);
      sw += roww;
    }
    out.V[ix] = sv * g.cell_area();
    out.W[ix] = sw * g.cell_area();
  }
  return out;
}

namespace {
void check_q(int q, int p) {
  if (q < 2 || q > 2 * p || q % 2 != 0) throw std::domain_error("moment order q must be even in [2, 2p]");
}
double ipow(double x, int k) {
  double r = 1.0;
  for (int i = 0; i < k; ++i) r *= x;
  return r;
}
}  // namespace

std::vector<double> moment_q(const DensityField& mu, int q, int p) {
  check_q(q, p);
  mu.require_normalized();
  const PhaseGrid& g = mu.grid();
  std::vector<double> out(mu.nx());
  for (int ix = 0; ix < mu.nx(); ++ix) {
    const Slice s = mu.slice(ix);
    double acc = 0.0;
    for (int i = 0; i < g.nv(); ++i) {
      const double v2 = g.v.node(i) * g.v.node(i);
      for (int j = 0; j < g.nw(); ++j) {
        const double w = g.w.node(j);
        acc += ipow(v2 + w * w, q / 2) * s(i, j);
      }
    }
    out[ix] = acc * g.cell_area();
  }
  return out;
}

std::vector<double> centered_moment_q(const DensityField& mu, int q, int p) {
  check_q(q, p);
  const MacroFields m = macro_moments(mu);
  const PhaseGrid& g = mu.grid();
  std::vector<double> out(mu.nx());
  for (int ix = 0; ix < mu.nx(); ++ix) {
    const std::vector<double> vm = v_marginal(mu.slice(ix));
    double acc = 0.0;
    for (int i = 0; i < g.nv(); ++i) acc += ipow(std::abs(g.v.node(i) - m.V[ix]), q) * vm[i];
    out[ix] = acc * g.dv();
  }
  return out;
}

double maxwellian_density(double rho, double v) {
  return std::sqrt(rho / (2.0 * std::numbers::pi)) * std::exp(-0.5 * rho * v * v);
}

Maxwellian maxwellian(double rho, const Axis& v) {
  if (!(rho > 0.0)) throw std::domain_error("Maxwellian needs rho > 0");
  Maxwellian m;
  m.values.resize(v.n);
  double acc = 0.0;
  for (int i = 0; i < v.n; ++i) {
    m.values[i] = maxwellian_density(rho, v.node(i));
    acc += m.values[i];
  }
  acc *= v.spacing();
  m.renormalization = acc;
  for (double& x : m.values) x /= acc;
  return m;
}

double theta(double t, double rho, double epsilon) {
  const double e = std::exp(-2.0 * rho * t / epsilon);
  return std::sqrt(epsilon * (1.0 - e) + e);
}

double theta_sq_rate(double t, double rho, double epsilon) {
  const double e = std::exp(-2.0 * rho * t / epsilon);
  return -(2.0 * rho / epsilon) * (1.0 - epsilon) * e;
}

ThetaField theta_field(double t, std::span<const double> rho0, double epsilon) {
  ThetaField th{epsilon, t, std::vector<double>(rho0.size())};
  for (std::size_t i = 0; i < rho0.size(); ++i) th.values[i] = theta(t, rho0[i], epsilon);
  return th;
}

namespace {

// Samples src (on its own grid) at physical points v = a_v + s_v * target_v,
// w = a_w + target_w, scaling values by `scale`; then clamps and renormalizes.
DensityField affine_resample(const DensityField& src, const PhaseGrid& target,
                             std::span<const double> a_v, std::span<const double> s_v,
                             std::span<const double> a_w, std::span<const double> scale,
                             TransformTelemetry* tel) {
  const PhaseGrid& g = src.grid();
  const int nx = src.nx();
  DensityField out(src.space(), target, src.time());
  if (tel) {
    tel->mass_lost.assign(nx, 0.0);
    tel->clamped_mass.assign(nx, 0.0);
    tel->truncated = false;
  }
  std::vector<double> sv(target.nv()), sw(target.nw());
  for (int ix = 0; ix < nx; ++ix) {
    for (int i = 0; i < target.nv(); ++i) sv[i] = g.v.index_of(a_v[ix] + s_v[ix] * target.v.node(i));
    const double src_mass = src.mass(ix);
    std::span<const double> table = src.slice_span(ix);
    std::vector<double> vals;
    if (target.w == g.w) {
      // Same w axis: the w map is a translation. Lagrange cubic in both
      // directions; negative lobes are clamped below.
      const int nw = g.nw();
      std::vector<double> shifted(table.size());
      const double cells = -a_w[ix] / g.dw();
      for (int i = 0; i < g.nv(); ++i)
        lagrange_shift(table.subspan(static_cast<std::size_t>(i) * nw, nw),
                       std::span<double>(shifted).subspan(static_cast<std::size_t>(i) * nw, nw), cells);
      vals.assign(static_cast<std::size_t>(target.nv()) * nw, 0.0);
      for (int i = 0; i < target.nv(); ++i) {
        const CubicStencil c = cubic_stencil(sv[i]);
        double* row = vals.data() + static_cast<std::size_t>(i) * nw;
        for (int k = 0; k < 4; ++k) {
          const long src_row = c.first + k;
          if (src_row < 0 || src_row >= g.nv() || c.weight[k] == 0.0) continue;
          const double* in = shifted.data() + static_cast<std::size_t>(src_row) * nw;
          for (int j = 0; j < nw; ++j) row[j] += c.weight[k] * in[j];
        }
      }
    } else {
      for (int j = 0; j < target.nw(); ++j) sw[j] = g.w.index_of(a_w[ix] + target.w.node(j));
      vals = interpolate_tensor(table, g.nv(), g.nw(), sv, sw);
    }
    double neg = 0.0, tot = 0.0;
    for (double& x : vals) {
      x *= scale[ix];
      if (x < 0.0) {
        neg -= x;
        x = 0.0;
      }
      tot += x;
    }
    tot *= target.cell_area();
    neg *= target.cell_area();
    if (!(tot > 0.0)) throw ContractViolation("change of variables left no mass on the target grid");
    const double lost = src_mass - tot;
    for (double& x : vals) x *= src_mass / tot;
    std::copy(vals.begin(), vals.end(), out.slice_span(ix).begin());
    if (tel) {
      tel->mass_lost[ix] = lost;
      tel->clamped_mass[ix] = neg;
      if (lost > 1e-8) tel->truncated = true;
    }
  }
  return out;
}

void check_macro(const DensityField& f, const MacroFields& m, const ThetaField& th) {
  const std::size_t nx = static_cast<std::size_t>(f.nx());
  if (m.V.size() != nx || m.W.size() != nx || th.values.size() != nx)
    throw ShapeError("macro fields or theta do not match spatial grid");
}

}  // namespace

DensityField blow_up(const DensityField& mu, const MacroFields& macro, const ThetaField& th,
                     const PhaseGrid& target, TransformTelemetry* tel) {
  check_macro(mu, macro, th);
  return affine_resample(mu, target, macro.V, th.values, macro.W, th.values, tel);
}

DensityField press_down(const DensityField& nu, const MacroFields& macro, const ThetaField& th,
                        const PhaseGrid& target, TransformTelemetry* tel) {
  check_macro(nu, macro, th);
  const int nx = nu.nx();
  std::vector<double> av(nx), sv(nx), aw(nx), sc(nx);
  for (int ix = 0; ix < nx; ++ix) {
    av[ix] = -macro.V[ix] / th.values[ix];
    sv[ix] = 1.0 / th.values[ix];
    aw[ix] = -macro.W[ix];
    sc[ix] = 1.0 / th.values[ix];
  }
  return affine_resample(nu, target, av, sv, aw, sc, tel);
}

DensityField compose_asymptotic_profile(std::span<const double> V,
                                        const std::vector<std::vector<double>>& bar_mu,
                                        const ThetaField& th, std::span<const double> rho0,
                                        const SpatialGrid& space, const PhaseGrid& grid) {
  const std::size_t nx = static_cast<std::size_t>(space.nx);
  if (V.size() != nx || bar_mu.size() != nx || rho0.size() != nx || th.values.size() != nx)
    throw ShapeError("profile inputs do not match spatial grid");
  DensityField out(space, grid, th.time);
  for (int ix = 0; ix < space.nx; ++ix) {
    if (bar_mu[ix].size() != static_cast<std::size_t>(grid.nw())) throw ShapeError("bar_mu profile length");
    const double r = rho0[ix] / (th.values[ix] * th.values[ix]);
    // Sampled Gaussian renormalized on the shifted nodes.
    std::vector<double> m(grid.nv());
    double acc = 0.0;
    for (int i = 0; i < grid.nv(); ++i) {
      m[i] = maxwellian_density(r, grid.v.node(i) - V[ix]);
      acc += m[i];
    }
    acc *= grid.dv();
    for (int i = 0; i < grid.nv(); ++i)
      for (int j = 0; j < grid.nw(); ++j) out.at(ix, i, j) = m[i] / acc * bar_mu[ix][j];
  }
  return out;
}

void write_density_dump(std::ostream& os, const DensityField& f, double epsilon) {
  const PhaseGrid& g = f.grid();
  nlohmann::json h = {{"nx", f.nx()}, {"nv", g.nv()}, {"nw", g.nw()}, {"Lv", g.v.half_width},
                      {"Lw", g.w.half_width}, {"t", f.time()}, {"eps", epsilon}};
  os << h.dump() << '\n';
  static_assert(sizeof(double) == 8);
  if constexpr (std::endian::native == std::endian::little) {
    os.write(reinterpret_cast<const char*>(f.data().data()),
             static_cast<std::streamsize>(f.data().size() * sizeof(double)));
  } else {
    for (double x : f.data()) {
      std::uint64_t u;
      std::memcpy(&u, &x, 8);
      u = __builtin_bswap64(u);
      os.write(reinterpret_cast<const char*>(&u), 8);
    }
  }
  if (!os) throw std::runtime_error("failed writing density dump");
}

void write_density_dump(const std::string& path, const DensityField& f, double epsilon) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  write_density_dump(os, f, epsilon);
}

DensityField read_density_dump(std::istream& is, double* epsilon) {
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("density dump: missing header");
  const nlohmann::json h = nlohmann::json::parse(line);
  const SpatialGrid space(h.at("nx").get<int>());
  const PhaseGrid grid(h.at("nv").get<int>(), h.at("nw").get<int>(), h.at("Lv").get<double>(),
                       h.at("Lw").get<double>());
  std::vector<double> vals(static_cast<std::size_t>(space.nx) * grid.size());
  is.read(reinterpret_cast<char*>(vals.data()), static_cast<std::streamsize>(vals.size() * 8));
  if (!is) throw std::runtime_error("density dump: truncated data");
  if constexpr (std::endian::native != std::endian::little) {
    for (double& x : vals) {
      std::uint64_t u;
      std::memcpy(&u, &x, 8);
      u = __builtin_bswap64(u);
      std::memcpy(&x, &u, 8);
    }
  }
  if (epsilon) *epsilon = h.at("eps").get<double>();
  return DensityField(space, grid, std::move(vals), h.at("t").get<double>());
}

DensityField read_density_dump(const std::string& path, double* epsilon) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  return read_density_dump(is, epsilon);
}

}  // namespace fhn
