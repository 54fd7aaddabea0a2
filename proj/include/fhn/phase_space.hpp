#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace fhn {

// Uniform nodes on [-half_width, half_width].
struct Axis {
  int n = 0;
  double half_width = 0.0;

  Axis() = default;
  Axis(int n_, double half_width_);

  double spacing() const { return 2.0 * half_width / (n - 1); }
  double node(int i) const { return -half_width + i * spacing(); }
  // Fractional node index of coordinate x (may lie outside [0, n-1]).
  double index_of(double x) const { return (x + half_width) / spacing(); }
  std::vector<double> nodes() const;
  bool operator==(const Axis&) const = default;
};

struct PhaseGrid {
  Axis v, w;

  PhaseGrid() = default;
  PhaseGrid(int nv, int nw, double Lv, double Lw) : v(nv, Lv), w(nw, Lw) {}
  PhaseGrid(Axis v_, Axis w_) : v(v_), w(w_) {}

  int nv() const { return v.n; }
  int nw() const { return w.n; }
  double dv() const { return v.spacing(); }
  double dw() const { return w.spacing(); }
  double cell_area() const { return dv() * dw(); }
  std::size_t size() const { return static_cast<std::size_t>(v.n) * w.n; }
  bool operator==(const PhaseGrid&) const = default;
};

// Nodes on K = [0, 1] with trapezoidal weights summing to 1.
struct SpatialGrid {
  int nx = 1;

  SpatialGrid() = default;
  explicit SpatialGrid(int nx_);

  double x(int i) const { return nx == 1 ? 0.0 : static_cast<double>(i) / (nx - 1); }
  double weight(int i) const;
  std::vector<double> nodes() const;
  std::vector<double> weights() const;
  bool operator==(const SpatialGrid&) const = default;
};

// Non-owning view of one (v, w) slice, w contiguous.
struct Slice {
  std::span<const double> values;
  PhaseGrid grid;

  double operator()(int iv, int iw) const { return values[static_cast<std::size_t>(iv) * grid.nw() + iw]; }
};

// Grid function mu[x][v][w] (w fastest). Used both for densities and for signed
// fields such as the orthogonal remainder; positivity is checked by callers.
class DensityField {
 public:
  DensityField() = default;
  DensityField(SpatialGrid space, PhaseGrid grid, double t = 0.0);
  DensityField(SpatialGrid space, PhaseGrid grid, std::vector<double> values, double t);

  const SpatialGrid& space() const { return space_; }
  const PhaseGrid& grid() const { return grid_; }
  void set_grid(const PhaseGrid& g);
  int nx() const { return space_.nx; }
  double time() const { return t_; }
  void set_time(double t) { t_ = t; }

  std::vector<double>& data() { return values_; }
  const std::vector<double>& data() const { return values_; }
  std::span<double> slice_span(int ix);
  std::span<const double> slice_span(int ix) const;
  Slice slice(int ix) const { return {slice_span(ix), grid_}; }
  double& at(int ix, int iv, int iw) { return values_[index(ix, iv, iw)]; }
  double at(int ix, int iv, int iw) const { return values_[index(ix, iv, iw)]; }
  std::size_t index(int ix, int iv, int iw) const {
    return (static_cast<std::size_t>(ix) * grid_.nv() + iv) * grid_.nw() + iw;
  }

  double mass(int ix) const;
  double min_value() const;
  // Rescales every node to unit mass; returns the largest |factor - 1|.
  double normalize();
  // Throws ContractViolation unless every node has unit mass within tol.
  void require_normalized(double tol = 1e-10) const;

 private:
  SpatialGrid space_;
  PhaseGrid grid_;
  std::vector<double> values_;
  double t_ = 0.0;
};

struct MacroFields {
  std::vector<double> V, W;
};

struct ThetaField {
  double epsilon = 1.0;
  double time = 0.0;
  std::vector<double> values;
};

// Sum of a slice times the cell area.
double slice_mass(Slice s);
// v-marginal and w-marginal of a slice.
std::vector<double> v_marginal(Slice s);
std::vector<double> w_marginal(Slice s);

MacroFields macro_moments(const DensityField& mu);
std::vector<double> moment_q(const DensityField& mu, int q, int p = 2);
std::vector<double> centered_moment_q(const DensityField& mu, int q, int p = 2);

struct Maxwellian {
  std::vector<double> values;     // renormalized samples on the v axis
  double renormalization = 1.0;   // raw discrete mass before renormalization
};
double maxwellian_density(double rho, double v);
Maxwellian maxwellian(double rho, const Axis& v);

double theta(double t, double rho, double epsilon);
// d(theta^2)/dt of the closed form.
double theta_sq_rate(double t, double rho, double epsilon);
ThetaField theta_field(double t, std::span<const double> rho0, double epsilon);

struct TransformTelemetry {
  std::vector<double> mass_lost;      // per node, before renormalization
  std::vector<double> clamped_mass;   // per node, negative mass removed
  bool truncated = false;
};

// nu(x, v, w) = theta * mu(x, V + theta v, w + W) sampled on target grid.
DensityField blow_up(const DensityField& mu, const MacroFields& macro, const ThetaField& theta,
                     const PhaseGrid& target, TransformTelemetry* telemetry = nullptr);
// mu(x, v, w) = nu(x, (v - V)/theta, w - W) / theta sampled on target grid.
DensityField press_down(const DensityField& nu, const MacroFields& macro, const ThetaField& theta,
                        const PhaseGrid& target, TransformTelemetry* telemetry = nullptr);

// mu(x, v, w) = M_{rho0/theta^2}(v - V) * bar_mu(x, w). bar_mu is per node on grid.w.
DensityField compose_asymptotic_profile(std::span<const double> V,
                                        const std::vector<std::vector<double>>& bar_mu,
                                        const ThetaField& theta, std::span<const double> rho0,
                                        const SpatialGrid& space, const PhaseGrid& grid);

// Density dump: one JSON header line then raw little-endian float64 data.
void write_density_dump(std::ostream& os, const DensityField& f, double epsilon);
void write_density_dump(const std::string& path, const DensityField& f, double epsilon);
DensityField read_density_dump(std::istream& is, double* epsilon = nullptr);
DensityField read_density_dump(const std::string& path, double* epsilon = nullptr);

}  // namespace fhn
