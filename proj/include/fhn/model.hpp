#pragma once

#include <span>
#include <string>
#include <vector>

#include "fhn/phase_space.hpp"

namespace fhn {

// Polynomial drift N(v); coefficients in ascending powers.
struct DriftSpec {
  std::vector<double> coefficients{0.0, 1.0, 0.0, -1.0};
  int growth_exponent_p = 2;

  double operator()(double v) const;
  double derivative(double v) const;
  int degree() const;
  // Leading coefficient negative, odd degree >= 3, p >= 2.
  void validate() const;
};

struct AdaptationParams {
  double a = 1.0, b = 1.0, c = 0.0;

  double operator()(double v, double w) const;
  // A(v, w) - A(0, 0).
  double centered(double v, double w) const { return a * v - b * w; }
  void validate() const;
};

enum class KernelKind { gaussian, exponential, constant, table };

struct KernelSpec {
  KernelKind kind = KernelKind::gaussian;
  // gaussian: {sigma}; exponential: {lambda}; constant: {kappa0}.
  std::vector<double> parameters{0.1};
  double exponent_r = 2.0;
  // Row-major nx*nx values of Psi(x_i, x_j) for KernelKind::table.
  std::vector<double> table;
};

struct SpatialDensity {
  std::vector<double> values;
  double m_star = 1.0;
  void validate() const;
};

// Builds rho0 = base + amplitude*cos(2 pi x) clipped to [m_star, 1/m_star].
SpatialDensity cosine_density(const SpatialGrid& space, double base, double amplitude, double m_star);
SpatialDensity constant_density(const SpatialGrid& space, double value, double m_star);

struct AssumptionReport {
  bool leading_coefficient_ok = false;
  bool growth_ratio_finite = false;
  double growth_ratio_sup = 0.0;   // sup |omega(v)| / |v|^(p-1) on [1, v_max]
  bool omega_decreasing = false;   // omega(|v|) non-increasing for |v| >= 1
  double omega_max_tail = 0.0;     // max omega on [1, v_max]
  bool confinement_ok = false;     // sup v^2 omega(v) - N'(v) finite
  double kernel_bound = 0.0;
  bool rho_bounds_ok = false;
  std::string summary() const;
};

std::string to_string(KernelKind k);
KernelKind kernel_kind_from_string(const std::string& s);

class Model {
 public:
  Model(DriftSpec drift, AdaptationParams adaptation, KernelSpec kernel, SpatialDensity rho0,
        SpatialGrid space);

  const DriftSpec& drift_spec() const { return drift_; }
  const AdaptationParams& adaptation() const { return adapt_; }
  const KernelSpec& kernel_spec() const { return kernel_; }
  const SpatialDensity& rho0() const { return rho0_; }
  const SpatialGrid& space() const { return space_; }
  int nx() const { return space_.nx; }

  double eval_drift(double v) const;
  double eval_adaptation(double v, double w) const;
  double eval_adaptation0(double v, double w) const;

  double psi(int i, int j) const { return psi_[static_cast<std::size_t>(i) * space_.nx + j]; }
  // (Psi *_r g)(x_i) = sum_j w_j Psi(x_i, x_j) g(x_j).
  std::vector<double> conv_right(std::span<const double> g) const;
  // Psi *_r rho0, cached.
  const std::vector<double>& psi_rho() const { return psi_rho_; }
  // sup_x int (|Psi(x', x)| + |Psi(x, x')|^r) dx'.
  double kernel_bound() const { return kernel_bound_; }

  // K[rho0 mu](x_i, v) using the voltage means of mu.
  double nonlocal_interaction(const DensityField& mu, int ix, double v) const;
  // Same quantity given the voltage means directly.
  double nonlocal_interaction(std::span<const double> V, int ix, double v) const;
  std::vector<double> nonlocal_operator_L(std::span<const double> V) const;

  // int N(v) mu du - N(V) for a normalized slice.
  double nonlinearity_error(Slice mu_slice) const;
  // Same error for mu recovered from a centered rescaled slice nu:
  // int N(V + theta v) nu du - N(V).
  double nonlinearity_error_rescaled(Slice nu_slice, double V, double theta) const;

  AssumptionReport check_assumptions(double v_max) const;

 private:
  DriftSpec drift_;
  AdaptationParams adapt_;
  KernelSpec kernel_;
  SpatialDensity rho0_;
  SpatialGrid space_;
  std::vector<double> psi_, wx_, psi_rho_;
  double kernel_bound_ = 0.0;
};

}  // namespace fhn
