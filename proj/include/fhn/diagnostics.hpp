#pragma once

#include <span>
#include <string>
#include <vector>

#include "fhn/phase_space.hpp"

namespace fhn {

enum class WeightVariant { m_eps, m_minus, m_plus, bar_m, bar_m_minus, bar_m_plus };
std::string to_string(WeightVariant v);

// Exponential weights in (v, w). The bar variants depend on w only.
struct WeightSpec {
  double kappa = 1.0;
  WeightVariant variant = WeightVariant::m_eps;

  double operator()(double rho, double v, double w) const;
  double marginal(double w) const;  // bar variants only
  bool is_marginal() const;
  // kappa > 1/(2b); throws std::invalid_argument otherwise.
  void validate(double b) const;
};

constexpr double kLogFloor = 1e-300;

double boltzmann_entropy(Slice mu);
double free_energy(Slice nu, double rho);

struct FisherResult {
  double value = 0.0;
  double floored_fraction = 0.0;
  bool unreliable = false;
};
FisherResult fisher_information(Slice nu, double rho);

// H[nu | M_rho (x) bar_nu] with bar_nu the w-marginal of nu.
double relative_entropy(Slice nu, double rho);
// ||nu - M_rho (x) bar_nu||_1.
double product_l1_distance(Slice nu, double rho);

double l1_distance(Slice f, Slice g);
double half_entropy(Slice f, Slice g);
double half_fisher(Slice f, Slice g);

struct SandwichResult {
  bool lower_ok = true, upper_ok = true;
  double lower_slack = 0.0, upper_slack = 0.0;  // rhs - lhs of each inequality
  double h_half = 0.0, l1 = 0.0;
};
// (1/8)||f-g||_1^2 <= H_half[f|g] <= ||f-g||_1 with an absolute tolerance.
SandwichResult ck_sandwich(Slice f, Slice g, double tol = 1e-12);

struct InequalityResult {
  double lhs = 0.0, rhs = 0.0;
  bool ok = true;
};
// ||nu - M (x) bar_nu||_1^2 <= 2 H[nu | M (x) bar_nu].
InequalityResult csiszar_kullback(Slice nu, double rho, double rel_tol = 0.0);
// 2 H[nu | M (x) bar_nu] <= I[nu | M].
InequalityResult log_sobolev(Slice nu, double rho, double rel_tol = 0.0);

struct NormResult {
  double value = 0.0;  // the norm, not its square
  bool diverged = false;
};
// (sum_{l<=k} int |d_w^l nu|^2 m du)^(1/2) with centered differences in w.
NormResult weighted_norm(Slice nu, int k, const WeightSpec& weight, double rho);
NormResult weighted_norm_marginal(std::span<const double> profile, const Axis& w, int k, const WeightSpec& weight);
// || w nu ||_{L2(m)}.
NormResult weighted_norm_w_moment(Slice nu, const WeightSpec& weight, double rho);

struct Projection {
  DensityField pi;    // M_rho0 (x) bar_nu
  DensityField perp;  // nu - pi, signed
};
Projection projection_pi(const DensityField& nu, std::span<const double> rho0);

// int |d_v(nu m)|^2 / m du by face differences.
NormResult fp_dissipation(Slice nu, double rho, const WeightSpec& weight);
// ||nu_perp||^2_{L2(m)} <= D[nu_perp].
InequalityResult gaussian_poincare(Slice nu_perp, double rho, const WeightSpec& weight, double rel_tol = 0.0);
struct PoincarePair {
  InequalityResult first;   // ||nu|| <= kappa^{-1/2} ||d_w nu||
  InequalityResult second;  // ||w nu|| <= (2/kappa) ||d_w nu||
};
PoincarePair poincare_pair(Slice nu, double rho, const WeightSpec& weight, double rel_tol = 0.0);

// ||nu - tau_{k dw} nu||_1 for every node and every shift in cells.
std::vector<std::vector<double>> equicontinuity_modulus(const DensityField& nu, std::span<const int> shifts);
// Grid-exact translation of a slice by k cells in w (zero fill).
std::vector<double> translate_w(Slice s, int k);
// C = sqrt(max(8 m1, 1/b)).
double equicontinuity_constant(double m1, double b);
// m1 = ||(1 + |v|) d_w nu||_1 of a slice.
double equicontinuity_m1(Slice nu);

struct EntropyReport {
  double H = 0.0, E_free = 0.0, I_fisher = 0.0, H_relative = 0.0;
  double floored_fraction = 0.0;
  bool unreliable = false;
};
EntropyReport entropy_report(Slice nu, double rho);

double gamma_eps(double t, double rho, double epsilon, double a);
// g(x, v, w) = nu(x, v, w - gamma(x) v).
DensityField shear_transform(const DensityField& nu, std::span<const double> gamma,
                             TransformTelemetry* telemetry = nullptr);

// R = int (1/4 |b1 - b2|^2 f + lambda |div_xi [b3 g + (delta - 1) lambda grad_xi g]|)
// with xi = v. b_diff and b3 are per-cell arrays (may be empty for zero).
double appendix_rate_bound(Slice f, Slice g, std::span<const double> b_diff, std::span<const double> b3,
                           double lambda, int delta);

}  // namespace fhn
