#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "fhn/macro_solver.hpp"
#include "test_util.hpp"

using namespace fhn;

namespace {

Model make_model(int nx, DriftSpec drift, AdaptationParams ad, KernelSpec k, double rho) {
  const SpatialGrid space(nx);
  return Model(std::move(drift), ad, std::move(k), constant_density(space, rho, 0.5), space);
}

KernelSpec constant_kernel(double v) {
  KernelSpec k;
  k.kind = KernelKind::constant;
  k.parameters = {v};
  return k;
}

double l1_derivative(const std::vector<double>& p, const Axis& ax, bool times_w) {
  double s = 0.0;
  for (int j = 1; j + 1 < ax.n; ++j) {
    const double d = (p[j + 1] - p[j - 1]) / (2.0 * ax.spacing());
    s += std::abs(times_w ? ax.node(j) * d : d);
  }
  return s * ax.spacing();
}

}  // namespace

TEST(LimitSystem, ZeroIsAFixedPoint) {
  const Model m = make_model(6, DriftSpec{}, AdaptationParams{1.0, 1.0, 0.0}, KernelSpec{}, 1.5);
  const Axis w(129, 8.0);
  std::vector<std::vector<double>> bar(6, test::gaussian_profile(w, 0.0, 1.0));
  LimitState s = make_limit_state(std::vector<double>(6, 0.0), bar, w, m);
  for (int n = 0; n < 200; ++n) s = step_limit_V(s, 0.01, m);
  for (double v : s.V) EXPECT_NEAR(v, 0.0, 1e-14);
}

TEST(LimitSystem, HomogeneousDataStaysHomogeneous) {
  const Model m = make_model(7, DriftSpec{}, AdaptationParams{}, constant_kernel(1.0), 1.3);
  const Axis w(129, 8.0);
  std::vector<std::vector<double>> bar(7, test::gaussian_profile(w, 0.4, 1.0));
  LimitState s = make_limit_state(std::vector<double>(7, 0.8), bar, w, m);
  for (int n = 0; n < 300; ++n) s = step_limit_V(s, 0.01, m);
  for (double v : s.V) EXPECT_NEAR(v, s.V[0], 1e-12);
}

TEST(LimitSystem, LinearDriftMatchesClosedForm) {
  // N(v) = -v (cubic term negligible), a = c = 0, Psi = 0, b = 2:
  // V(t) = e^{-t} V0 + W0 (e^{-2t} - e^{-t}).
  DriftSpec lin;
  lin.coefficients = {0.0, -1.0, 0.0, -1e-14};
  const Model m = make_model(1, lin, AdaptationParams{0.0, 2.0, 0.0}, constant_kernel(0.0), 1.0);
  const Axis w(257, 8.0);
  const double V0 = 0.6, W0 = -0.4;
  LimitState s = make_limit_state({V0}, {test::gaussian_profile(w, W0, 0.5)}, w, m);
  const double W_start = s.W[0];
  for (int n = 0; n < 150; ++n) s = step_limit_V(s, 0.01, m);
  const double t = s.t;
  EXPECT_NEAR(s.V[0], std::exp(-t) * V0 + W_start * (std::exp(-2 * t) - std::exp(-t)), 1e-9);
  EXPECT_NEAR(s.W[0], W_start * std::exp(-2 * t), 1e-9);
}

TEST(LimitSystem, FourthOrderInTime) {
  DriftSpec lin;
  lin.coefficients = {0.0, -1.0, 0.0, -1e-14};
  const Model m = make_model(1, lin, AdaptationParams{0.0, 2.0, 0.0}, constant_kernel(0.0), 1.0);
  const Axis w(257, 8.0);
  auto err = [&](double dt) {
    LimitState s = make_limit_state({0.6}, {test::gaussian_profile(w, -0.4, 0.5)}, w, m);
    const double W0 = s.W[0];
    for (int n = 0; n < std::lround(1.0 / dt); ++n) s = step_limit_V(s, dt, m);
    return std::abs(s.V[0] - (std::exp(-s.t) * 0.6 + W0 * (std::exp(-2 * s.t) - std::exp(-s.t))));
  };
  EXPECT_GE(std::log2(err(0.1) / err(0.05)), 3.7);
}

TEST(LimitProfile, PureContractionFormula) {
  const double b = 1.0;
  const Model m = make_model(1, DriftSpec{}, AdaptationParams{0.0, b, 0.0}, KernelSpec{}, 1.5);
  const Axis w(257, 8.0);
  const auto p0 = test::gaussian_profile(w, 0.5, 1.0);
  LimitState s = make_limit_state({0.3}, {p0}, w, m);
  for (int n = 0; n < 50; ++n) s = step_limit_V(s, 0.01, m);
  double defect = 1.0;
  const auto bar = evolve_bar_mu(s, w, m, &defect)[0];
  const double e = std::exp(b * s.t);
  double err = 0.0, mass = 0.0;
  for (int j = 0; j < w.n; ++j) {
    const double z = (e * w.node(j) - 0.5);
    const double exact = e * std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
    err = std::max(err, std::abs(bar[j] - exact));
    mass += bar[j] * w.spacing();
  }
  EXPECT_LT(err, 1e-4);
  EXPECT_NEAR(mass, 1.0, 1e-10);
  EXPECT_LT(defect, 1e-4);  // raw interpolation truncation before renormalization
}

TEST(LimitProfile, MeanFollowsTheAdaptationOde) {
  const Model m = make_model(3, DriftSpec{}, AdaptationParams{1.0, 1.0, 0.2}, KernelSpec{}, 1.5);
  const Axis w(257, 8.0);
  std::vector<std::vector<double>> bar(3, test::gaussian_profile(w, 0.1, 0.8));
  LimitState s = make_limit_state({0.5, 0.2, -0.1}, bar, w, m);
  for (int n = 0; n < 100; ++n) s = step_limit_V(s, 0.01, m);
  const auto profiles = evolve_bar_mu(s, w, m);
  for (int ix = 0; ix < 3; ++ix) {
    double mean = 0.0;
    for (int j = 0; j < w.n; ++j) mean += w.node(j) * profiles[ix][j] * w.spacing();
    EXPECT_NEAR(mean, s.W[ix], 1e-6);
    EXPECT_NEAR(bar_mu_mean(s, m)[ix], s.W[ix], 1e-10);
  }
}

TEST(LimitMarginal, IdentityAtZeroAndGaussianScaling) {
  const Axis w(257, 8.0);
  const auto p0 = test::gaussian_profile(w, 0.0, 1.0);
  const auto same = evolve_bar_nu(p0, w, 0.0, 1.0, w);
  for (int j = 0; j < w.n; ++j) EXPECT_NEAR(same[j], p0[j], 1e-14);
  const double b = 0.7, t = 0.8;
  const Axis fine(1025, 8.0);
  const auto p = evolve_bar_nu(p0, w, t, b, fine);
  double mass = 0.0, var = 0.0;
  for (int j = 0; j < fine.n; ++j) mass += p[j] * fine.spacing(), var += fine.node(j) * fine.node(j) * p[j] * fine.spacing();
  EXPECT_NEAR(var / mass, std::exp(-2 * b * t), 1e-4);
}

TEST(LimitMarginal, DerivativeNormGrowthAndWeightedConstancy) {
  const Axis w(257, 8.0), fine(2049, 8.0);
  const auto p0 = test::gaussian_profile(w, 0.0, 1.0);
  const double b = 1.0;
  const auto q0 = evolve_bar_nu(p0, w, 0.0, b, fine);
  const double d0 = l1_derivative(q0, fine, false), c0 = l1_derivative(q0, fine, true);
  for (double t : {0.25, 0.5, 1.0}) {
    const auto q = evolve_bar_nu(p0, w, t, b, fine);
    EXPECT_NEAR(l1_derivative(q, fine, false) / d0, std::exp(b * t), 2e-3 * std::exp(b * t));
    EXPECT_NEAR(l1_derivative(q, fine, true) / c0, 1.0, 2e-3);
  }
}

TEST(LimitMarginal, SemigroupProperty) {
  const Axis w(513, 8.0);
  const auto p0 = test::gaussian_profile(w, 0.3, 1.0);
  const double b = 1.0;
  const auto once = evolve_bar_nu(p0, w, 0.7, b, w);
  const auto twice = evolve_bar_nu(evolve_bar_nu(p0, w, 0.3, b, w), w, 0.4, b, w);
  double err = 0.0;
  for (int j = 0; j < w.n; ++j) err += std::abs(once[j] - twice[j]) * w.spacing();
  EXPECT_LT(err, 1e-4);
}

TEST(LimitOutput, CsvRows) {
  const Model m = make_model(2, DriftSpec{}, AdaptationParams{}, KernelSpec{}, 1.5);
  const Axis w(65, 8.0);
  std::vector<std::vector<double>> bar(2, test::gaussian_profile(w, 0.0, 1.0));
  const LimitState s = make_limit_state({0.1, 0.2}, bar, w, m);
  std::vector<LimitTrajectoryRow> rows;
  append_limit_rows(rows, s, SpatialGrid(2));
  ASSERT_EQ(rows.size(), 2u);
  std::ostringstream os;
  write_limit_csv(os, rows);
  EXPECT_NE(os.str().find("t,x,V,W"), std::string::npos);
}
