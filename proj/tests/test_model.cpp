#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "fhn/model.hpp"
#include "test_util.hpp"

using namespace fhn;

namespace {

Model constant_kernel_model(int nx, double psi_value, double rho) {
  const SpatialGrid space(nx);
  KernelSpec k;
  k.kind = KernelKind::constant;
  k.parameters = {psi_value};
  return Model(DriftSpec{}, AdaptationParams{}, k, constant_density(space, rho, 0.5), space);
}

}  // namespace

TEST(Drift, DefaultCubicValues) {
  const DriftSpec n;
  EXPECT_EQ(n(0.0), 0.0);
  EXPECT_EQ(n(1.0), 0.0);
  EXPECT_EQ(n(2.0), -6.0);
  EXPECT_NO_THROW(n.validate());
}

TEST(Drift, RejectsPositiveLeadingOrEvenDegree) {
  DriftSpec up;
  up.coefficients = {0.0, 1.0, 0.0, 1.0};
  EXPECT_THROW(up.validate(), std::invalid_argument);
  DriftSpec even;
  even.coefficients = {0.0, 0.0, -1.0};
  EXPECT_THROW(even.validate(), std::invalid_argument);
}

TEST(Adaptation, Values) {
  const AdaptationParams d;
  EXPECT_EQ(d(0.0, 0.0), d.c);
  EXPECT_EQ(d.centered(0.0, 0.0), 0.0);
  const AdaptationParams p{1.0, 2.0, 3.0};
  EXPECT_DOUBLE_EQ(p(1.0, 1.0), 2.0);
  AdaptationParams bad{1.0, 0.0, 0.0};
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}

TEST(Kernel, ZeroKernelGivesZero) {
  const Model m = constant_kernel_model(9, 0.0, 1.0);
  const std::vector<double> g(9, 2.5);
  for (double v : m.conv_right(g)) EXPECT_EQ(v, 0.0);
  const std::vector<double> V{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  EXPECT_EQ(m.nonlocal_interaction(V, 3, 1.7), 0.0);
}

TEST(Kernel, UnitKernelOnUnitFunctionIsOne) {
  const Model m = constant_kernel_model(11, 1.0, 1.0);
  const std::vector<double> g(11, 1.0);
  for (double v : m.conv_right(g)) EXPECT_NEAR(v, 1.0, 1e-14);
}

TEST(Kernel, GaussianMatchesBruteForceDoubleSum) {
  const int nx = 33;
  const SpatialGrid space(nx);
  KernelSpec k;  // gaussian, sigma 0.1
  const Model m(DriftSpec{}, AdaptationParams{}, k, constant_density(space, 1.0, 0.5), space);
  std::vector<double> g(nx);
  for (int j = 0; j < nx; ++j) g[j] = space.x(j) <= 0.5 ? 1.0 : 0.0;
  const auto got = m.conv_right(g);
  const double h = 1.0 / (nx - 1), s = 0.1;
  for (int i = 0; i < nx; ++i) {
    double acc = 0.0;
    for (int j = 0; j < nx; ++j) {
      const double w = (j == 0 || j == nx - 1) ? 0.5 * h : h;
      const double d = i * h - j * h;
      acc += w * std::exp(-d * d / (2 * s * s)) / (s * std::sqrt(2 * std::numbers::pi)) * g[j];
    }
    EXPECT_NEAR(got[i], acc, 1e-13);
  }
}

TEST(Kernel, InteractionVanishesForUniformVoltage) {
  const Model m = constant_kernel_model(9, 1.0, 1.3);
  const std::vector<double> V(9, 0.7);
  EXPECT_NEAR(m.nonlocal_interaction(V, 4, 0.7), 0.0, 1e-14);
}

TEST(Kernel, InteractionClosedForm) {
  const int nx = 17;
  const SpatialGrid space(nx);
  const Model m = constant_kernel_model(nx, 1.0, 1.0);
  std::vector<double> V(nx);
  for (int j = 0; j < nx; ++j) V[j] = space.x(j);
  for (int i = 0; i < nx; ++i) EXPECT_NEAR(m.nonlocal_interaction(V, i, 1.0), 0.5, 1e-14);
}

TEST(NonlocalOperator, ConstantLinearAndClosedForm) {
  const int nx = 17;
  const SpatialGrid space(nx);
  const Model m = constant_kernel_model(nx, 1.0, 1.0);
  for (double v : m.nonlocal_operator_L(std::vector<double>(nx, 3.0))) EXPECT_NEAR(v, 0.0, 1e-14);
  std::vector<double> V(nx), V3(nx);
  for (int j = 0; j < nx; ++j) V[j] = space.x(j), V3[j] = 3.0 * V[j];
  const auto L = m.nonlocal_operator_L(V), L3 = m.nonlocal_operator_L(V3);
  for (int i = 0; i < nx; ++i) {
    EXPECT_NEAR(L[i], space.x(i) - 0.5, 1e-14);
    EXPECT_NEAR(L3[i], 3.0 * L[i], 1e-14);
  }
}

TEST(NonlinearityError, LinearDriftIsZero) {
  const SpatialGrid space(1);
  DriftSpec lin;
  lin.coefficients = {0.5, -2.0, 0.0, -1e-14};  // cubic term required by validation, negligible here
  const Model m(lin, AdaptationParams{}, KernelSpec{}, constant_density(space, 1.0, 0.5), space);
  const PhaseGrid g(81, 41, 6.0, 4.0);
  const auto f = test::gaussian_slice(g, 0.4, 0.0, 0.7, 1.0);
  EXPECT_NEAR(m.nonlinearity_error(Slice{f, g}), 0.0, 1e-13);
}

TEST(NonlinearityError, SpikeIsZero) {
  const SpatialGrid space(1);
  const Model m(DriftSpec{}, AdaptationParams{}, KernelSpec{}, constant_density(space, 1.0, 0.5), space);
  const PhaseGrid g(41, 21, 4.0, 4.0);
  std::vector<double> f(g.size(), 0.0);
  f[static_cast<std::size_t>(27) * g.nw() + 10] = 1.0 / g.cell_area();
  EXPECT_NEAR(m.nonlinearity_error(Slice{f, g}), 0.0, 1e-13);
}

TEST(NonlinearityError, GaussianThirdMomentOracle) {
  const SpatialGrid space(1);
  const Model m(DriftSpec{}, AdaptationParams{}, KernelSpec{}, constant_density(space, 1.0, 0.5), space);
  const PhaseGrid g(401, 21, 6.0, 4.0);
  const double mean = 0.3, sd = 0.5;
  const auto f = test::gaussian_slice(g, mean, 0.0, sd, 1.0);
  EXPECT_NEAR(m.nonlinearity_error(Slice{f, g}), -3.0 * mean * sd * sd, 1e-9);
}

TEST(Assumptions, DefaultModelSatisfiesThem) {
  const SpatialGrid space(8);
  const Model m(DriftSpec{}, AdaptationParams{}, KernelSpec{}, cosine_density(space, 1.5, 0.3, 1.0 / 1.8), space);
  const AssumptionReport r = m.check_assumptions(10.0);
  EXPECT_TRUE(r.leading_coefficient_ok);
  EXPECT_TRUE(r.growth_ratio_finite);
  EXPECT_TRUE(r.confinement_ok);
  EXPECT_TRUE(r.rho_bounds_ok);
  EXPECT_GT(r.kernel_bound, 0.0);
}
