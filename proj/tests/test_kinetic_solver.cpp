#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "fhn/errors.hpp"
#include "fhn/kinetic_solver.hpp"
#include "fhn/macro_solver.hpp"
#include "test_util.hpp"

using namespace fhn;

namespace {

Model make_model(int nx, DriftSpec drift, AdaptationParams ad, double psi, double rho) {
  const SpatialGrid space(nx);
  KernelSpec k;
  k.kind = KernelKind::constant;
  k.parameters = {psi};
  return Model(std::move(drift), ad, k, constant_density(space, rho, 0.5), space);
}

DriftSpec negligible_drift() {
  DriftSpec d;
  d.coefficients = {0.0, 0.0, 0.0, -1e-12};
  return d;
}

DensityField maxwellian_product(const SpatialGrid& space, const PhaseGrid& g, std::span<const double> rho,
                                const std::vector<double>& wprof) {
  DensityField f(space, g, 0.0);
  for (int ix = 0; ix < space.nx; ++ix) {
    const auto M = maxwellian(rho[ix], g.v).values;
    for (int i = 0; i < g.nv(); ++i)
      for (int j = 0; j < g.nw(); ++j) f.at(ix, i, j) = M[i] * wprof[j];
  }
  return f;
}

}  // namespace

TEST(FokkerPlanck, DiscreteMaxwellianIsFixedPoint) {
  const SpatialGrid space(3);
  const PhaseGrid g(128, 24, 8.0, 6.0);
  const std::vector<double> rho{1.2, 1.5, 1.8};
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> U(0.1, 1.0);
  std::vector<double> any(g.nw());
  for (double& x : any) x = U(rng);
  const DensityField eq = maxwellian_product(space, g, rho, any);
  for (double pref : {1.0, 10.0, 1e4}) {
    const DensityField out = fokker_planck_step(eq, 1e-3, std::vector<double>(3, pref), rho);
    for (std::size_t k = 0; k < eq.data().size(); ++k) EXPECT_NEAR(out.data()[k], eq.data()[k], 1e-13);
  }
}

TEST(FokkerPlanck, ConservesMassAndRelaxesToMaxwellian) {
  const SpatialGrid space(1);
  const PhaseGrid g(96, 6, 8.0, 3.0);
  const std::vector<double> rho{1.5};
  std::mt19937_64 rng(2);
  DensityField f = test::field_from_slice(space, g, test::random_density(g, rng));
  const double m0 = f.mass(0);
  const DensityField one = fokker_planck_step(f, 0.05, std::vector<double>{1.0}, rho);
  EXPECT_NEAR(one.mass(0), m0, 1e-13);
  const int steps = static_cast<int>(std::ceil(50.0 / rho[0] / 0.05));
  for (int n = 0; n < steps; ++n) f = fokker_planck_step(f, 0.05, std::vector<double>{1.0}, rho);
  const auto vm = v_marginal(f.slice(0));
  const auto M = maxwellian(rho[0], g.v).values;
  double err = 0.0;
  for (int i = 0; i < g.nv(); ++i) err += std::abs(vm[i] - M[i]) * g.dv();
  EXPECT_LT(err, 1e-8);
}

TEST(Transport, ZeroDriftIsIdentity) {
  const SpatialGrid space(1);
  const PhaseGrid g(41, 31, 4.0, 4.0);
  std::mt19937_64 rng(4);
  const DensityField f = test::field_from_slice(space, g, test::random_density(g, rng));
  const DriftFn zero = [](int, double, double) { return 0.0; };
  const DensityField out = transport_step(f, zero, zero, 0.1);
  EXPECT_EQ(out.data(), f.data());
}

TEST(Transport, LinearContractionMovesBumpAlongCharacteristic) {
  const SpatialGrid space(1);
  const PhaseGrid g(11, 321, 1.0, 4.0);
  const double w0 = 2.0, b = 1.0, T = 0.5;
  DensityField f = test::field_from_slice(space, g, test::gaussian_slice(g, 0.0, w0, 10.0, 0.1));
  f.normalize();
  const DriftFn zero = [](int, double, double) { return 0.0; };
  const DriftFn dw = [b](int, double, double w) { return -b * w; };
  const double dt = 0.5 * transport_max_dt(f, zero, dw);
  const int steps = static_cast<int>(std::ceil(T / dt));
  for (int n = 0; n < steps; ++n) f = transport_step(f, zero, dw, T / steps);
  EXPECT_NEAR(macro_moments(f).W[0], w0 * std::exp(-b * T), g.dw());
}

TEST(Transport, ConstantVelocityDriftTranslates) {
  const SpatialGrid space(1);
  const PhaseGrid g(321, 5, 4.0, 1.0);
  const double c = 0.8, T = 1.0;
  DensityField f = test::field_from_slice(space, g, test::gaussian_slice(g, -1.0, 0.0, 0.15, 10.0));
  f.normalize();
  const DriftFn dv = [c](int, double, double) { return c; };
  const DriftFn zero = [](int, double, double) { return 0.0; };
  const double dt = 0.5 * transport_max_dt(f, dv, zero);
  const int steps = static_cast<int>(std::ceil(T / dt));
  for (int n = 0; n < steps; ++n) f = transport_step(f, dv, zero, T / steps);
  EXPECT_NEAR(macro_moments(f).V[0], -1.0 + c * T, g.dv());
}

TEST(Transport, CflViolationReportsAdmissibleStep) {
  const SpatialGrid space(1);
  const PhaseGrid g(41, 41, 4.0, 4.0);
  const DensityField f = test::field_from_slice(space, g, test::gaussian_slice(g, 0.0, 0.0, 1.0, 1.0));
  const DriftFn fast = [](int, double, double) { return 100.0; };
  try {
    transport_step(f, fast, fast, 1.0);
    FAIL() << "expected CflViolation";
  } catch (const CflViolation& e) {
    EXPECT_GT(e.required_dt, 0.0);
    EXPECT_LT(e.required_dt, 1.0);
    EXPECT_NO_THROW(transport_step(f, fast, fast, e.required_dt));
  }
}

TEST(RescaledSolver, ScalingSolutionWithoutCoupling) {
  // a = 0, Psi = 0, N negligible: the marginal is e^{bt} bar_nu0(e^{bt} w).
  const double b = 1.0, eps = 0.1, rho = 1.5, dt = 0.01, T = 0.5;
  const Model m = make_model(1, negligible_drift(), AdaptationParams{0.0, b, 0.0}, 0.0, rho);
  const SpatialGrid space(1);
  const PhaseGrid g(96, 96, 6.0, 6.0);
  const auto wprof = test::gaussian_profile(g.w, 0.0, 1.0);
  DensityField nu0 = maxwellian_product(space, g, std::vector<double>{rho}, wprof);
  CoupledState st = make_coupled_state(nu0, MacroFields{{0.0}, {0.0}}, eps, m);
  const int steps = static_cast<int>(std::lround(T / dt));
  for (int n = 0; n < steps; ++n) {
    st = step_rescaled_coupled(st, dt, m);
    EXPECT_NEAR(st.nu.mass(0), 1.0, 1e-10);
  }
  const PhaseGrid& gt = st.nu.grid();
  const auto bar = w_marginal(st.nu.slice(0));
  const auto exact = evolve_bar_nu(wprof, g.w, st.t, b, gt.w);
  double err = 0.0, dnorm = 0.0;
  for (int j = 0; j < gt.nw(); ++j) err += std::abs(bar[j] - exact[j]) * gt.dw();
  for (int j = 1; j < gt.nw(); ++j) dnorm += std::abs(exact[j] - exact[j - 1]);
  EXPECT_LT(err, 2.0 * gt.dw() * dnorm);
}

TEST(RescaledSolver, AdaptationMeanDecaysExponentially) {
  const double b = 1.3, eps = 0.1, dt = 0.01, T = 1.0, W0 = 0.7;
  const Model m = make_model(2, DriftSpec{}, AdaptationParams{0.0, b, 0.0}, 1.0, 1.4);
  const SpatialGrid space(2);
  const PhaseGrid g(64, 64, 6.0, 6.0);
  const DensityField nu0 =
      maxwellian_product(space, g, std::vector<double>{1.4, 1.4}, test::gaussian_profile(g.w, 0.0, 1.0));
  CoupledState st = make_coupled_state(nu0, MacroFields{{0.2, 0.4}, {W0, W0}}, eps, m);
  for (int n = 0; n < std::lround(T / dt); ++n) st = step_rescaled_coupled(st, dt, m);
  for (int ix = 0; ix < 2; ++ix) EXPECT_NEAR(st.macro.W[ix], W0 * std::exp(-b * T), 1e-4);
}

TEST(RescaledSolver, SmallEpsilonRunsWithTheSameStep) {
  const Model m = make_model(2, DriftSpec{}, AdaptationParams{}, 1.0, 1.5);
  const SpatialGrid space(2);
  const PhaseGrid g(48, 32, 8.0, 8.0);
  const DensityField nu0 =
      maxwellian_product(space, g, std::vector<double>{1.5, 1.5}, test::gaussian_profile(g.w, 0.0, 1.0));
  for (double eps : {0.1, 1e-4}) {
    CoupledState st = make_coupled_state(nu0, MacroFields{{0.5, 0.3}, {0.0, 0.0}}, eps, m);
    for (int n = 0; n < 50; ++n) ASSERT_NO_THROW(st = step_rescaled_coupled(st, 1e-2, m));
    for (double v : st.macro.V) EXPECT_TRUE(std::isfinite(v));
    EXPECT_NEAR(st.nu.mass(1), 1.0, 1e-10);
  }
}

TEST(RescaledSolver, MarginalResidualShrinksWithStep) {
  // Correlated (v, w) data so the a theta d_w J term is active; fine w grid so
  // the time error dominates the residual.
  const Model m = make_model(1, DriftSpec{}, AdaptationParams{1.0, 1.0, 0.0}, 0.0, 1.5);
  const SpatialGrid space(1);
  const PhaseGrid g(96, 384, 6.0, 6.0);
  DensityField nu0(space, g, 0.0);
  for (int i = 0; i < g.nv(); ++i)
    for (int j = 0; j < g.nw(); ++j) {
      const double v = g.v.node(i), w = g.w.node(j);
      nu0.at(0, i, j) = std::exp(-(v * v - 1.2 * v * w + w * w) / 1.28);
    }
  nu0.normalize();
  auto residual = [&](double dt) {
    CoupledState st = make_coupled_state(nu0, MacroFields{{0.3}, {0.0}}, 0.1, m);
    std::vector<CoupledState> hist{st};
    for (int n = 0; n < std::lround(0.2 / dt); ++n) hist.push_back(st = step_rescaled_coupled(st, dt, m));
    double worst = 0.0;
    for (const auto& row : marginal_residual(hist, m)) worst = std::max(worst, row[0]);
    return worst;
  };
  const double r1 = residual(0.02), r2 = residual(0.01);
  EXPECT_LT(r2, r1);
  EXPECT_GE(std::log2(r1 / r2), 1.0);
}

TEST(DirectSolver, ConservesMass) {
  const Model m = make_model(2, DriftSpec{}, AdaptationParams{}, 1.0, 1.5);
  const SpatialGrid space(2);
  const PhaseGrid g(96, 48, 4.0, 6.0);
  DensityField mu = test::field_from_slice(space, g, test::gaussian_slice(g, 0.5, 0.0, 0.4, 1.0));
  for (int n = 0; n < 20; ++n) {
    StepTelemetry tel;
    mu = step_direct_kinetic(mu, 1e-3, 0.1, m, {}, &tel);
    EXPECT_LE(tel.mass_defect, 1e-10);
    for (int ix = 0; ix < 2; ++ix) EXPECT_NEAR(mu.mass(ix), 1.0, 1e-10);
  }
}

TEST(DirectSolver, PureRelaxationReachesShiftedGaussian) {
  // Negligible N, no kernel, w concentrated on the invariant column w = 0.
  const double eps = 0.1, rho = 1.5, V0 = 0.3, dt = 0.01;
  const Model m = make_model(1, negligible_drift(), AdaptationParams{0.0, 1.0, 0.0}, 0.0, rho);
  const SpatialGrid space(1);
  const PhaseGrid g(401, 3, 4.0, 1.0);
  std::vector<double> s(g.size(), 0.0);
  for (int i = 0; i < g.nv(); ++i) {
    const double z = (g.v.node(i) - V0) / 0.7;
    s[static_cast<std::size_t>(i) * g.nw() + 1] = std::exp(-0.5 * z * z);
  }
  DensityField mu = test::field_from_slice(space, g, s);
  mu.normalize();
  for (int n = 0; n < std::lround(50.0 * eps / rho / dt); ++n) mu = step_direct_kinetic(mu, dt, eps, m);
  const double V = V0;
  EXPECT_NEAR(macro_moments(mu).V[0], V0, 1e-6);
  const auto vm = v_marginal(mu.slice(0));
  double err = 0.0, mass = 0.0;
  std::vector<double> ref(g.nv());
  for (int i = 0; i < g.nv(); ++i) mass += ref[i] = std::exp(-0.5 * rho / eps * (g.v.node(i) - V) * (g.v.node(i) - V));
  for (int i = 0; i < g.nv(); ++i) err += std::abs(vm[i] - ref[i] / (mass * g.dv())) * g.dv();
  EXPECT_LT(err, 1e-6);
}
