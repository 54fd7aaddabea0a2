#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "fhn/errors.hpp"
#include "fhn/phase_space.hpp"
#include "test_util.hpp"

using namespace fhn;

TEST(Grid, UniformAxisAndSpatialWeights) {
  const Axis a(5, 2.0);
  EXPECT_DOUBLE_EQ(a.spacing(), 1.0);
  EXPECT_DOUBLE_EQ(a.node(0), -2.0);
  EXPECT_DOUBLE_EQ(a.node(4), 2.0);
  const SpatialGrid s(9);
  double sum = 0.0;
  for (double w : s.weights()) sum += w;
  EXPECT_NEAR(sum, 1.0, 1e-15);
}

TEST(DensityField, NormalizationContract) {
  const PhaseGrid g(21, 11, 3.0, 3.0);
  DensityField f(SpatialGrid(2), g, 0.0);
  std::fill(f.data().begin(), f.data().end(), 1.0);
  EXPECT_THROW(f.require_normalized(), ContractViolation);
  f.normalize();
  EXPECT_NO_THROW(f.require_normalized());
  EXPECT_NEAR(f.mass(1), 1.0, 1e-14);
}

TEST(MacroMoments, CenteredProductIsZero) {
  const PhaseGrid g(81, 61, 6.0, 6.0);
  const auto f = test::field_from_slice(SpatialGrid(3), g, test::gaussian_slice(g, 0.0, 0.0, 0.8, 1.1));
  const MacroFields m = macro_moments(f);
  for (int ix = 0; ix < 3; ++ix) {
    EXPECT_NEAR(m.V[ix], 0.0, 1e-10);
    EXPECT_NEAR(m.W[ix], 0.0, 1e-10);
  }
}

TEST(MacroMoments, GridTranslationShiftsMeans) {
  const PhaseGrid g(81, 61, 6.0, 6.0);
  const int kv = 7, kw = -4;
  const auto base = test::gaussian_slice(g, 0.0, 0.0, 0.6, 0.6);
  std::vector<double> s(g.size(), 0.0);
  for (int i = 0; i < g.nv(); ++i)
    for (int j = 0; j < g.nw(); ++j) {
      const int si = i - kv, sj = j - kw;
      if (si >= 0 && si < g.nv() && sj >= 0 && sj < g.nw())
        s[static_cast<std::size_t>(i) * g.nw() + j] = base[static_cast<std::size_t>(si) * g.nw() + sj];
    }
  DensityField f = test::field_from_slice(SpatialGrid(1), g, s);
  f.normalize();
  const MacroFields m = macro_moments(f);
  EXPECT_NEAR(m.V[0], kv * g.dv(), g.dv());
  EXPECT_NEAR(m.W[0], kw * g.dw(), g.dw());
}

TEST(MacroMoments, RandomFieldMatchesDirectSum) {
  std::mt19937_64 rng(7);
  const PhaseGrid g(17, 13, 2.0, 3.0);
  const auto s = test::random_density(g, rng);
  const auto f = test::field_from_slice(SpatialGrid(1), g, s);
  double V = 0.0, W = 0.0;
  for (int i = 0; i < g.nv(); ++i)
    for (int j = 0; j < g.nw(); ++j) {
      V += g.v.node(i) * s[static_cast<std::size_t>(i) * g.nw() + j] * g.cell_area();
      W += g.w.node(j) * s[static_cast<std::size_t>(i) * g.nw() + j] * g.cell_area();
    }
  const MacroFields m = macro_moments(f);
  EXPECT_NEAR(m.V[0], V, 1e-14);
  EXPECT_NEAR(m.W[0], W, 1e-14);
}

TEST(Moments, StandardGaussianSecondMoment) {
  const PhaseGrid g(161, 161, 8.0, 8.0);
  const auto f = test::field_from_slice(SpatialGrid(1), g, test::gaussian_slice(g, 0.0, 0.0, 1.0, 1.0));
  EXPECT_NEAR(moment_q(f, 2)[0], 2.0, 1e-8);
}

TEST(Moments, PointMassAtOrigin) {
  const PhaseGrid g(41, 41, 4.0, 4.0);
  std::vector<double> s(g.size(), 0.0);
  s[static_cast<std::size_t>(20) * g.nw() + 20] = 1.0 / g.cell_area();
  const auto f = test::field_from_slice(SpatialGrid(1), g, s);
  EXPECT_NEAR(moment_q(f, 2)[0], 0.0, 1e-14);
  EXPECT_NEAR(centered_moment_q(f, 2)[0], 0.0, 1e-14);
}

TEST(Moments, DilationScalesByPowerQ) {
  // Nodes i on the small grid map to 2i on the large one: u -> 2u is grid exact.
  const PhaseGrid small(21, 21, 2.0, 2.0), big(41, 41, 4.0, 4.0);
  std::mt19937_64 rng(11);
  const auto s = test::random_density(small, rng);
  std::vector<double> d(big.size(), 0.0);
  for (int i = 0; i < small.nv(); ++i)
    for (int j = 0; j < small.nw(); ++j)
      d[static_cast<std::size_t>(2 * i) * big.nw() + 2 * j] =
          s[static_cast<std::size_t>(i) * small.nw() + j] * small.cell_area() / big.cell_area();
  const auto fs = test::field_from_slice(SpatialGrid(1), small, s);
  const auto fb = test::field_from_slice(SpatialGrid(1), big, d);
  for (int q : {2, 4}) EXPECT_NEAR(moment_q(fb, q)[0], std::pow(2.0, q) * moment_q(fs, q)[0], 1e-12);
}

TEST(CenteredMoments, GaussianVarianceAndColumn) {
  const PhaseGrid g(201, 21, 6.0, 3.0);
  const auto f = test::field_from_slice(SpatialGrid(1), g, test::gaussian_slice(g, 0.4, 0.0, 0.7, 1.0));
  EXPECT_NEAR(centered_moment_q(f, 2)[0], 0.49, 1e-8);
  std::vector<double> col(g.size(), 0.0);
  for (int j = 0; j < g.nw(); ++j) col[static_cast<std::size_t>(130) * g.nw() + j] = 1.0;
  DensityField c = test::field_from_slice(SpatialGrid(1), g, col);
  c.normalize();
  EXPECT_NEAR(centered_moment_q(c, 2)[0], 0.0, 1e-12);
  EXPECT_NEAR(centered_moment_q(c, 4)[0], 0.0, 1e-12);
}

TEST(Maxwellian, NormalizationPeakVariance) {
  const Axis v(257, 8.0);
  for (double rho : {0.7, 1.0, 1.8}) {
    const Maxwellian M = maxwellian(rho, v);
    EXPECT_NEAR(M.renormalization, 1.0, 1e-8);
    double mass = 0.0, var = 0.0;
    for (int i = 0; i < v.n; ++i) mass += M.values[i] * v.spacing(), var += v.node(i) * v.node(i) * M.values[i] * v.spacing();
    EXPECT_NEAR(mass, 1.0, 1e-14);
    EXPECT_NEAR(M.values[128], std::sqrt(rho / (2 * std::numbers::pi)), 1e-8);
    EXPECT_NEAR(var, 1.0 / rho, 1e-8);
  }
}

TEST(Theta, InitialValueLimitAndUnitEpsilon) {
  for (double rho : {0.6, 1.5, 1.8})
    for (double eps : {0.5, 0.1, 0.01}) {
      EXPECT_EQ(theta(0.0, rho, eps), 1.0);
      EXPECT_NEAR(theta(20.0 * eps / rho, rho, eps), std::sqrt(eps), 1e-12);
    }
  for (double t : {0.0, 0.3, 7.0}) EXPECT_DOUBLE_EQ(theta(t, 1.2, 1.0), 1.0);
}

TEST(Theta, SatisfiesItsOde) {
  for (double rho : {0.6, 1.5})
    for (double eps : {0.1, 0.0125})
      for (double t = 0.0; t < 1.0; t += 0.013) {
        const double th = theta(t, rho, eps);
        EXPECT_NEAR(0.5 * theta_sq_rate(t, rho, eps) + rho / eps * th * th - rho, 0.0, 1e-10);
        EXPECT_GE(th, std::sqrt(eps) - 1e-15);
        EXPECT_LE(th, 1.0);
      }
}

TEST(ChangeOfVariables, IdentityAtUnitThetaAndZeroMeans) {
  const PhaseGrid g(65, 33, 6.0, 6.0);
  std::mt19937_64 rng(3);
  const DensityField mu = test::field_from_slice(SpatialGrid(2), g, test::random_density(g, rng));
  const MacroFields zero{{0.0, 0.0}, {0.0, 0.0}};
  const ThetaField th{1.0, 0.0, {1.0, 1.0}};
  const DensityField nu = blow_up(mu, zero, th, g);
  for (std::size_t k = 0; k < mu.data().size(); ++k) EXPECT_NEAR(nu.data()[k], mu.data()[k], 1e-13);
}

TEST(ChangeOfVariables, ScaledGaussianBlowsUpToMaxwellian) {
  const PhaseGrid g(1025, 129, 8.0, 8.0);
  const double rho = 1.5, th = 0.3, V = 0.4, W = -0.5;
  const SpatialGrid space(1);
  const auto prof = test::gaussian_profile(g.w, W, 1.0);
  const ThetaField tf{0.1, 0.0, {th}};
  const DensityField mu =
      compose_asymptotic_profile(std::vector<double>{V}, {prof}, tf, std::vector<double>{rho}, space, g);
  const DensityField nu = blow_up(mu, MacroFields{{V}, {W}}, tf, g);
  const auto expect = test::field_from_slice(space, g, test::gaussian_slice(g, 0.0, 0.0, 1.0 / std::sqrt(rho), 1.0));
  EXPECT_LT(test::l1(nu.data(), expect.data(), g.cell_area()), 1e-4);
}

namespace {

// Three random Gaussian bumps around (V, W) with v-widths proportional to th,
// the scale of physical-frame states; unit mass.
std::vector<double> random_smooth(const PhaseGrid& g, std::mt19937_64& rng, double V, double W, double th) {
  std::uniform_real_distribution<double> c(-0.5, 0.5), s(0.7, 1.3), a(0.2, 1.0);
  std::vector<double> f(g.size(), 0.0);
  for (int k = 0; k < 3; ++k) {
    const auto b = test::gaussian_slice(g, V + th * c(rng), W + c(rng), th * s(rng), s(rng));
    const double w = a(rng);
    for (std::size_t m = 0; m < f.size(); ++m) f[m] += w * b[m];
  }
  double mass = 0.0;
  for (double x : f) mass += x * g.cell_area();
  for (double& x : f) x /= mass;
  return f;
}

double round_trip_error(const PhaseGrid& g, const std::vector<double>& s, double V, double W, double th) {
  const SpatialGrid space(1);
  const DensityField mu = test::field_from_slice(space, g, s);
  const MacroFields m{{V}, {W}};
  const ThetaField tf{0.1, 0.2, {th}};
  const DensityField back = press_down(blow_up(mu, m, tf, g), m, tf, g);
  return test::l1(back.data(), mu.data(), g.cell_area());
}

}  // namespace

TEST(ChangeOfVariables, RoundTripOnDefaultGrid) {
  const PhaseGrid g(256, 128, 8.0, 8.0);
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> shift(-0.5, 0.5), th(0.3, 1.0);
  for (int k = 0; k < 10; ++k) {
    const double V = shift(rng), W = shift(rng), t = th(rng);
    const auto s = random_smooth(g, rng, V, W, t);
    EXPECT_LT(round_trip_error(g, s, V, W, t), 1e-4) << "sample " << k;
  }
}

TEST(ChangeOfVariables, RoundTripConvergesUnderRefinement) {
  std::vector<double> err;
  for (int n : {64, 128, 256}) {
    const PhaseGrid g(n, n, 8.0, 8.0);
    err.push_back(round_trip_error(g, test::gaussian_slice(g, 0.3, 0.2, 0.9, 1.2), 0.3, 0.2, 0.7));
  }
  for (std::size_t k = 1; k < err.size(); ++k) EXPECT_GE(std::log2(err[k - 1] / err[k]), 1.5);
}

TEST(AsymptoticProfile, MomentsOfComposedProfile) {
  const PhaseGrid g(257, 129, 8.0, 8.0);
  const SpatialGrid space(2);
  const std::vector<double> rho{1.2, 1.6}, V{0.5, -0.2};
  const std::vector<std::vector<double>> bar{test::gaussian_profile(g.w, 0.3, 1.0),
                                             test::gaussian_profile(g.w, -0.4, 0.8)};
  const ThetaField th = theta_field(0.05, rho, 0.1);
  const DensityField mu = compose_asymptotic_profile(V, bar, th, rho, space, g);
  const MacroFields m = macro_moments(mu);
  const auto D2 = centered_moment_q(mu, 2);
  EXPECT_NEAR(m.V[0], 0.5, 1e-8);
  EXPECT_NEAR(m.W[0], 0.3, 1e-8);
  EXPECT_NEAR(m.V[1], -0.2, 1e-8);
  EXPECT_NEAR(m.W[1], -0.4, 1e-8);
  for (int ix = 0; ix < 2; ++ix) EXPECT_NEAR(D2[ix], th.values[ix] * th.values[ix] / rho[ix], 1e-6);
}

TEST(Dump, RoundTrip) {
  const PhaseGrid g(9, 7, 2.0, 3.0);
  std::mt19937_64 rng(5);
  DensityField f = test::field_from_slice(SpatialGrid(3), g, test::random_density(g, rng));
  f.set_time(0.25);
  std::stringstream ss;
  write_density_dump(ss, f, 0.05);
  double eps = 0.0;
  const DensityField r = read_density_dump(ss, &eps);
  EXPECT_EQ(eps, 0.05);
  EXPECT_EQ(r.time(), 0.25);
  EXPECT_EQ(r.grid().v, g.v);
  EXPECT_EQ(r.data(), f.data());
}
