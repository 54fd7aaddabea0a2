#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "fhn/phase_space.hpp"

namespace fhn::test {

// Product Gaussian N(mv, sv^2) x N(mw, sw^2) sampled on g, discrete unit mass.
inline std::vector<double> gaussian_slice(const PhaseGrid& g, double mv, double mw, double sv, double sw) {
  std::vector<double> f(g.size());
  double m = 0.0;
  for (int i = 0; i < g.nv(); ++i)
    for (int j = 0; j < g.nw(); ++j) {
      const double a = (g.v.node(i) - mv) / sv, b = (g.w.node(j) - mw) / sw;
      m += f[static_cast<std::size_t>(i) * g.nw() + j] = std::exp(-0.5 * (a * a + b * b));
    }
  for (double& x : f) x /= m * g.cell_area();
  return f;
}

// 1D Gaussian profile on an axis, discrete unit mass.
inline std::vector<double> gaussian_profile(const Axis& ax, double mean, double sd) {
  std::vector<double> p(ax.n);
  double m = 0.0;
  for (int j = 0; j < ax.n; ++j) {
    const double z = (ax.node(j) - mean) / sd;
    m += p[j] = std::exp(-0.5 * z * z);
  }
  for (double& x : p) x /= m * ax.spacing();
  return p;
}

inline DensityField field_from_slice(const SpatialGrid& space, const PhaseGrid& g, const std::vector<double>& s) {
  DensityField f(space, g, 0.0);
  for (int ix = 0; ix < space.nx; ++ix)
    for (std::size_t k = 0; k < s.size(); ++k) f.data()[ix * s.size() + k] = s[k];
  return f;
}

inline std::vector<double> random_density(const PhaseGrid& g, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> U(0.0, 1.0);
  std::vector<double> f(g.size());
  double m = 0.0;
  for (double& x : f) m += x = U(rng);
  for (double& x : f) x /= m * g.cell_area();
  return f;
}

inline double l1(const std::vector<double>& a, const std::vector<double>& b, double cell) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += std::abs(a[k] - b[k]);
  return s * cell;
}

}  // namespace fhn::test
