#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace fhn {

// Thomas algorithm for a(i) x(i-1) + b(i) x(i) + c(i) x(i+1) = d(i).
// a[0] and c[n-1] are ignored. d is overwritten with the solution.
inline void solve_tridiagonal(std::span<const double> a, std::span<const double> b,
                              std::span<const double> c, std::span<double> d,
                              std::vector<double>& scratch) {
  const std::size_t n = d.size();
  if (n == 0) return;
  scratch.resize(n);
  double beta = b[0];
  if (beta == 0.0) throw std::runtime_error("singular tridiagonal system");
  d[0] /= beta;
  for (std::size_t i = 1; i < n; ++i) {
    scratch[i] = c[i - 1] / beta;
    beta = b[i] - a[i] * scratch[i];
    if (beta == 0.0) throw std::runtime_error("singular tridiagonal system");
    d[i] = (d[i] - a[i] * d[i - 1]) / beta;
  }
  for (std::size_t i = n - 1; i-- > 0;) d[i] -= scratch[i + 1] * d[i + 1];
}

// Batched Thomas solve of m independent systems of size n stored row-major
// as [i * m + k] (system k, unknown i). Coefficient arrays share that layout.
// Contiguous k makes the inner loops vectorizable.
inline void solve_tridiagonal_batched(std::size_t n, std::size_t m, const double* a,
                                      const double* b, const double* c, double* d,
                                      std::vector<double>& cp, std::vector<double>& beta) {
  cp.resize(n * m);
  beta.resize(m);
  for (std::size_t k = 0; k < m; ++k) {
    beta[k] = b[k];
    if (beta[k] == 0.0) throw std::runtime_error("singular tridiagonal system");
    d[k] /= beta[k];
  }
  for (std::size_t i = 1; i < n; ++i) {
    const std::size_t r = i * m, p = (i - 1) * m;
    for (std::size_t k = 0; k < m; ++k) {
      const double g = c[p + k] / beta[k];
      cp[r + k] = g;
      beta[k] = b[r + k] - a[r + k] * g;
      d[r + k] = (d[r + k] - a[r + k] * d[p + k]) / beta[k];
    }
  }
  for (std::size_t i = n - 1; i-- > 0;) {
    const std::size_t r = i * m, q = (i + 1) * m;
    for (std::size_t k = 0; k < m; ++k) d[r + k] -= cp[q + k] * d[q + k];
  }
}

}  // namespace fhn
