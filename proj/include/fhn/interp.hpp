#pragma once

#include <span>
#include <vector>

namespace fhn {

// Monotone cubic Hermite interpolation on unit-spaced samples (Fritsch-Carlson
// slopes with the harmonic-mean limiter). Coordinates are fractional indices.
class Pchip {
 public:
  Pchip() = default;
  explicit Pchip(std::span<const double> y) { reset(y); }
  void reset(std::span<const double> y);
  // Value at fractional index s; zero outside [0, n-1].
  double operator()(double s) const;
  std::size_t size() const { return y_.size(); }

 private:
  std::vector<double> y_, d_;
};

// out[j] = in(j - shift) with 4-point Lagrange interpolation; samples beyond
// the ends are taken as zero. in and out must not alias.
void lagrange_shift(std::span<const double> in, std::span<double> out, double shift);

// Stencil of the 4-point Lagrange cubic at fractional index s: value is
// sum_k weight[k] * y[first + k], with y taken as zero outside [0, n).
struct CubicStencil {
  long first = 0;
  double weight[4] = {0.0, 0.0, 0.0, 0.0};
};
CubicStencil cubic_stencil(double s);

// Separable monotone cubic interpolation of a row-major (n0 x n1) table at
// fractional coordinates s0 (length m0) and s1 (length m1). Result is m0 x m1.
// Coordinates outside the table give zero.
std::vector<double> interpolate_tensor(std::span<const double> table, int n0, int n1,
                                       std::span<const double> s0, std::span<const double> s1);

}  // namespace fhn
