#include "fhn/interp.hpp"

#include <algorithm>
#include <cmath>

namespace fhn {

void Pchip::reset(std::span<const double> y) {
  y_.assign(y.begin(), y.end());
  const std::size_t n = y_.size();
  d_.assign(n, 0.0);
  if (n < 2) return;
  if (n == 2) {
    d_[0] = d_[1] = y_[1] - y_[0];
    return;
  }
  std::vector<double> del(n - 1);
  for (std::size_t i = 0; i + 1 < n; ++i) del[i] = y_[i + 1] - y_[i];
  for (std::size_t i = 1; i + 1 < n; ++i) {
    const double a = del[i - 1], b = del[i];
    d_[i] = (a * b > 0.0) ? 2.0 * a * b / (a + b) : 0.0;
  }
  // One-sided three-point end slopes, limited to keep monotonicity.
  auto end_slope = [](double h0, double h1) {
    double d = (3.0 * h0 - h1) / 2.0;
    if (d * h0 <= 0.0) return 0.0;
    if (h0 * h1 <= 0.0 && std::abs(d) > 3.0 * std::abs(h0)) return 3.0 * h0;
    return d;
  };
  d_[0] = end_slope(del[0], del[1]);
  d_[n - 1] = end_slope(del[n - 2], del[n - 3]);
}

double Pchip::operator()(double s) const {
  const std::size_t n = y_.size();
  if (n == 0 || !(s >= 0.0) || s > static_cast<double>(n - 1)) return 0.0;
  if (n == 1) return y_[0];
  std::size_t i = static_cast<std::size_t>(s);
  if (i >= n - 1) i = n - 2;
  const double t = s - static_cast<double>(i);
  if (t == 0.0) return y_[i];
  const double t2 = t * t, t3 = t2 * t;
  const double h00 = 2 * t3 - 3 * t2 + 1, h10 = t3 - 2 * t2 + t;
  const double h01 = -2 * t3 + 3 * t2, h11 = t3 - t2;
  return h00 * y_[i] + h10 * d_[i] + h01 * y_[i + 1] + h11 * d_[i + 1];
}

void lagrange_shift(std::span<const double> in, std::span<double> out, double shift) {
  const long n = static_cast<long>(in.size());
  // Source position of out[j] is j - shift = j - k0 + t, t in [0, 1).
  const double fl = std::floor(-shift);
  const long k0 = static_cast<long>(fl);
  const double t = -shift - fl;
  if (t == 0.0) {
    for (long j = 0; j < n; ++j) {
      const long s = j + k0;
      out[j] = (s >= 0 && s < n) ? in[s] : 0.0;
    }
    return;
  }
  // Nodes at offsets -1, 0, 1, 2 relative to j + k0.
  const double wm = -t * (t - 1.0) * (t - 2.0) / 6.0;
  const double w0 = (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0;
  const double w1 = -(t + 1.0) * t * (t - 2.0) / 2.0;
  const double w2 = (t + 1.0) * t * (t - 1.0) / 6.0;
  auto get = [&](long s) { return (s >= 0 && s < n) ? in[s] : 0.0; };
  const long lo = std::max<long>(0, 1 - k0), hi = std::min<long>(n, n - 2 - k0);
  for (long j = 0; j < std::min(lo, n); ++j) {
    const long s = j + k0;
    out[j] = wm * get(s - 1) + w0 * get(s) + w1 * get(s + 1) + w2 * get(s + 2);
  }
  for (long j = lo; j < hi; ++j) {
    const double* p = in.data() + (j + k0);
    out[j] = wm * p[-1] + w0 * p[0] + w1 * p[1] + w2 * p[2];
  }
  for (long j = std::max(lo, hi); j < n; ++j) {
    const long s = j + k0;
    out[j] = wm * get(s - 1) + w0 * get(s) + w1 * get(s + 1) + w2 * get(s + 2);
  }
}

CubicStencil cubic_stencil(double s) {
  CubicStencil c;
  const double fl = std::floor(s);
  const double t = s - fl;
  c.first = static_cast<long>(fl) - 1;
  c.weight[0] = -t * (t - 1.0) * (t - 2.0) / 6.0;
  c.weight[1] = (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0;
  c.weight[2] = -(t + 1.0) * t * (t - 2.0) / 2.0;
  c.weight[3] = (t + 1.0) * t * (t - 1.0) / 6.0;
  return c;
}

std::vector<double> interpolate_tensor(std::span<const double> table, int n0, int n1,
                                       std::span<const double> s0, std::span<const double> s1) {
  const std::size_t m0 = s0.size(), m1 = s1.size();
  // First along axis 1 for every source row.
  std::vector<double> tmp(static_cast<std::size_t>(n0) * m1);
  Pchip p;
  for (int i = 0; i < n0; ++i) {
    p.reset(table.subspan(static_cast<std::size_t>(i) * n1, n1));
    for (std::size_t j = 0; j < m1; ++j) tmp[i * m1 + j] = p(s1[j]);
  }
  // Then along axis 0 for every target column.
  std::vector<double> out(m0 * m1), col(n0);
  for (std::size_t j = 0; j < m1; ++j) {
    bool any = false;
    for (int i = 0; i < n0; ++i) {
      col[i] = tmp[i * m1 + j];
      any = any || col[i] != 0.0;
    }
    if (!any) continue;
    p.reset(col);
    for (std::size_t i = 0; i < m0; ++i) out[i * m1 + j] = p(s0[i]);
  }
  return out;
}

}  // namespace fhn
