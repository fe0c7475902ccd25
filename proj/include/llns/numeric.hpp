#pragma once
// Small numeric utilities: trapezoid weights, golden-section search,
// dense SPD solves for dictionary normal equations.

#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <vector>

namespace llns {

// Trapezoid weight for node i of 0..n.
inline double trapezoid_weight(std::size_t i, std::size_t n) {
  return (i == 0 || i == n) ? 0.5 : 1.0;
}

template <class F>
double trapezoid(std::size_t nodes, double dt, F&& value_at) {
  if (nodes < 2) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < nodes; ++i)
    s += trapezoid_weight(i, nodes - 1) * value_at(i);
  return s * dt;
}

// Maximize a unimodal f on [lo, hi]; returns argmax. rel_tol is on the
// bracket width relative to max(1, |lo|, |hi|).
inline double golden_section_maximize(const std::function<double(double)>& f,
                                      double lo, double hi, double rel_tol = 1e-8) {
  if (!(lo < hi)) throw std::invalid_argument("golden_section: empty bracket");
  const double invphi = 0.5 * (std::sqrt(5.0) - 1.0);
  const double scale = std::max({1.0, std::abs(lo), std::abs(hi)});
  double a = lo, b = hi;
  double x1 = b - invphi * (b - a);
  double x2 = a + invphi * (b - a);
  double f1 = f(x1), f2 = f(x2);
  while (b - a > rel_tol * scale) {
    if (f1 < f2) {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + invphi * (b - a);
      f2 = f(x2);
    } else {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - invphi * (b - a);
      f1 = f(x1);
    }
  }
  return 0.5 * (a + b);
}

// Solve G x = b for symmetric positive definite G (row-major n*n), in place
// Cholesky. A tiny relative ridge keeps rank-deficient dictionaries usable.
inline std::vector<double> solve_spd(std::vector<double> G, std::vector<double> b,
                                     double ridge_rel = 1e-12) {
  const std::size_t n = b.size();
  if (G.size() != n * n) throw std::invalid_argument("solve_spd: shape mismatch");
  double diag_max = 0.0;
  for (std::size_t i = 0; i < n; ++i) diag_max = std::max(diag_max, G[i * n + i]);
  const double ridge = ridge_rel * std::max(diag_max, 1e-300);
  for (std::size_t i = 0; i < n; ++i) G[i * n + i] += ridge;

  // Lower Cholesky factor written over G.
  for (std::size_t j = 0; j < n; ++j) {
    double d = G[j * n + j];
    for (std::size_t k = 0; k < j; ++k) d -= G[j * n + k] * G[j * n + k];
    if (d <= 0.0) throw std::runtime_error("solve_spd: matrix not positive definite");
    d = std::sqrt(d);
    G[j * n + j] = d;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = G[i * n + j];
      for (std::size_t k = 0; k < j; ++k) s -= G[i * n + k] * G[j * n + k];
      G[i * n + j] = s / d;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    double s = b[i];
    for (std::size_t k = 0; k < i; ++k) s -= G[i * n + k] * b[k];
    b[i] = s / G[i * n + i];
  }
  for (std::size_t ii = n; ii-- > 0;) {
    double s = b[ii];
    for (std::size_t k = ii + 1; k < n; ++k) s -= G[k * n + ii] * b[k];
    b[ii] = s / G[ii * n + ii];
  }
  return b;
}

// Streaming mean/variance (Welford), mergeable in fixed order.
struct MomentAccumulator {
  std::size_t count = 0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double x) {
    ++count;
    double d = x - mean;
    mean += d / double(count);
    m2 += d * (x - mean);
  }
  void merge(const MomentAccumulator& o) {
    if (o.count == 0) return;
    if (count == 0) {
      *this = o;
      return;
    }
    double d = o.mean - mean;
    std::size_t n = count + o.count;
    mean += d * double(o.count) / double(n);
    m2 += o.m2 + d * d * double(count) * double(o.count) / double(n);
    count = n;
  }
  double variance() const { return count > 1 ? m2 / double(count - 1) : 0.0; }
  double se_of_mean() const {
    return count > 1 ? std::sqrt(variance() / double(count)) : 0.0;
  }
  // Standard error of the sample variance under approximate normality.
  double se_of_variance() const {
    return count > 1 ? variance() * std::sqrt(2.0 / double(count - 1)) : 0.0;
  }
};

}  // namespace llns
