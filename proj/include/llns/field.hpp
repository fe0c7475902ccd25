#pragma once
// Real coefficient vector over an enumerated mode set; represents the
// divergence-free velocity field u(x) = sum_z c_z e_z(x).

#include <cstddef>
#include <stdexcept>
#include <vector>

#include "llns/modes.hpp"

namespace llns {

struct SpectralField {
  BasisPtr basis;
  std::vector<double> c;

  SpectralField() = default;
  explicit SpectralField(BasisPtr b) : basis(std::move(b)), c(basis->size(), 0.0) {}
  SpectralField(BasisPtr b, std::vector<double> coeffs)
      : basis(std::move(b)), c(std::move(coeffs)) {
    if (c.size() != basis->size())
      throw std::invalid_argument("SpectralField: coefficient count mismatch");
  }

  std::size_t size() const { return c.size(); }
  double& operator[](std::size_t i) { return c[i]; }
  double operator[](std::size_t i) const { return c[i]; }
};

inline void check_same_basis(const SpectralField& a, const SpectralField& b) {
  if (a.basis.get() == b.basis.get()) return;
  if (a.basis && b.basis && a.basis->same_modes(*b.basis)) return;
  throw std::invalid_argument("field basis mismatch");
}

inline SpectralField operator+(SpectralField a, const SpectralField& b) {
  check_same_basis(a, b);
  for (std::size_t i = 0; i < a.c.size(); ++i) a.c[i] += b.c[i];
  return a;
}
inline SpectralField operator-(SpectralField a, const SpectralField& b) {
  check_same_basis(a, b);
  for (std::size_t i = 0; i < a.c.size(); ++i) a.c[i] -= b.c[i];
  return a;
}
inline SpectralField operator*(double s, SpectralField a) {
  for (double& v : a.c) v *= s;
  return a;
}
inline void axpy(double s, const SpectralField& x, SpectralField& y) {
  check_same_basis(x, y);
  for (std::size_t i = 0; i < x.c.size(); ++i) y.c[i] += s * x.c[i];
}
inline double inner(const SpectralField& a, const SpectralField& b) {
  check_same_basis(a, b);
  double s = 0.0;
  for (std::size_t i = 0; i < a.c.size(); ++i) s += a.c[i] * b.c[i];
  return s;
}

enum class NormKind { H, V, Hr, Hneg_r };

// H: plain l^2 of coefficients (orthonormal basis). V: homogeneous H^1,
// sqrt(sum lambda c^2). Hr: sum (1+lambda^r) c^2. Hneg_r: sum c^2/(1+lambda^r).
inline double norm_sq(const SpectralField& u, NormKind kind, double r = 0.0) {
  if (r < 0.0) throw std::invalid_argument("norm: r must be >= 0; use Hneg_r");
  double s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    double lam = eigenvalue(u.basis->mode(i));
    double w = 1.0;
    switch (kind) {
      case NormKind::H: w = 1.0; break;
      case NormKind::V: w = lam; break;
      case NormKind::Hr: w = 1.0 + std::pow(lam, r); break;
      case NormKind::Hneg_r: w = 1.0 / (1.0 + std::pow(lam, r)); break;
    }
    s += w * u.c[i] * u.c[i];
  }
  return s;
}
inline double norm(const SpectralField& u, NormKind kind, double r = 0.0) {
  return std::sqrt(norm_sq(u, kind, r));
}

// Reindex onto another mode set; coefficients of modes absent from the
// target are dropped, absent-from-source modes are zero.
inline SpectralField project_to(const SpectralField& u, BasisPtr target) {
  SpectralField v(std::move(target));
  for (std::size_t i = 0; i < u.size(); ++i) {
    std::size_t j = v.basis->find(u.basis->mode(i));
    if (j != Basis::npos) v.c[j] = u.c[i];
  }
  return v;
}

// Heat-semigroup smoothing: c_z -> exp(-lambda_z a) c_z.
inline SpectralField mollify(const SpectralField& u, double a) {
  SpectralField v = u;
  for (std::size_t i = 0; i < v.size(); ++i)
    v.c[i] *= std::exp(-eigenvalue(v.basis->mode(i)) * a);
  return v;
}

// Pointwise synthesis on a uniform n^3 grid of [0,1)^3; layout
// [((ix*n + iy)*n + iz)*3 + component]. Exact for n >= 2*max_frequency + 2.
inline std::vector<double> evaluate_physical(const SpectralField& u, int n) {
  if (n < 2) throw std::invalid_argument("evaluate_physical: n < 2");
  std::vector<double> grid(std::size_t(n) * n * n * 3, 0.0);
  const double h = 1.0 / n;
  for (std::size_t zi = 0; zi < u.size(); ++zi) {
    if (u.c[zi] == 0.0) continue;
    const ModeIndex& md = u.basis->mode(zi);
    DVec3 up = polarization_vector(md);
    if (md.kind == ModeKind::constant) {
      for (std::size_t p = 0; p < std::size_t(n) * n * n; ++p)
        for (int d = 0; d < 3; ++d) grid[p * 3 + d] += u.c[zi] * up[d];
      continue;
    }
    const double amp = u.c[zi] * std::numbers::sqrt2;
    for (int ix = 0; ix < n; ++ix)
      for (int iy = 0; iy < n; ++iy)
        for (int iz = 0; iz < n; ++iz) {
          double th = two_pi * (md.k[0] * ix + md.k[1] * iy + md.k[2] * iz) * h;
          double s = amp * (md.parity == Parity::cos ? std::cos(th) : std::sin(th));
          std::size_t p = ((std::size_t(ix) * n + iy) * n + iz) * 3;
          grid[p] += s * up[0];
          grid[p + 1] += s * up[1];
          grid[p + 2] += s * up[2];
        }
  }
  return grid;
}

}  // namespace llns
