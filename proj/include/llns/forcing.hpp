#pragma once
// Time-indexed divergence-free spectral forcing. Represents a control g
// through its induced force f = -P div g; the matrix norm of the optimal
// representative is ||g||_M^2 = sum f_z^2 / lambda_z (wave modes only; a
// matrix divergence cannot force the momentum modes).

#include <cmath>
#include <stdexcept>
#include <vector>

#include "llns/field.hpp"

namespace llns {

struct Forcing {
  double t0 = 0.0;
  double dt = 0.0;
  std::vector<SpectralField> values;  // one per grid node

  std::size_t nodes() const { return values.size(); }

  const SpectralField& at_node(std::size_t i) const { return values.at(i); }

  // Value used for the step from node i to i+1 (midpoint by averaging).
  SpectralField step_value(std::size_t i) const {
    SpectralField f = values.at(i);
    if (i + 1 < values.size()) {
      axpy(1.0, values[i + 1], f);
      f = 0.5 * f;
    }
    return f;
  }

  double max_constant_component() const {
    double m = 0.0;
    for (const auto& v : values)
      for (std::size_t z = 0; z < v.size(); ++z)
        if (v.basis->mode(z).kind == ModeKind::constant)
          m = std::max(m, std::abs(v.c[z]));
    return m;
  }
};

// Instantaneous squared matrix norm sum f^2 / lambda over wave modes.
inline double matrix_norm_sq_instant(const SpectralField& f) {
  double s = 0.0;
  for (std::size_t z = 0; z < f.size(); ++z) {
    double lam = eigenvalue(f.basis->mode(z));
    if (lam > 0.0) s += f.c[z] * f.c[z] / lam;
  }
  return s;
}

// ||g||^2_{L^2_t M} by trapezoid in time.
inline double matrix_norm_sq(const Forcing& g) {
  if (g.values.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < g.values.size(); ++i) {
    double w = (i == 0 || i + 1 == g.values.size()) ? 0.5 : 1.0;
    s += w * g.dt * matrix_norm_sq_instant(g.values[i]);
  }
  return s;
}

}  // namespace llns
