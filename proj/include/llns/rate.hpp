#pragma once
// Large-deviations rate machinery: Navier-Stokes residual recovery, the
// dynamic cost J (squared homogeneous H^{-1}-in-space, L^2-in-time norm of
// the residual, halved), the initial cost I0, the variational test functional
// Lambda with its finite-dictionary Riesz maximizer, the energy-excess
// statistic with its penalty S, and the compactness functional F.

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "llns/dynamics.hpp"
#include "llns/field.hpp"
#include "llns/forcing.hpp"
#include "llns/numeric.hpp"
#include "llns/trilinear.hpp"

namespace llns {

// d u / dt at node i: centered in the interior, one-sided at the ends.
inline SpectralField time_derivative_at(const std::vector<SpectralField>& states,
                                        std::size_t i, double dt) {
  const std::size_t N = states.size() - 1;
  if (i == 0) return (1.0 / dt) * (states[1] - states[0]);
  if (i == N) return (1.0 / dt) * (states[N] - states[N - 1]);
  return (0.5 / dt) * (states[i + 1] - states[i - 1]);
}

struct ResidualReport {
  Forcing forcing;                      // wave components of du/dt + Au + B(u)
  double max_constant_residual = 0.0;   // sup_i |constant-mode residual|
};

// Forcing that would make the trajectory an exact solution of the controlled
// equation du/dt = -Au - B(u) + f. A nonzero constant-mode residual cannot be
// produced by any control (a matrix divergence never forces k=0), so it is
// split out and the returned forcing is zero there.
inline ResidualReport residual(const Trajectory& traj, const TrilinearTable& table) {
  if (traj.states.size() < 2)
    throw std::invalid_argument("residual: need at least 2 states");
  ResidualReport rep;
  rep.forcing.t0 = traj.t0;
  rep.forcing.dt = traj.dt;
  const BasisPtr& basis = traj.basis();
  for (std::size_t i = 0; i < traj.states.size(); ++i) {
    SpectralField r = time_derivative_at(traj.states, i, traj.dt);
    SpectralField bu = table.apply(traj.states[i]);
    for (std::size_t z = 0; z < r.size(); ++z) {
      r.c[z] += eigenvalue(basis->mode(z)) * traj.states[i].c[z] + bu.c[z];
      if (basis->mode(z).kind == ModeKind::constant) {
        rep.max_constant_residual = std::max(rep.max_constant_residual,
                                             std::abs(r.c[z]));
        r.c[z] = 0.0;
      }
    }
    rep.forcing.values.push_back(std::move(r));
  }
  return rep;
}

// Cost density (1/2) sum_wave r^2 / lambda at one node.
inline double residual_cost_density(const SpectralField& r) {
  double s = 0.0;
  for (std::size_t z = 0; z < r.size(); ++z) {
    const ModeIndex& md = r.basis->mode(z);
    if (md.kind == ModeKind::wave) s += r.c[z] * r.c[z] / eigenvalue(md);
  }
  return 0.5 * s;
}

inline constexpr double constant_residual_tolerance = 1e-8;

inline double dynamic_cost(const Trajectory& traj, const TrilinearTable& table,
                           double const_tol = constant_residual_tolerance) {
  ResidualReport rep = residual(traj, table);
  if (rep.max_constant_residual > const_tol)
    return std::numeric_limits<double>::infinity();
  return trapezoid(rep.forcing.nodes(), traj.dt, [&](std::size_t i) {
    return residual_cost_density(rep.forcing.at_node(i));
  });
}

// Squared H distance, no 1/2: the initial Gaussian has covariance eps Q/2,
// which puts the whole factor into the quadratic form.
inline double initial_rate(const SpectralField& v, const SpectralField& u0) {
  return norm_sq(v - u0, NormKind::H);
}

struct RateBreakdown {
  double initial = 0.0;
  double dynamic = 0.0;
  double total = 0.0;
  std::vector<double> residual_profile;  // cost density per node
};

inline RateBreakdown total_rate(const Trajectory& traj, const SpectralField& u0,
                                const TrilinearTable& table,
                                double const_tol = constant_residual_tolerance) {
  RateBreakdown out;
  out.initial = initial_rate(traj.states.front(), u0);
  ResidualReport rep = residual(traj, table);
  out.residual_profile.reserve(rep.forcing.nodes());
  for (std::size_t i = 0; i < rep.forcing.nodes(); ++i)
    out.residual_profile.push_back(residual_cost_density(rep.forcing.at_node(i)));
  if (rep.max_constant_residual > const_tol) {
    out.dynamic = std::numeric_limits<double>::infinity();
  } else {
    out.dynamic = trapezoid(rep.forcing.nodes(), traj.dt,
                            [&](std::size_t i) { return out.residual_profile[i]; });
  }
  out.total = out.initial + out.dynamic;
  return out;
}

// Variational test functional
//   Lambda(phi, u) = <u(T),phi(T)> - <u(0),phi(0)>
//                    - int (<d phi/dt, u> - sum lambda phi c - <phi, B(u)>)
//                    - (1/2) int sum lambda phi^2,
// whose supremum over smooth phi equals the dynamic cost. Linear and
// quadratic parts are exposed separately for dictionary maximization.
inline double lambda_linear_part(const Trajectory& phi, const Trajectory& u,
                                 const TrilinearTable& table) {
  if (phi.states.size() != u.states.size() || phi.dt != u.dt)
    throw std::invalid_argument("lambda_functional: grid mismatch");
  const std::size_t N = u.steps();
  double val = inner(u.states[N], phi.states[N]) - inner(u.states[0], phi.states[0]);
  val -= trapezoid(N + 1, u.dt, [&](std::size_t i) {
    SpectralField dphi = time_derivative_at(phi.states, i, phi.dt);
    double lam_pair = 0.0;
    for (std::size_t z = 0; z < u.states[i].size(); ++z)
      lam_pair += eigenvalue(u.basis()->mode(z)) * phi.states[i].c[z] *
                  u.states[i].c[z];
    SpectralField bu = table.apply(u.states[i]);
    return inner(dphi, u.states[i]) - lam_pair - inner(phi.states[i], bu);
  });
  return val;
}

inline double lambda_quadratic_part(const Trajectory& phi, const Trajectory& psi) {
  if (phi.states.size() != psi.states.size() || phi.dt != psi.dt)
    throw std::invalid_argument("lambda_functional: grid mismatch");
  return trapezoid(phi.states.size(), phi.dt, [&](std::size_t i) {
    double s = 0.0;
    for (std::size_t z = 0; z < phi.states[i].size(); ++z)
      s += eigenvalue(phi.basis()->mode(z)) * phi.states[i].c[z] *
           psi.states[i].c[z];
    return s;
  });
}

inline double lambda_functional(const Trajectory& phi, const Trajectory& u,
                                const TrilinearTable& table) {
  return lambda_linear_part(phi, u, table) - 0.5 * lambda_quadratic_part(phi, phi);
}

struct RieszResult {
  double value = 0.0;            // sup of Lambda over the dictionary span
  std::vector<double> coeffs;    // maximizing combination
};

// Maximize Lambda over span{dictionary}: normal equations Q a = b with
// Q_jk the quadratic pairing and b_j the linear part; optimum (1/2) b.a.
inline RieszResult riesz_lower_bound(const std::vector<Trajectory>& dictionary,
                                     const Trajectory& u,
                                     const TrilinearTable& table) {
  const std::size_t n = dictionary.size();
  if (n == 0) return {};
  std::vector<double> G(n * n), b(n);
  for (std::size_t j = 0; j < n; ++j) {
    b[j] = lambda_linear_part(dictionary[j], u, table);
    for (std::size_t k = 0; k <= j; ++k) {
      double q = lambda_quadratic_part(dictionary[j], dictionary[k]);
      G[j * n + k] = q;
      G[k * n + j] = q;
    }
  }
  RieszResult out;
  out.coeffs = solve_spd(std::move(G), b, 1e-10);
  for (std::size_t j = 0; j < n; ++j) out.value += 0.5 * b[j] * out.coeffs[j];
  return out;
}

// Maximal positive violation of the unforced energy inequality relative to
// reference level (1/2)||ustar0||^2.
inline double energy_excess(const Trajectory& traj, const SpectralField& ustar0) {
  const double e0 = energy(ustar0);
  double running = 0.0, best = 0.0, prev_diss = dissipation(traj.states[0]);
  best = std::max(best, energy(traj.states[0]) - e0);
  for (std::size_t i = 1; i < traj.states.size(); ++i) {
    double d = dissipation(traj.states[i]);
    running += 0.5 * traj.dt * (prev_diss + d);
    prev_diss = d;
    best = std::max(best, energy(traj.states[i]) + running - e0);
  }
  return std::max(best, 0.0);
}

// Gaussian-tail bound Z(eta) <= eta (1-eta)^{-2} q with q = ||u0||_H^2.
inline double Z_bound(double eta, double u0_norm_sq) {
  if (eta >= 1.0) throw std::invalid_argument("Z_bound: eta must be < 1");
  double om = 1.0 - eta;
  return eta / (om * om) * u0_norm_sq;
}
inline double Z_bound(double eta, const SpectralField& u0) {
  return Z_bound(eta, norm_sq(u0, NormKind::H));
}

// Legendre transform Z*(x) = sup_{eta<1} (eta x - Z_bound(eta)). The
// objective is concave for eta > -2 and the maximizer sits in [-1, 1) for
// x >= 0, so one golden-section pass suffices. Z* vanishes at x = q and is
// convex, with Z*(0) = q/4.
inline double Z_star(double x, double u0_norm_sq) {
  const double q = u0_norm_sq;
  if (q <= 0.0) return std::max(x, 0.0);
  auto objective = [&](double eta) { return eta * x - Z_bound(eta, q); };
  double eta_opt = golden_section_maximize(objective, -1.5, 1.0 - 1e-9, 1e-8);
  return std::max(objective(eta_opt), 0.0);
}

// Energy-violation penalty: with theta = excess/4,
//   S(excess) = max_{lam > 0} min(Z*(lam), theta^2/(2 lam), Z*(q + theta)).
// Log-grid in lam with golden-section refinement around the grid winner.
inline double S_function(double excess, double u0_norm_sq,
                         std::size_t grid_points = 600) {
  if (excess < 0.0) throw std::invalid_argument("S_function: excess < 0");
  if (excess == 0.0) return 0.0;
  const double q = u0_norm_sq;
  const double theta = 0.25 * excess;
  const double cap = Z_star(q + theta, q);
  auto g = [&](double lam) {
    return std::min(Z_star(lam, q), 0.5 * theta * theta / lam);
  };
  const double scale = std::max(1.0, q);
  const double lo = 1e-9 * scale, hi = 1e9 * scale;
  const double step = std::log(hi / lo) / double(grid_points - 1);
  double best_val = -1.0, best_lam = lo;
  for (std::size_t i = 0; i < grid_points; ++i) {
    double lam = lo * std::exp(step * double(i));
    double v = g(lam);
    if (v > best_val) {
      best_val = v;
      best_lam = lam;
    }
  }
  double a = best_lam * std::exp(-step), b = best_lam * std::exp(step);
  double refined = golden_section_maximize(g, a, b, 1e-10);
  best_val = std::max(best_val, g(refined));
  return std::min(best_val, cap);
}
inline double S_function(double excess, const SpectralField& u0) {
  return S_function(excess, norm_sq(u0, NormKind::H));
}

// Coercive functional controlling compactness of trajectory laws:
//   ||u||^2_{L2 V} + ||u||^2_{Linf H}
//   + sum_{i != j} dt^2 ||u_i - u_j||^2_{H^-gamma} / |t_i - t_j|^{1+2 alpha}
//   + ||u||^2_{L2 H^-gamma}.
inline double compactness_F(const Trajectory& traj, double alpha = 0.25,
                            double gamma = 3.0) {
  if (alpha <= 0.0 || alpha >= 0.5)
    throw std::invalid_argument("compactness_F: alpha outside (0, 1/2)");
  const std::size_t n = traj.states.size();
  const BasisPtr& basis = traj.basis();
  std::vector<double> wneg(basis->size());
  for (std::size_t z = 0; z < basis->size(); ++z)
    wneg[z] = 1.0 / (1.0 + std::pow(eigenvalue(basis->mode(z)), gamma));

  double l2v = trapezoid(n, traj.dt, [&](std::size_t i) {
    return dissipation(traj.states[i]);
  });
  double linf = 0.0;
  for (const auto& s : traj.states) linf = std::max(linf, norm_sq(s, NormKind::H));
  double l2neg = trapezoid(n, traj.dt, [&](std::size_t i) {
    double s = 0.0;
    for (std::size_t z = 0; z < wneg.size(); ++z)
      s += wneg[z] * traj.states[i].c[z] * traj.states[i].c[z];
    return s;
  });
  double semi = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      double diff = 0.0;
      for (std::size_t z = 0; z < wneg.size(); ++z) {
        double d = traj.states[i].c[z] - traj.states[j].c[z];
        diff += wneg[z] * d * d;
      }
      double gap = traj.dt * double(j - i);
      semi += 2.0 * traj.dt * traj.dt * diff / std::pow(gap, 1.0 + 2.0 * alpha);
    }
  return l2v + linf + semi + l2neg;
}

}  // namespace llns
