#pragma once
// Covariance regularization Q_delta = (I + delta A^{2 beta})^{-1}, per-mode
// damping sigma, traces, scaling schedules, per-step noise sampling.

#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include "llns/field.hpp"
#include "llns/modes.hpp"

namespace llns {

struct NoiseParams {
  double epsilon = 1.0;  // noise intensity
  double delta = 0.0;    // correlation parameter
  double beta = 1.5;     // regularization exponent, > 5/4
  int m = 1;             // Galerkin cutoff

  void validate() const {
    if (epsilon < 0.0) throw std::invalid_argument("epsilon must be >= 0");
    if (delta < 0.0) throw std::invalid_argument("delta must be >= 0");
    if (beta <= 1.25)
      throw std::invalid_argument("beta must exceed 5/4 (finite regularized trace)");
    if (m < 0) throw std::invalid_argument("m must be >= 0");
  }
};

inline double sigma_of_lambda(const NoiseParams& p, double lambda) {
  if (p.delta == 0.0 || lambda == 0.0) return 1.0;
  return 1.0 / std::sqrt(1.0 + p.delta * std::pow(lambda, 2.0 * p.beta));
}

inline double sigma(const NoiseParams& p, const ModeIndex& z) {
  return sigma_of_lambda(p, eigenvalue(z));
}

// Tr[P_m A Q_delta] = sum over B_m of lambda sigma^2. Wave modes come four to
// a half-lattice point.
inline double trace_AQ(const NoiseParams& p) {
  double s = 0.0;
  for (int kx = -p.m; kx <= p.m; ++kx)
    for (int ky = -p.m; ky <= p.m; ++ky)
      for (int kz = -p.m; kz <= p.m; ++kz) {
        IVec3 k{kx, ky, kz};
        int n2 = norm_sq(k);
        if (n2 == 0 || n2 > p.m * p.m || !canonical_half(k)) continue;
        double lam = four_pi_sq * n2;
        double sg = sigma_of_lambda(p, lam);
        s += 4.0 * lam * sg * sg;
      }
  return s;
}

// Radial full-lattice sum (multiplicity 2 per nonzero lattice vector) up to
// cutoff |k| <= K; used for large cutoffs where enumeration is wasteful.
inline double trace_AQ_radial(double delta, double beta, int K) {
  NoiseParams p{1.0, delta, beta, K};
  double s = 0.0;
  for (int kx = 0; kx <= K; ++kx) {
    double mx = kx == 0 ? 1.0 : 2.0;
    for (int ky = 0; ky <= K; ++ky) {
      double my = ky == 0 ? 1.0 : 2.0;
      for (int kz = 0; kz <= K; ++kz) {
        int n2 = kx * kx + ky * ky + kz * kz;
        if (n2 == 0 || n2 > K * K) continue;
        double mz = kz == 0 ? 1.0 : 2.0;
        double lam = four_pi_sq * n2;
        double sg = sigma_of_lambda(p, lam);
        s += mx * my * mz * 2.0 * lam * sg * sg;
      }
    }
  }
  return s;
}

// Proxy for the infinite-cutoff trace at delta > 0: double the cutoff until
// the increment drops below rel_tol of the running total (or K_cap, recorded
// by callers; the tail decays like K^{4-4 beta}, so tight tolerances are only
// reachable for larger beta).
inline double trace_AQ_unbounded(double delta, double beta, double rel_tol = 1e-9,
                                 int K_cap = 512) {
  if (delta <= 0.0) throw std::invalid_argument("trace_AQ_unbounded: delta must be > 0");
  int K = 8;
  double t = trace_AQ_radial(delta, beta, K);
  while (K < K_cap) {
    int K2 = std::min(2 * K, K_cap);
    double t2 = trace_AQ_radial(delta, beta, K2);
    bool converged = (t2 - t) < rel_tol * t2;
    K = K2;
    t = t2;
    if (converged) break;
  }
  return t;
}

struct ScalingSchedule {
  struct Entry {
    double epsilon, delta;
    int m;
  };
  std::vector<Entry> entries;

  void validate() const {
    if (entries.empty()) throw std::invalid_argument("empty scaling schedule");
    for (std::size_t i = 1; i < entries.size(); ++i)
      if (!(entries[i].epsilon < entries[i - 1].epsilon))
        throw std::invalid_argument("schedule epsilon must be strictly decreasing");
  }
};

// epsilon_i * Tr[P_{m_i} A Q_{delta_i}] per entry; callers assert the trend.
inline std::vector<double> check_scaling(const ScalingSchedule& sched, double beta = 1.5) {
  sched.validate();
  std::vector<double> out;
  for (const auto& e : sched.entries) {
    NoiseParams p{e.epsilon, e.delta, beta, e.m};
    out.push_back(e.epsilon * trace_AQ(p));
  }
  return out;
}

// One Euler increment of the conservative noise: independent centered
// Gaussians with std sqrt(eps dt) lambda^{1/2} sigma per wave mode, zero on
// constant modes.
inline SpectralField sample_increment(const NoiseParams& p, double dt,
                                      const BasisPtr& basis, std::mt19937_64& rng) {
  if (dt <= 0.0) throw std::invalid_argument("sample_increment: dt must be > 0");
  SpectralField xi(basis);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double root = std::sqrt(p.epsilon * dt);
  for (std::size_t i = 0; i < basis->size(); ++i) {
    const ModeIndex& md = basis->mode(i);
    if (md.kind == ModeKind::constant) continue;
    double lam = eigenvalue(md);
    xi.c[i] = root * std::sqrt(lam) * sigma_of_lambda(p, lam) * gauss(rng);
  }
  return xi;
}

}  // namespace llns
