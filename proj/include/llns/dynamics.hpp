#pragma once
// Time integration of the Galerkin SDE
//   dc_z = -lambda_z c_z dt - sum B_{z,z1,z2} c_{z1} c_{z2} dt + f_z dt
//          + sqrt(eps) lambda_z^{1/2} sigma_z dbeta_z
// plus energy bookkeeping with the Ito correction.

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "llns/field.hpp"
#include "llns/forcing.hpp"
#include "llns/noise.hpp"
#include "llns/trilinear.hpp"

namespace llns {

enum class Scheme : std::uint8_t { semi_implicit_euler, exponential_euler };

struct IntegratorConfig {
  Scheme scheme = Scheme::exponential_euler;
  double dt = 1e-3;
  double T = 1.0;
  bool record_noise = false;
  // Draw the per-step noise from the exact OU stochastic convolution,
  // N(0, (eps sigma^2/2)(1 - w0^2)) with w0 the one-step linear multiplier,
  // added undecayed. Same continuum limit as the plain schemes; preserves the
  // per-mode stationary variance at any dt.
  bool exact_linear_noise = false;
  // OU reduction for oracle tests only.
  bool disable_nonlinearity = false;

  std::size_t steps() const {
    if (dt <= 0.0 || T < dt) throw std::invalid_argument("need 0 < dt <= T");
    return std::size_t(std::llround(T / dt));
  }
};

struct IntegrationError : std::runtime_error {
  std::size_t step;
  explicit IntegrationError(std::size_t s)
      : std::runtime_error("non-finite coefficient at step " + std::to_string(s)),
        step(s) {}
};

struct Trajectory {
  double t0 = 0.0;
  double dt = 0.0;
  IntegratorConfig cfg;  // how the path was produced
  std::vector<SpectralField> states;
  std::vector<SpectralField> noise_log;  // injected increments, length steps()

  std::size_t steps() const { return states.empty() ? 0 : states.size() - 1; }
  double time_at(std::size_t i) const { return t0 + dt * double(i); }
  const BasisPtr& basis() const { return states.at(0).basis; }
};

inline double energy(const SpectralField& u) { return 0.5 * norm_sq(u, NormKind::H); }
inline double dissipation(const SpectralField& u) { return norm_sq(u, NormKind::V); }

// -lambda c - B(u)
inline SpectralField drift(const SpectralField& u, const TrilinearTable& table) {
  SpectralField d = table.apply(u);
  for (std::size_t i = 0; i < d.size(); ++i)
    d.c[i] = -eigenvalue(u.basis->mode(i)) * u.c[i] - d.c[i];
  return d;
}

namespace detail {
inline double phi1(double z) {
  if (std::abs(z) < 1e-8) return 1.0 + 0.5 * z;
  return std::expm1(z) / z;
}
}  // namespace detail

// Per-mode step coefficients shared by one integration run.
class Stepper {
 public:
  Stepper(BasisPtr basis, const NoiseParams& params, const IntegratorConfig& cfg,
          TablePtr table)
      : basis_(std::move(basis)), params_(params), cfg_(cfg), table_(std::move(table)) {
    params_.validate();
    const std::size_t n = basis_->size();
    lambda_.resize(n);
    w0_.resize(n);
    phi_dt_.resize(n);
    inj_std_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double lam = eigenvalue(basis_->mode(i));
      lambda_[i] = lam;
      const double x = lam * cfg_.dt;
      if (cfg_.scheme == Scheme::exponential_euler) {
        w0_[i] = std::exp(-x);
        phi_dt_[i] = detail::phi1(-x) * cfg_.dt;
      } else {
        w0_[i] = 1.0 / (1.0 + x);
        phi_dt_[i] = cfg_.dt * w0_[i];
      }
      const double sg = sigma_of_lambda(params_, lam);
      if (basis_->mode(i).kind == ModeKind::constant || params_.epsilon == 0.0) {
        inj_std_[i] = 0.0;
      } else if (cfg_.exact_linear_noise) {
        inj_std_[i] =
            std::sqrt(0.5 * params_.epsilon * sg * sg * (1.0 - w0_[i] * w0_[i]));
      } else {
        inj_std_[i] = w0_[i] * std::sqrt(params_.epsilon * cfg_.dt * lam) * sg;
      }
    }
  }

  const BasisPtr& basis() const { return basis_; }
  const TrilinearTable& table() const { return *table_; }
  const std::vector<double>& injected_std() const { return inj_std_; }
  // Per-mode weight multiplying the forcing within a step (phi1 dt form).
  const std::vector<double>& forcing_weights() const { return phi_dt_; }

  // One-step Ito compensator (1/2) sum of injected variances; tends to
  // (eps/2) Tr[P_m A Q_delta] dt.
  double ito_compensator() const {
    double s = 0.0;
    for (double v : inj_std_) s += v * v;
    return 0.5 * s;
  }

  // Deterministic part of the step map. forcing may be null.
  SpectralField deterministic_map(const SpectralField& u,
                                  const SpectralField* forcing) const {
    SpectralField next(u.basis);
    if (cfg_.disable_nonlinearity) {
      for (std::size_t i = 0; i < next.size(); ++i) next.c[i] = 0.0;
    } else {
      next = table_->apply(u);
    }
    // Both schemes share the shape  c' = w0 c + phi_dt F  once the per-mode
    // coefficients are fixed (semi-implicit: w0 = phi1 weight = 1/(1+lambda dt)).
    for (std::size_t i = 0; i < next.size(); ++i) {
      double F = -next.c[i] + (forcing ? forcing->c[i] : 0.0);
      next.c[i] = w0_[i] * u.c[i] + phi_dt_[i] * F;
    }
    return next;
  }

  // Draw the injected noise increment (already scheme-scaled).
  SpectralField sample_injected(std::mt19937_64& rng) const {
    SpectralField xi(basis_);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (std::size_t i = 0; i < xi.size(); ++i)
      if (inj_std_[i] > 0.0) xi.c[i] = inj_std_[i] * gauss(rng);
    return xi;
  }

 private:
  BasisPtr basis_;
  NoiseParams params_;
  IntegratorConfig cfg_;
  TablePtr table_;
  std::vector<double> lambda_, w0_, phi_dt_, inj_std_;
};

// Single step, self-contained (builds mode tables on the fly; use simulate
// for whole paths).
inline SpectralField step(const SpectralField& u, const NoiseParams& params,
                          const IntegratorConfig& cfg, const SpectralField* forcing,
                          std::mt19937_64& rng) {
  Stepper st(u.basis, params, cfg, shared_table(u.basis));
  SpectralField next = st.deterministic_map(u, forcing);
  SpectralField xi = st.sample_injected(rng);
  axpy(1.0, xi, next);
  for (std::size_t i = 0; i < next.size(); ++i)
    if (!std::isfinite(next.c[i])) throw IntegrationError(0);
  return next;
}

inline Trajectory simulate(const SpectralField& u0, const NoiseParams& params,
                           const IntegratorConfig& cfg,
                           const Forcing* forcing, std::mt19937_64& rng,
                           TablePtr table = nullptr) {
  if (!table) table = shared_table(u0.basis);
  Stepper st(u0.basis, params, cfg, table);
  const std::size_t N = cfg.steps();
  if (forcing && forcing->nodes() < N + 1)
    throw std::invalid_argument("forcing does not cover [0, T]");

  Trajectory traj;
  traj.t0 = 0.0;
  traj.dt = cfg.dt;
  traj.cfg = cfg;
  traj.states.reserve(N + 1);
  traj.states.push_back(u0);
  if (cfg.record_noise) traj.noise_log.reserve(N);

  const bool noisy = params.epsilon > 0.0;
  for (std::size_t i = 0; i < N; ++i) {
    std::optional<SpectralField> f;
    if (forcing) f = forcing->step_value(i);
    SpectralField next = st.deterministic_map(traj.states.back(), f ? &*f : nullptr);
    SpectralField xi(u0.basis);
    if (noisy) {
      xi = st.sample_injected(rng);
      axpy(1.0, xi, next);
    }
    for (std::size_t z = 0; z < next.size(); ++z)
      if (!std::isfinite(next.c[z])) throw IntegrationError(i);
    traj.states.push_back(std::move(next));
    if (cfg.record_noise) traj.noise_log.push_back(std::move(xi));
  }
  return traj;
}

// Per-step residual of the discrete energy identity,
//   r_i = E_{i+1} - (1/2)||G(u_i)||^2 - <G(u_i), xi_i> - ito_compensator,
// with G the deterministic step map and xi_i the logged injected increment.
// Each r_i has conditional mean zero, so the running cumulative sum (the
// returned sequence) is a martingale; its continuum reading is
// dE + diss dt - <u, dW> - (eps/2) tr dt.
inline std::vector<double> energy_residual(const Trajectory& traj,
                                           const NoiseParams& params,
                                           const Forcing* forcing = nullptr) {
  if (traj.noise_log.size() != traj.steps())
    throw std::invalid_argument("energy_residual: trajectory lacks a noise log");
  Stepper st(traj.basis(), params, traj.cfg, shared_table(traj.basis()));
  const double ito = st.ito_compensator();
  std::vector<double> cum;
  cum.reserve(traj.steps());
  double acc = 0.0;
  for (std::size_t i = 0; i < traj.steps(); ++i) {
    std::optional<SpectralField> f;
    if (forcing) f = forcing->step_value(i);
    SpectralField g = st.deterministic_map(traj.states[i], f ? &*f : nullptr);
    double r = energy(traj.states[i + 1]) - energy(g) -
               inner(g, traj.noise_log[i]) - ito;
    acc += r;
    cum.push_back(acc);
  }
  return cum;
}

// Two-sided defect of the continuum energy identity
//   (1/2)||u(T)||^2 + int ||u||_V^2 = (1/2)||u(0)||^2 + int <u, f>,
// all time integrals by trapezoid; O(dt) for deterministic trajectories.
inline double energy_identity_check(const Trajectory& traj, const Forcing* forcing) {
  const std::size_t N = traj.steps();
  double lhs = energy(traj.states[N]);
  double rhs = energy(traj.states[0]);
  for (std::size_t i = 0; i <= N; ++i) {
    double w = (i == 0 || i == N) ? 0.5 : 1.0;
    lhs += w * traj.dt * dissipation(traj.states[i]);
    if (forcing) rhs += w * traj.dt * inner(traj.states[i], forcing->at_node(i));
  }
  return lhs - rhs;
}

}  // namespace llns
