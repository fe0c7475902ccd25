#pragma once
// Statistical and structural experiments: Gaussian initial data and
// exponential moments, stationarity and time-reversal checks of the
// invariant product measure, Girsanov-tilted ensembles with entropy
// accounting, the plane-wave regularity-loss family, and rare-event
// probability estimation on the eps log scale.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <numbers>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "llns/dynamics.hpp"
#include "llns/field.hpp"
#include "llns/forcing.hpp"
#include "llns/noise.hpp"
#include "llns/numeric.hpp"
#include "llns/parallel.hpp"
#include "llns/rng.hpp"
#include "llns/trilinear.hpp"

namespace llns {

// ---------------------------------------------------------------------------
// Gaussian initial data: independent per-mode N(<u0>_z, (eps/2) sigma_z^2),
// constant modes included (sigma = 1 there).
inline SpectralField sample_gaussian_initial(const SpectralField& u0,
                                             const NoiseParams& params,
                                             std::mt19937_64& rng) {
  params.validate();
  SpectralField v(u0.basis);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (std::size_t z = 0; z < v.size(); ++z) {
    double sd = std::sqrt(0.5 * params.epsilon) * sigma(params, u0.basis->mode(z));
    v.c[z] = u0.c[z] + sd * gauss(rng);
  }
  return v;
}

// Streaming log-sum-exp with first and second scaled moments; merges are
// exact and order-fixed by the caller.
struct LogExpAccumulator {
  double peak = -std::numeric_limits<double>::infinity();
  double s1 = 0.0, s2 = 0.0;
  std::size_t n = 0;

  void add(double y) {
    if (y > peak) {
      double r = std::exp(peak - y);
      s1 *= r;
      s2 *= r * r;
      peak = y;
    }
    double e = std::exp(y - peak);
    s1 += e;
    s2 += e * e;
    ++n;
  }
  void merge(const LogExpAccumulator& o) {
    if (o.n == 0) return;
    if (peak < o.peak) {
      double r = std::exp(peak - o.peak);
      s1 = s1 * r + o.s1;
      s2 = s2 * r * r + o.s2;
      peak = o.peak;
    } else {
      double r = std::exp(o.peak - peak);
      s1 += o.s1 * r;
      s2 += o.s2 * r * r;
    }
    n += o.n;
  }
  double log_mean() const { return peak + std::log(s1 / double(n)); }
  // Relative standard error of the mean, sd(e^Y) / (sqrt(n) E e^Y).
  double rel_se() const {
    double nn = double(n);
    double ratio = nn * s2 / (s1 * s1) - 1.0;
    return std::sqrt(std::max(ratio, 0.0) / nn);
  }
};

struct GaussMomentReport {
  double eta = 0.0;
  double closed_form = 0.0;   // eps log E exp(eta ||U(0)||^2 / eps)
  double mc_estimate = 0.0;
  double mc_se = 0.0;
  double analytic_bound = 0.0;  // eta(1-eta)^{-2}||u0||^2 + eps eta/(2(1-eta)) sum sigma^2
  std::size_t draws = 0;
};

// Exact per-mode scalar identity E e^{aX^2} = (1-2as^2)^{-1/2} e^{a mu^2/(1-2as^2)}
// with a = eta/eps, s^2 = (eps/2) sigma^2, so 2as^2 = eta sigma^2.
inline double gaussian_exp_moment_closed(double eta, const SpectralField& u0,
                                         const NoiseParams& params) {
  params.validate();
  double total = 0.0;
  for (std::size_t z = 0; z < u0.size(); ++z) {
    double sg = sigma(params, u0.basis->mode(z));
    double x = eta * sg * sg;
    if (x >= 1.0)
      throw std::invalid_argument("gaussian_exp_moment: eta sigma^2 >= 1, not integrable");
    total += eta * u0.c[z] * u0.c[z] / (1.0 - x) -
             0.5 * params.epsilon * std::log1p(-x);
  }
  return total;
}

inline GaussMomentReport gaussian_exp_moment(double eta, const SpectralField& u0,
                                             const NoiseParams& params,
                                             std::size_t draws, std::uint64_t seed) {
  GaussMomentReport rep;
  rep.eta = eta;
  rep.draws = draws;
  rep.closed_form = gaussian_exp_moment_closed(eta, u0, params);

  double sum_u0 = 0.0, sum_sigma = 0.0;
  for (std::size_t z = 0; z < u0.size(); ++z) {
    double sg = sigma(params, u0.basis->mode(z));
    sum_u0 += u0.c[z] * u0.c[z];
    sum_sigma += sg * sg;
  }
  double om = 1.0 - eta;
  rep.analytic_bound = eta / (om * om) * sum_u0 +
                    params.epsilon * eta / (2.0 * om) * sum_sigma;

  const double eps = params.epsilon;
  LogExpAccumulator acc = run_blocked(
      draws, 1024, LogExpAccumulator{},
      [&](std::size_t j, LogExpAccumulator& a) {
        auto rng = make_rng(seed, j);
        SpectralField v = sample_gaussian_initial(u0, params, rng);
        a.add(eta * norm_sq(v, NormKind::H) / eps);
      },
      [](LogExpAccumulator& t, const LogExpAccumulator& b) { t.merge(b); });
  rep.mc_estimate = eps * acc.log_mean();
  rep.mc_se = eps * acc.rel_se();
  return rep;
}

// ---------------------------------------------------------------------------
// Stationarity of the product Gaussian G(0, eps I/2) at delta = 0: start
// replicas from it, integrate to T, compare per-mode mean / variance at T and
// the paired energy difference against the invariant values.
struct ModeStatistic {
  std::size_t mode = 0;
  double mean = 0.0, se_mean = 0.0, z_mean = 0.0;
  double var = 0.0, se_var = 0.0, z_var = 0.0;
};

struct CrossStatistic {
  std::size_t mode_a = 0, mode_b = 0;
  double mean = 0.0, se = 0.0, z = 0.0;
};

struct StationarityReport {
  std::size_t replicas = 0;
  double epsilon = 0.0, T = 0.0, dt = 0.0;
  std::vector<ModeStatistic> modes;
  std::vector<CrossStatistic> cross;   // E[c_a c_b], a != b, low modes
  double energy_diff_mean = 0.0, energy_diff_se = 0.0, energy_diff_z = 0.0;
  double max_abs_z_mean = 0.0, max_abs_z_var = 0.0, max_abs_z_cross = 0.0;
};

inline StationarityReport stationarity_test(const NoiseParams& params,
                                            const IntegratorConfig& cfg,
                                            std::size_t replicas,
                                            std::uint64_t seed,
                                            std::size_t cross_pairs = 12) {
  params.validate();
  if (params.delta != 0.0)
    throw std::invalid_argument("stationarity_test: requires delta = 0");
  BasisPtr basis = Basis::ball(params.m);
  TablePtr table = shared_table(basis);
  const std::size_t nmodes = basis->size();
  const SpectralField zero(basis);

  struct Acc {
    std::vector<MomentAccumulator> final_coeff;
    std::vector<MomentAccumulator> cross;
    MomentAccumulator energy_diff;
  };
  Acc init;
  init.final_coeff.resize(nmodes);
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t a = 3; a + 1 < nmodes && pairs.size() < cross_pairs; a += 2)
    pairs.push_back({a, a + 1});
  init.cross.resize(pairs.size());

  Acc acc = run_blocked(
      replicas, default_block_size, init,
      [&](std::size_t r, Acc& a) {
        auto rng = make_rng(seed, r);
        SpectralField u0 = sample_gaussian_initial(zero, params, rng);
        Trajectory traj = simulate(u0, params, cfg, nullptr, rng, table);
        const SpectralField& uT = traj.states.back();
        for (std::size_t z = 0; z < nmodes; ++z) a.final_coeff[z].add(uT.c[z]);
        for (std::size_t p = 0; p < pairs.size(); ++p)
          a.cross[p].add(uT.c[pairs[p].first] * uT.c[pairs[p].second]);
        a.energy_diff.add(norm_sq(uT, NormKind::H) - norm_sq(u0, NormKind::H));
      },
      [](Acc& t, const Acc& b) {
        for (std::size_t z = 0; z < t.final_coeff.size(); ++z)
          t.final_coeff[z].merge(b.final_coeff[z]);
        for (std::size_t p = 0; p < t.cross.size(); ++p)
          t.cross[p].merge(b.cross[p]);
        t.energy_diff.merge(b.energy_diff);
      });

  StationarityReport rep;
  rep.replicas = replicas;
  rep.epsilon = params.epsilon;
  rep.T = cfg.T;
  rep.dt = cfg.dt;
  const double target_var = 0.5 * params.epsilon;
  for (std::size_t z = 0; z < nmodes; ++z) {
    const auto& m = acc.final_coeff[z];
    ModeStatistic s;
    s.mode = z;
    s.mean = m.mean;
    s.se_mean = m.se_of_mean();
    s.z_mean = s.se_mean > 0.0 ? s.mean / s.se_mean : 0.0;
    s.var = m.variance();
    s.se_var = m.se_of_variance();
    s.z_var = s.se_var > 0.0 ? (s.var - target_var) / s.se_var : 0.0;
    rep.max_abs_z_mean = std::max(rep.max_abs_z_mean, std::abs(s.z_mean));
    rep.max_abs_z_var = std::max(rep.max_abs_z_var, std::abs(s.z_var));
    rep.modes.push_back(s);
  }
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    CrossStatistic c;
    c.mode_a = pairs[p].first;
    c.mode_b = pairs[p].second;
    c.mean = acc.cross[p].mean;
    c.se = acc.cross[p].se_of_mean();
    c.z = c.se > 0.0 ? c.mean / c.se : 0.0;
    rep.max_abs_z_cross = std::max(rep.max_abs_z_cross, std::abs(c.z));
    rep.cross.push_back(c);
  }
  rep.energy_diff_mean = acc.energy_diff.mean;
  rep.energy_diff_se = acc.energy_diff.se_of_mean();
  rep.energy_diff_z =
      rep.energy_diff_se > 0.0 ? rep.energy_diff_mean / rep.energy_diff_se : 0.0;
  return rep;
}

// ---------------------------------------------------------------------------
// Time reversal: the stationary dynamics at delta = 0 is invariant in law
// under u(t) -> -u(T-t). Pure second moments cannot see the sign, so triads
// with strong convective coupling supply the discriminating third moments.

// Triads (a, b, c) of wave modes ranked by |B_{c,ab} + B_{c,ba}| relative to
// the total decay rate; these maximize the short-time third-moment response.
inline std::vector<std::array<std::size_t, 3>> strong_triads(
    const TrilinearTable& table, std::size_t count) {
  const Basis& basis = *table.basis();
  std::map<std::array<std::size_t, 3>, double> sums;
  for (const auto& e : table.entries()) {
    if (e.z1 == e.z2) continue;
    if (basis.mode(e.z1).kind != ModeKind::wave ||
        basis.mode(e.z2).kind != ModeKind::wave)
      continue;
    std::array<std::size_t, 3> key{std::min<std::size_t>(e.z1, e.z2),
                                   std::max<std::size_t>(e.z1, e.z2), e.z};
    sums[key] += e.v;
  }
  std::vector<std::pair<double, std::array<std::size_t, 3>>> ranked;
  for (const auto& [key, v] : sums) {
    double lam = eigenvalue(basis.mode(key[0])) + eigenvalue(basis.mode(key[1])) +
                 eigenvalue(basis.mode(key[2]));
    double score = std::abs(v) / (1.0 + lam);
    if (score > 1e-12) ranked.push_back({score, {key[0], key[1], key[2]}});
  }
  std::sort(ranked.begin(), ranked.end(),
            [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<std::array<std::size_t, 3>> out;
  for (std::size_t i = 0; i < ranked.size() && i < count; ++i)
    out.push_back(ranked[i].second);
  return out;
}

struct ReversalStatistic {
  std::string label;
  double diff_mean = 0.0, se = 0.0, z = 0.0;
};

struct ReversalReport {
  std::size_t replicas = 0;
  bool negate = true;
  std::vector<ReversalStatistic> second_moments;
  std::vector<ReversalStatistic> third_moments;
  double max_abs_z_second = 0.0, max_abs_z_third = 0.0;
};

struct ReversalOptions {
  std::size_t replicas = 10000;
  std::uint64_t seed = 1;
  bool negate = true;  // false = deliberately wrong map, used as a negative control
  std::size_t triad_count = 8;
  std::array<std::array<double, 2>, 2> lag_fractions{{{0.2, 0.8}, {0.4, 0.6}}};
};

// Paired comparison on a common ensemble: for each statistic phi evaluated at
// nodes (t1, t2), the replica contributes phi(u) - phi(s u(T - .)) with
// s = -1 (or +1 for the control). Reversal invariance makes every difference
// mean-zero; the control flips the sign of odd statistics.
inline ReversalReport time_reversal_test(const NoiseParams& params,
                                         const IntegratorConfig& cfg,
                                         const ReversalOptions& opt) {
  params.validate();
  if (params.delta != 0.0)
    throw std::invalid_argument("time_reversal_test: requires delta = 0");
  BasisPtr basis = Basis::ball(params.m);
  TablePtr table = shared_table(basis);
  const SpectralField zero(basis);
  const std::size_t N = cfg.steps();
  const double s = opt.negate ? -1.0 : 1.0;

  struct LagPair {
    std::size_t i1, i2;   // forward node indices
    std::size_t r1, r2;   // indices entering the reversed-path statistic
    std::size_t mid, rmid;
  };
  std::vector<LagPair> lags;
  for (const auto& fr : opt.lag_fractions) {
    LagPair lp;
    lp.i1 = std::size_t(std::llround(fr[0] * double(N)));
    lp.i2 = std::size_t(std::llround(fr[1] * double(N)));
    lp.r1 = N - lp.i1;
    lp.r2 = N - lp.i2;
    // Second moments at (i1, i2) cancel identically when the fractions are
    // symmetric about 1/2, so pair i1 with the midpoint instead.
    lp.mid = (lp.i1 + lp.i2) / 2;
    lp.rmid = N - lp.mid;
    lags.push_back(lp);
  }

  auto triads = strong_triads(*table, opt.triad_count);
  std::vector<std::size_t> wave_modes;
  for (std::size_t z = 0; z < basis->size(); ++z)
    if (basis->mode(z).kind == ModeKind::wave) wave_modes.push_back(z);

  struct Acc {
    std::vector<MomentAccumulator> second, third;
  };
  Acc init;
  init.second.resize(lags.size() * wave_modes.size());
  init.third.resize(lags.size() * triads.size());

  Acc acc = run_blocked(
      opt.replicas, default_block_size, init,
      [&](std::size_t r, Acc& a) {
        auto rng = make_rng(opt.seed, r);
        SpectralField u0 = sample_gaussian_initial(zero, params, rng);
        Trajectory traj = simulate(u0, params, cfg, nullptr, rng, table);
        for (std::size_t li = 0; li < lags.size(); ++li) {
          const auto& lp = lags[li];
          const auto& f1 = traj.states[lp.i1];
          const auto& f2 = traj.states[lp.i2];
          const auto& g1 = traj.states[lp.r1];
          const auto& g2 = traj.states[lp.r2];
          const auto& fm = traj.states[lp.mid];
          const auto& gm = traj.states[lp.rmid];
          for (std::size_t w = 0; w < wave_modes.size(); ++w) {
            std::size_t z = wave_modes[w];
            // Quadratic statistics carry s^2 = 1 for either map.
            a.second[li * wave_modes.size() + w].add(f1.c[z] * fm.c[z] -
                                                     g1.c[z] * gm.c[z]);
          }
          for (std::size_t t = 0; t < triads.size(); ++t) {
            const auto& tr = triads[t];
            double fwd = f1.c[tr[0]] * f1.c[tr[1]] * f2.c[tr[2]];
            double rev = s * g1.c[tr[0]] * g1.c[tr[1]] * g2.c[tr[2]];
            a.third[li * triads.size() + t].add(fwd - rev);
          }
        }
      },
      [](Acc& t, const Acc& b) {
        for (std::size_t i = 0; i < t.second.size(); ++i)
          t.second[i].merge(b.second[i]);
        for (std::size_t i = 0; i < t.third.size(); ++i)
          t.third[i].merge(b.third[i]);
      });

  ReversalReport rep;
  rep.replicas = opt.replicas;
  rep.negate = opt.negate;
  auto emit = [&](const MomentAccumulator& m, std::string label,
                  std::vector<ReversalStatistic>& dst, double& peak) {
    ReversalStatistic st;
    st.label = std::move(label);
    st.diff_mean = m.mean;
    st.se = m.se_of_mean();
    st.z = st.se > 0.0 ? st.diff_mean / st.se : 0.0;
    peak = std::max(peak, std::abs(st.z));
    dst.push_back(std::move(st));
  };
  for (std::size_t li = 0; li < lags.size(); ++li) {
    std::string at = "@(" + std::to_string(lags[li].i1) + "," +
                     std::to_string(lags[li].i2) + ")";
    std::string at2 = "@(" + std::to_string(lags[li].i1) + "," +
                      std::to_string(lags[li].mid) + ")";
    for (std::size_t w = 0; w < wave_modes.size(); ++w)
      emit(acc.second[li * wave_modes.size() + w],
           "c" + std::to_string(wave_modes[w]) + at2, rep.second_moments,
           rep.max_abs_z_second);
    for (std::size_t t = 0; t < triads.size(); ++t) {
      const auto& tr = triads[t];
      emit(acc.third[li * triads.size() + t],
           "c" + std::to_string(tr[0]) + "*c" + std::to_string(tr[1]) + "*c" +
               std::to_string(tr[2]) + at,
           rep.third_moments, rep.max_abs_z_third);
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Girsanov tilting: add the per-mode drift sigma_z f_z and account for the
// change of measure. The closed-form entropy uses the regularized control
// norm sum sigma^2 f^2 / lambda plus the Cameron-Martin cost of shifting the
// initial Gaussian mean from u0 to v0.
struct TiltOptions {
  std::size_t replicas = 500;
  std::uint64_t seed = 1;
  bool random_initial = true;  // draw starts from G(v0, eps Q/2)
};

struct TiltReport {
  double epsilon = 0.0;
  std::size_t replicas = 0;
  double control_cost = 0.0;       // (1/2) || sqrt(Q) g ||^2 in L^2_t M
  double entropy_estimate = 0.0;   // (control_cost + initial shift cost) / eps
  double empirical_entropy = 0.0;  // mean realized log-density of the tilt
  double empirical_entropy_se = 0.0;
  double terminal_distance = 0.0;  // L^2_t H distance, ensemble mean vs skeleton
};

inline TiltReport tilted_simulate(const Forcing& f, const SpectralField& v0,
                                  const SpectralField& u0, const NoiseParams& params,
                                  const IntegratorConfig& cfg, const TiltOptions& opt) {
  params.validate();
  if (params.epsilon <= 0.0)
    throw std::invalid_argument("tilted_simulate: epsilon must be > 0");
  check_same_basis(v0, u0);
  const BasisPtr& basis = v0.basis;
  TablePtr table = shared_table(basis);
  const std::size_t N = cfg.steps();
  if (f.nodes() < N + 1)
    throw std::invalid_argument("tilted_simulate: forcing does not cover [0, T]");

  // Drift actually injected into the SDE: sigma (.) f.
  Forcing f_sigma;
  f_sigma.t0 = f.t0;
  f_sigma.dt = f.dt;
  for (const auto& v : f.values) {
    SpectralField g = v;
    for (std::size_t z = 0; z < g.size(); ++z)
      g.c[z] *= sigma(params, basis->mode(z));
    f_sigma.values.push_back(std::move(g));
  }

  TiltReport rep;
  rep.epsilon = params.epsilon;
  rep.replicas = opt.replicas;
  rep.control_cost = 0.5 * trapezoid(N + 1, f.dt, [&](std::size_t i) {
    double s = 0.0;
    const SpectralField& fi = f.at_node(i);
    for (std::size_t z = 0; z < fi.size(); ++z) {
      double lam = eigenvalue(basis->mode(z));
      if (lam > 0.0) {
        double sg = sigma(params, basis->mode(z));
        s += sg * sg * fi.c[z] * fi.c[z] / lam;
      }
    }
    return s;
  });
  double shift_cost = 0.0;
  for (std::size_t z = 0; z < v0.size(); ++z) {
    double sg = sigma(params, basis->mode(z));
    double d = v0.c[z] - u0.c[z];
    shift_cost += d * d / (sg * sg);
  }
  rep.entropy_estimate = (rep.control_cost + shift_cost) / params.epsilon;

  // Skeleton target: the zero-noise flow driven by the same injected drift.
  NoiseParams det = params;
  det.epsilon = 0.0;
  auto dummy = make_rng(0, 0);
  Trajectory skeleton = simulate(v0, det, cfg, &f_sigma, dummy, table);

  Stepper st(basis, params, cfg, table);
  const auto& fw = st.forcing_weights();
  const auto& inj = st.injected_std();

  struct Acc {
    std::vector<double> mean_path;  // (N+1) x modes running sums
    MomentAccumulator logratio;
  };
  Acc init;
  init.mean_path.assign((N + 1) * basis->size(), 0.0);

  const double eps = params.epsilon;
  Acc acc = run_blocked(
      opt.replicas, default_block_size, init,
      [&](std::size_t r, Acc& a) {
        auto rng = make_rng(opt.seed, r);
        std::normal_distribution<double> gauss(0.0, 1.0);
        SpectralField u =
            opt.random_initial ? sample_gaussian_initial(v0, params, rng) : v0;
        double lr = 0.0;
        if (opt.random_initial) {
          // Realized density ratio of the two initial Gaussians.
          for (std::size_t z = 0; z < u.size(); ++z) {
            double sg = sigma(params, basis->mode(z));
            double du = u.c[z] - u0.c[z], dv = u.c[z] - v0.c[z];
            lr += (du * du - dv * dv) / (eps * sg * sg);
          }
        }
        for (std::size_t z = 0; z < u.size(); ++z)
          a.mean_path[z] += u.c[z];
        for (std::size_t i = 0; i < N; ++i) {
          SpectralField fi = f_sigma.step_value(i);
          SpectralField g = st.deterministic_map(u, &fi);
          for (std::size_t z = 0; z < u.size(); ++z) {
            if (inj[z] > 0.0) {
              double xi = inj[z] * gauss(rng);
              double m = fw[z] * fi.c[z];
              lr += (m * m + 2.0 * m * xi) / (2.0 * inj[z] * inj[z]);
              g.c[z] += xi;
            }
            if (!std::isfinite(g.c[z])) throw IntegrationError(i);
          }
          u = std::move(g);
          double* row = &a.mean_path[(i + 1) * basis->size()];
          for (std::size_t z = 0; z < u.size(); ++z) row[z] += u.c[z];
        }
        a.logratio.add(lr);
      },
      [](Acc& t, const Acc& b) {
        for (std::size_t i = 0; i < t.mean_path.size(); ++i)
          t.mean_path[i] += b.mean_path[i];
        t.logratio.merge(b.logratio);
      });

  rep.empirical_entropy = acc.logratio.mean;
  rep.empirical_entropy_se = acc.logratio.se_of_mean();
  double inv = 1.0 / double(opt.replicas);
  double dist_sq = trapezoid(N + 1, cfg.dt, [&](std::size_t i) {
    const double* row = &acc.mean_path[i * basis->size()];
    double d = 0.0;
    for (std::size_t z = 0; z < basis->size(); ++z) {
      double diff = row[z] * inv - skeleton.states[i].c[z];
      d += diff * diff;
    }
    return d;
  });
  rep.terminal_distance = std::sqrt(dist_sq);
  return rep;
}

// ---------------------------------------------------------------------------
// Plane-wave regularity-loss family. On top of a controlled base trajectory,
// superpose w = w1 - w2 supported after tau', where both parts are the mode
// sin(2 pi n x1) e2 with envelopes
//   a1(t) = n^{-1/2} exp(-4 pi^2 n^2 |t - tau' - 1/n|),
//   a2(t) = n^{-1/2} exp(-4 pi^2 n - 4 pi^2 n^2 (t - tau')),
// so w vanishes at tau' and peaks with H^1 norm ~ sqrt(2) pi sqrt(n) at
// tau' + 1/n. The modified control splits into a gradient burst 2 grad w1 on
// [tau', tau'+1/n] and convective cross terms with the base flow.
struct BlowupReport {
  int n = 0;
  double h1_peak = 0.0;     // ||v(tau' + 1/n)||_{H^1}, inhomogeneous
  double extra_cost = 0.0;  // ||g^(n) - g||^2 in L^2_t M
  double peak_time = 0.0;
};

struct BlowupResult {
  Trajectory traj;
  Forcing forcing;
  BlowupReport report;
};

// Mode set for the experiment: the ball of radius m, the driven quadruple at
// k = (n,0,0), and the shifted shells (n,0,0) +- k needed to represent the
// convective cross forcing. Anisotropic on purpose; full B_n would be huge.
inline BasisPtr blowup_basis(int m, int n) {
  if (n <= m) throw std::invalid_argument("blowup_basis: need n > m");
  std::vector<ModeIndex> modes = enumerate_modes(m);
  std::vector<IVec3> extra;
  auto push_unique = [&](IVec3 k) {
    if (!canonical_half(k)) k = negated(k);
    for (const auto& e : extra)
      if (e == k) return;
    extra.push_back(k);
  };
  push_unique({n, 0, 0});
  for (int kx = -m; kx <= m; ++kx)
    for (int ky = -m; ky <= m; ++ky)
      for (int kz = -m; kz <= m; ++kz) {
        IVec3 k{kx, ky, kz};
        if (norm_sq(k) == 0 || norm_sq(k) > m * m) continue;
        push_unique({n + kx, ky, kz});
      }
  std::sort(extra.begin(), extra.end(), [](const IVec3& a, const IVec3& b) {
    if (norm_sq(a) != norm_sq(b)) return norm_sq(a) < norm_sq(b);
    return a < b;
  });
  for (const auto& k : extra)
    for (int pol = 0; pol < 2; ++pol)
      for (Parity p : {Parity::cos, Parity::sin})
        modes.push_back(ModeIndex::wave(k, pol, p));
  return std::make_shared<const Basis>(std::move(modes), n + m);
}

namespace detail {
// integral of exp(-c (b - t)) over [0, L], b >= L >= 0
inline double rising_exp_integral(double c, double b, double L) {
  return (std::exp(-c * (b - L)) - std::exp(-c * b)) / c;
}
// integral of exp(-c t) over [0, L]
inline double falling_exp_integral(double c, double L) {
  return -std::expm1(-c * L) / c;
}
}  // namespace detail

inline BlowupResult blowup_family(int n, double tau_prime, const Trajectory& base,
                                  const Forcing& base_forcing) {
  if (n < 1) throw std::invalid_argument("blowup_family: n < 1");
  const BasisPtr& basis = base.basis();
  const std::size_t zn = basis->find_wave({n, 0, 0}, 0, Parity::sin);
  if (zn == Basis::npos)
    throw std::invalid_argument("blowup_family: frequency n not representable");
  const std::size_t N = base.steps();
  const double t_end = base.time_at(N);
  if (!(tau_prime >= base.t0 && tau_prime < t_end))
    throw std::invalid_argument("blowup_family: tau' outside base time range");
  if (base_forcing.nodes() != 0 && base_forcing.nodes() < N + 1)
    throw std::invalid_argument("blowup_family: base forcing does not cover the grid");

  const double lam_n = four_pi_sq * double(n) * double(n);
  const double amp = 1.0 / std::sqrt(double(n));
  const double peak = tau_prime + 1.0 / double(n);
  // sin(2 pi n x1) e2 = -e_{(n,0,0),pol 0,sin} / sqrt(2)
  const double mode_scale = -1.0 / std::numbers::sqrt2;
  auto a1 = [&](double t) { return amp * std::exp(-lam_n * std::abs(t - peak)); };
  auto a2 = [&](double t) {
    return amp * std::exp(-four_pi_sq * double(n) - lam_n * (t - tau_prime));
  };

  bool base_nonzero = false;
  for (const auto& st : base.states)
    for (double c : st.c) base_nonzero = base_nonzero || c != 0.0;
  TablePtr table = base_nonzero ? shared_table(basis) : nullptr;

  BlowupResult out;
  out.traj = base;
  out.forcing.t0 = base.t0;
  out.forcing.dt = base.dt;
  for (std::size_t i = 0; i <= N; ++i) {
    double t = base.time_at(i);
    SpectralField fi = base_forcing.nodes() ? base_forcing.at_node(i)
                                            : SpectralField(basis);
    if (t > tau_prime) {
      double cw = mode_scale * (a1(t) - a2(t));
      out.traj.states[i].c[zn] += cw;
      if (t <= peak) fi.c[zn] += 2.0 * lam_n * mode_scale * a1(t);
      if (base_nonzero && cw != 0.0) {
        // v = u + w solves the controlled equation when the forcing carries
        // the convective cross terms (u.grad)w + (w.grad)u.
        SpectralField w(basis);
        w.c[zn] = cw;
        SpectralField cross = table->apply_bilinear(base.states[i], w) +
                              table->apply_bilinear(w, base.states[i]);
        axpy(1.0, cross, fi);
      }
    }
    out.forcing.values.push_back(std::move(fi));
  }

  // Peak state: base interpolated linearly onto tau' + 1/n, plus w exactly.
  SpectralField v_peak(basis);
  {
    double pos = (peak - base.t0) / base.dt;
    std::size_t i0 = std::min<std::size_t>(N - 1, std::size_t(pos));
    double frac = std::min(1.0, pos - double(i0));
    for (std::size_t z = 0; z < v_peak.size(); ++z)
      v_peak.c[z] = (1.0 - frac) * base.states[i0].c[z] +
                    frac * base.states[i0 + 1].c[z];
    v_peak.c[zn] += mode_scale * (a1(peak) - a2(peak));
  }

  BlowupReport& rep = out.report;
  rep.n = n;
  rep.peak_time = peak;
  rep.h1_peak = norm(v_peak, NormKind::Hr, 1.0);

  // Gradient-burst cost: ||2 grad w1||_M^2 = 8 pi^2 n^2 a1^2, integrated over
  // [tau', min(peak, t_end)] in closed form.
  const double L1 = std::min(peak, t_end) - tau_prime;
  double cost = 2.0 * four_pi_sq * double(n) * double(n) * amp * amp *
                detail::rising_exp_integral(2.0 * lam_n, peak - tau_prime, L1);

  if (base_nonzero) {
    // Tensor term (w (x) u + u (x) w): pointwise matrix norm integrates to
    // aw(t)^2 (||u||^2 + ||u_2||^2) because sin^2 averages to 1/2 against the
    // band-limited base. The inner product with grad w1 vanishes: both
    // polarizations at wavevectors along e1 have zero first component.
    std::vector<std::size_t> gi, gj;
    std::vector<double> gv;
    for (std::size_t i = 0; i < basis->size(); ++i)
      for (std::size_t j = i; j < basis->size(); ++j) {
        double acc2 = 0.0;
        for (const auto& ti : exp_terms(basis->mode(i)))
          for (const auto& tj : exp_terms(basis->mode(j))) {
            if (ti.kk[0] + tj.kk[0] != 0 || ti.kk[1] + tj.kk[1] != 0 ||
                ti.kk[2] + tj.kk[2] != 0)
              continue;
            acc2 += (ti.amp[1] * tj.amp[1]).real();
          }
        if (std::abs(acc2) > 1e-14) {
          gi.push_back(i);
          gj.push_back(j);
          gv.push_back(acc2);
        }
      }
    auto factor_at = [&](const SpectralField& u) {
      double h = norm_sq(u, NormKind::H), u2 = 0.0;
      for (std::size_t p = 0; p < gv.size(); ++p)
        u2 += (gi[p] == gj[p] ? 1.0 : 2.0) * gv[p] * u.c[gi[p]] * u.c[gj[p]];
      return h + u2;
    };
    // The envelope has width 1/(8 pi^2 n^2), far below the base time scale,
    // so freeze the base factor at the peak and integrate aw^2 exactly:
    // aw^2 = a1^2 - 2 a1 a2 + a2^2 piecewise on [tau', peak] and [peak, end].
    double pos = (peak - base.t0) / base.dt;
    std::size_t i0 = std::min<std::size_t>(N - 1, std::size_t(pos));
    double frac = std::min(1.0, pos - double(i0));
    SpectralField u_pk(basis);
    for (std::size_t z = 0; z < u_pk.size(); ++z)
      u_pk.c[z] = (1.0 - frac) * base.states[i0].c[z] +
                  frac * base.states[i0 + 1].c[z];
    double Lall = t_end - tau_prime;
    double int_a1 =
        amp * amp * (detail::rising_exp_integral(2.0 * lam_n, peak - tau_prime, L1) +
                     (Lall > L1 ? detail::falling_exp_integral(2.0 * lam_n, Lall - L1)
                                : 0.0));
    double e8 = std::exp(-2.0 * four_pi_sq * double(n));
    double int_a2 = amp * amp * e8 * detail::falling_exp_integral(2.0 * lam_n, Lall);
    // a1 a2 = amp^2 e^{-8 pi^2 n} on [tau', peak], then decays at rate 2 lam_n.
    double int_a1a2 =
        amp * amp * e8 *
        (L1 + (Lall > L1 ? detail::falling_exp_integral(2.0 * lam_n, Lall - L1) : 0.0));
    cost += factor_at(u_pk) * (int_a1 - 2.0 * int_a1a2 + int_a2);
  }
  rep.extra_cost = cost;
  return out;
}

// ---------------------------------------------------------------------------
// Rare-event probabilities on the eps log scale across a scaling schedule,
// optionally importance-sampled under a Girsanov tilt.
struct RareEventPoint {
  double epsilon = 0.0, delta = 0.0;
  int m = 0;
  double p_hat = 0.0;
  double eps_log_p = 0.0;
  double se = 0.0;  // delta-method SE of eps log p
  std::size_t hits = 0, replicas = 0;
  bool upper_bound_only = false;  // no hits without tilt: value is a bound
};

inline std::vector<RareEventPoint> rare_event_estimate(
    const std::function<bool(const Trajectory&)>& event,
    const ScalingSchedule& schedule, double beta, const SpectralField& u0,
    const IntegratorConfig& cfg, std::size_t replicas, std::uint64_t seed,
    const Forcing* tilt = nullptr) {
  schedule.validate();
  std::vector<RareEventPoint> out;
  for (const auto& entry : schedule.entries) {
    NoiseParams params{entry.epsilon, entry.delta, beta, entry.m};
    params.validate();
    BasisPtr basis = Basis::ball(entry.m);
    TablePtr table = shared_table(basis);
    SpectralField u0m = project_to(u0, basis);
    const std::size_t N = cfg.steps();

    Forcing tilt_m;
    if (tilt) {
      if (tilt->nodes() < N + 1)
        throw std::invalid_argument("rare_event_estimate: tilt does not cover [0, T]");
      tilt_m.t0 = tilt->t0;
      tilt_m.dt = tilt->dt;
      for (const auto& v : tilt->values) {
        SpectralField g = project_to(v, basis);
        for (std::size_t z = 0; z < g.size(); ++z)
          g.c[z] *= sigma(params, basis->mode(z));
        tilt_m.values.push_back(std::move(g));
      }
    }

    Stepper st(basis, params, cfg, table);
    const auto& fw = st.forcing_weights();
    const auto& inj = st.injected_std();

    struct Acc {
      MomentAccumulator weighted;  // w * 1_event per replica
      std::size_t hits = 0;
    };
    Acc acc = run_blocked(
        replicas, default_block_size, Acc{},
        [&](std::size_t r, Acc& a) {
          auto rng = make_rng(seed, r);
          std::normal_distribution<double> gauss(0.0, 1.0);
          Trajectory traj;
          traj.t0 = 0.0;
          traj.dt = cfg.dt;
          traj.cfg = cfg;
          traj.states.reserve(N + 1);
          traj.states.push_back(u0m);
          double lr = 0.0;
          for (std::size_t i = 0; i < N; ++i) {
            SpectralField fi(basis);
            const SpectralField* fp = nullptr;
            if (tilt) {
              fi = tilt_m.step_value(i);
              fp = &fi;
            }
            SpectralField g = st.deterministic_map(traj.states.back(), fp);
            for (std::size_t z = 0; z < g.size(); ++z) {
              if (inj[z] > 0.0) {
                double xi = inj[z] * gauss(rng);
                if (tilt) {
                  double m = fw[z] * fi.c[z];
                  lr += (m * m + 2.0 * m * xi) / (2.0 * inj[z] * inj[z]);
                }
                g.c[z] += xi;
              }
              if (!std::isfinite(g.c[z])) throw IntegrationError(i);
            }
            traj.states.push_back(std::move(g));
          }
          bool hit = event(traj);
          if (hit) ++a.hits;
          a.weighted.add(hit ? std::exp(-lr) : 0.0);
        },
        [](Acc& t, const Acc& b) {
          t.weighted.merge(b.weighted);
          t.hits += b.hits;
        });

    RareEventPoint pt;
    pt.epsilon = entry.epsilon;
    pt.delta = entry.delta;
    pt.m = entry.m;
    pt.replicas = replicas;
    pt.hits = acc.hits;
    pt.p_hat = acc.weighted.mean;
    if (pt.p_hat > 0.0) {
      pt.eps_log_p = entry.epsilon * std::log(pt.p_hat);
      pt.se = entry.epsilon * acc.weighted.se_of_mean() / pt.p_hat;
    } else {
      // Rule-of-three 95% upper bound; flagged, not an estimate.
      pt.upper_bound_only = true;
      pt.eps_log_p = entry.epsilon * std::log(3.0 / double(replicas));
      pt.se = 0.0;
    }
    out.push_back(pt);
  }
  return out;
}

}  // namespace llns
