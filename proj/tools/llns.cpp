// Batch front-end for the spectral Galerkin SDE laboratory. Subcommands cover
// simulation, skeleton integration, rate analysis, Girsanov tilting,
// stationarity and time-reversal checks, the regularity-loss family, trace
// tables, Gaussian exponential moments, and rare-event estimation. Every run
// writes its outputs plus a manifest.json listing each file with a content
// hash; outputs are byte-identical for identical (config, seed) pairs.
//
// Exit codes: 0 success, 2 configuration error, 3 numerical failure (the
// failing step index goes to stderr).

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "llns/dynamics.hpp"
#include "llns/experiments.hpp"
#include "llns/field.hpp"
#include "llns/forcing.hpp"
#include "llns/io.hpp"
#include "llns/modes.hpp"
#include "llns/noise.hpp"
#include "llns/parallel.hpp"
#include "llns/rate.hpp"
#include "llns/rng.hpp"
#include "llns/trilinear.hpp"
#include "llns/version.hpp"

namespace fs = std::filesystem;
using llns::json;

namespace {

struct CommonOpts {
  std::string output_dir = ".";
  std::uint64_t seed = 1;
};

struct PhysOpts {
  int m = 2;
  double epsilon = 1.0;
  double delta = 0.0;
  double beta = 1.5;
  double T = 1.0;
  double dt = 1e-3;
  std::string scheme = "exponential_euler";
  bool exact_linear_noise = false;
};

void add_common(CLI::App* sub, CommonOpts& c, bool with_seed = true) {
  sub->add_option("--output-dir", c.output_dir, "directory for outputs")
      ->capture_default_str();
  if (with_seed)
    sub->add_option("--seed", c.seed, "master seed; replica r uses stream (seed, r)")
        ->capture_default_str();
}

void add_phys(CLI::App* sub, PhysOpts& p, bool with_noise = true) {
  sub->add_option("--m", p.m, "frequency cutoff of the mode ball")
      ->capture_default_str();
  if (with_noise) {
    sub->add_option("--epsilon", p.epsilon, "noise intensity")->capture_default_str();
    sub->add_option("--delta", p.delta, "spectral regularization strength")
        ->capture_default_str();
    sub->add_option("--beta", p.beta, "regularization exponent, must exceed 5/4")
        ->capture_default_str();
  }
  sub->add_option("--T", p.T, "final time")->capture_default_str();
  sub->add_option("--dt", p.dt, "time step")->capture_default_str();
  sub->add_option("--scheme", p.scheme,
                  "semi_implicit_euler or exponential_euler")
      ->capture_default_str();
  if (with_noise)
    sub->add_flag("--exact-linear-noise", p.exact_linear_noise,
                  "inject noise with the exact linear-flow stationary variance");
}

// Central parameter checks shared by all subcommands. Messages name the
// violated constraint; nonempty diagnostics mean exit code 2.
std::vector<std::string> validate_config(const PhysOpts& p, bool m_required,
                                         double eta = 0.0) {
  std::vector<std::string> out;
  if (p.beta <= 1.25)
    out.push_back("beta = " + llns::fmt_double(p.beta) +
                  ": beta must exceed 5/4 for a finite regularized trace");
  if (p.delta < 0.0) out.push_back("delta must be >= 0");
  if (p.epsilon < 0.0) out.push_back("epsilon must be >= 0");
  if (p.delta == 0.0 && m_required && p.m < 1)
    out.push_back("delta = 0 requires a finite mode cutoff m >= 1");
  if (m_required && p.m < 1) out.push_back("m must be >= 1");
  if (!(p.dt > 0.0)) out.push_back("dt must be > 0");
  if (p.dt > p.T)
    out.push_back("dt = " + llns::fmt_double(p.dt) + " exceeds T = " +
                  llns::fmt_double(p.T) + "; need dt <= T");
  if (eta >= 1.0)
    out.push_back("eta = " + llns::fmt_double(eta) +
                  ": exponential moments require eta < 1");
  return out;
}

int report_diagnostics(const std::vector<std::string>& diags) {
  for (const auto& d : diags) std::cerr << "config error: " << d << '\n';
  return diags.empty() ? 0 : 2;
}

llns::NoiseParams noise_params(const PhysOpts& p) {
  return llns::NoiseParams{p.epsilon, p.delta, p.beta, p.m};
}

llns::IntegratorConfig integrator_config(const PhysOpts& p) {
  llns::IntegratorConfig cfg;
  cfg.scheme = llns::parse_scheme(p.scheme);
  cfg.dt = p.dt;
  cfg.T = p.T;
  cfg.exact_linear_noise = p.exact_linear_noise;
  return cfg;
}

json phys_json(const PhysOpts& p, bool with_noise = true) {
  json j;
  j["m"] = p.m;
  if (with_noise) {
    j["epsilon"] = p.epsilon;
    j["delta"] = p.delta;
    j["beta"] = p.beta;
    j["exact_linear_noise"] = p.exact_linear_noise;
  }
  j["T"] = p.T;
  j["dt"] = p.dt;
  j["scheme"] = p.scheme;
  return j;
}

// Initial or forcing data from a file, mapped onto the run basis mode by mode.
llns::SpectralField load_field(const std::string& path, const llns::BasisPtr& basis) {
  if (path.empty()) return llns::SpectralField(basis);
  return llns::project_to(llns::read_field_csv(path), basis);
}

llns::Forcing load_forcing(const std::string& path, const llns::BasisPtr& basis) {
  llns::Forcing raw = llns::read_forcing_csv(path);
  llns::Forcing out;
  out.t0 = raw.t0;
  out.dt = raw.dt;
  for (const auto& v : raw.values) out.values.push_back(llns::project_to(v, basis));
  return out;
}

struct RunTimer {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
        .count();
  }
};

fs::path prepare_output_dir(const CommonOpts& c) {
  fs::path dir(c.output_dir);
  fs::create_directories(dir);
  return dir;
}

// ---------------------------------------------------------------------------
// simulate: integrate the SDE; first replica's path goes to trajectory.csv,
// replica ensembles additionally summarize per-node energy in ensemble.json.
struct SimulateOpts {
  CommonOpts common;
  PhysOpts phys;
  std::size_t replicas = 1;
  bool gaussian_initial = false;
  std::string initial_path, forcing_path;
};

int run_simulate(const SimulateOpts& o) {
  if (int rc = report_diagnostics(validate_config(o.phys, true))) return rc;
  RunTimer timer;
  auto dir = prepare_output_dir(o.common);
  auto params = noise_params(o.phys);
  auto cfg = integrator_config(o.phys);
  auto basis = llns::Basis::ball(o.phys.m);
  auto table = llns::shared_table(basis);
  llns::SpectralField u0 = load_field(o.initial_path, basis);
  llns::Forcing forcing;
  bool forced = !o.forcing_path.empty();
  if (forced) forcing = load_forcing(o.forcing_path, basis);
  const std::size_t N = cfg.steps();

  struct Acc {
    std::vector<llns::MomentAccumulator> energy;
    llns::Trajectory first;
    bool has_first = false;
  };
  Acc init;
  init.energy.resize(N + 1);
  Acc acc = llns::run_blocked(
      o.replicas, llns::default_block_size, init,
      [&](std::size_t r, Acc& a) {
        auto rng = llns::make_rng(o.common.seed, r);
        llns::SpectralField start =
            o.gaussian_initial ? llns::sample_gaussian_initial(u0, params, rng) : u0;
        llns::Trajectory traj = llns::simulate(start, params, cfg,
                                               forced ? &forcing : nullptr, rng, table);
        for (std::size_t i = 0; i <= N; ++i)
          a.energy[i].add(llns::energy(traj.states[i]));
        if (r == 0) {
          a.first = std::move(traj);
          a.has_first = true;
        }
      },
      [](Acc& t, const Acc& b) {
        for (std::size_t i = 0; i < t.energy.size(); ++i)
          t.energy[i].merge(b.energy[i]);
        if (!t.has_first && b.has_first) {
          t.first = b.first;
          t.has_first = true;
        }
      });

  llns::ManifestWriter manifest(dir);
  json cfg_echo;
  cfg_echo["subcommand"] = "simulate";
  cfg_echo.update(phys_json(o.phys));
  cfg_echo["seed"] = o.common.seed;
  cfg_echo["replicas"] = o.replicas;
  cfg_echo["gaussian_initial"] = o.gaussian_initial;
  if (!o.initial_path.empty()) cfg_echo["initial"] = o.initial_path;
  if (forced) cfg_echo["forcing"] = o.forcing_path;
  manifest.set_config(cfg_echo);

  manifest.add_all(llns::write_trajectory_csv(dir / "trajectory.csv", acc.first));
  if (o.replicas > 1) {
    json ens;
    ens["replicas"] = o.replicas;
    ens["T"] = cfg.T;
    ens["dt"] = cfg.dt;
    std::vector<double> me, ve;
    for (const auto& s : acc.energy) {
      me.push_back(s.mean);
      ve.push_back(s.variance());
    }
    ens["mean_energy"] = me;
    ens["var_energy"] = ve;
    ens["seed"] = o.common.seed;
    llns::write_json(dir / "ensemble.json", ens);
    manifest.add("ensemble.json");
  }
  manifest.write(timer.seconds());
  return 0;
}

// ---------------------------------------------------------------------------
// skeleton: zero-noise controlled flow for a given forcing.
struct SkeletonOpts {
  CommonOpts common;
  PhysOpts phys;
  std::string initial_path, forcing_path;
};

int run_skeleton(const SkeletonOpts& o) {
  if (int rc = report_diagnostics(validate_config(o.phys, true))) return rc;
  RunTimer timer;
  auto dir = prepare_output_dir(o.common);
  llns::NoiseParams params = noise_params(o.phys);
  params.epsilon = 0.0;
  auto cfg = integrator_config(o.phys);
  auto basis = llns::Basis::ball(o.phys.m);
  llns::SpectralField u0 = load_field(o.initial_path, basis);
  llns::Forcing forcing;
  bool forced = !o.forcing_path.empty();
  if (forced) forcing = load_forcing(o.forcing_path, basis);
  auto rng = llns::make_rng(0, 0);
  llns::Trajectory traj =
      llns::simulate(u0, params, cfg, forced ? &forcing : nullptr, rng);

  llns::ManifestWriter manifest(dir);
  json cfg_echo;
  cfg_echo["subcommand"] = "skeleton";
  cfg_echo.update(phys_json(o.phys, false));
  if (!o.initial_path.empty()) cfg_echo["initial"] = o.initial_path;
  if (forced) cfg_echo["forcing"] = o.forcing_path;
  manifest.set_config(cfg_echo);
  manifest.add_all(llns::write_trajectory_csv(dir / "trajectory.csv", traj));
  manifest.write(timer.seconds());
  return 0;
}

// ---------------------------------------------------------------------------
// rate: action breakdown of a stored trajectory.
struct RateOpts {
  CommonOpts common;
  std::string trajectory_path, initial_path;
  double const_tol = llns::constant_residual_tolerance;
};

int run_rate(const RateOpts& o) {
  RunTimer timer;
  auto dir = prepare_output_dir(o.common);
  llns::Trajectory traj = llns::read_trajectory_csv(o.trajectory_path);
  auto table = llns::shared_table(traj.basis());
  llns::SpectralField u0 = o.initial_path.empty()
                               ? traj.states.front()
                               : load_field(o.initial_path, traj.basis());
  llns::RateBreakdown rb = llns::total_rate(traj, u0, *table, o.const_tol);

  llns::ManifestWriter manifest(dir);
  json cfg_echo;
  cfg_echo["subcommand"] = "rate";
  cfg_echo["trajectory"] = o.trajectory_path;
  if (!o.initial_path.empty()) cfg_echo["initial"] = o.initial_path;
  cfg_echo["constant_residual_tolerance"] = o.const_tol;
  manifest.set_config(cfg_echo);
  llns::write_json(dir / "rate.json", llns::rate_breakdown_json(rb));
  manifest.add("rate.json");
  manifest.write(timer.seconds());
  return 0;
}

// ---------------------------------------------------------------------------
// tilt: Girsanov-tilted ensemble vs the skeleton target.
struct TiltOpts {
  CommonOpts common;
  PhysOpts phys;
  std::size_t replicas = 500;
  std::string forcing_path, initial_path, target_path;
  bool fixed_initial = false;
};

int run_tilt(const TiltOpts& o) {
  auto diags = validate_config(o.phys, true);
  if (o.forcing_path.empty()) diags.push_back("tilt requires --forcing");
  if (o.phys.epsilon <= 0.0) diags.push_back("tilt requires epsilon > 0");
  if (int rc = report_diagnostics(diags)) return rc;
  RunTimer timer;
  auto dir = prepare_output_dir(o.common);
  auto params = noise_params(o.phys);
  auto cfg = integrator_config(o.phys);
  auto basis = llns::Basis::ball(o.phys.m);
  llns::Forcing f = load_forcing(o.forcing_path, basis);
  llns::SpectralField u0 = load_field(o.initial_path, basis);
  llns::SpectralField v0 =
      o.target_path.empty() ? u0 : load_field(o.target_path, basis);
  llns::TiltOptions topt;
  topt.replicas = o.replicas;
  topt.seed = o.common.seed;
  topt.random_initial = !o.fixed_initial;
  llns::TiltReport rep = llns::tilted_simulate(f, v0, u0, params, cfg, topt);

  llns::ManifestWriter manifest(dir);
  json cfg_echo;
  cfg_echo["subcommand"] = "tilt";
  cfg_echo.update(phys_json(o.phys));
  cfg_echo["seed"] = o.common.seed;
  cfg_echo["replicas"] = o.replicas;
  cfg_echo["forcing"] = o.forcing_path;
  if (!o.initial_path.empty()) cfg_echo["initial"] = o.initial_path;
  if (!o.target_path.empty()) cfg_echo["target"] = o.target_path;
  cfg_echo["fixed_initial"] = o.fixed_initial;
  manifest.set_config(cfg_echo);

  json j;
  j["epsilon"] = rep.epsilon;
  j["replicas"] = rep.replicas;
  j["seed"] = o.common.seed;
  j["control_cost"] = rep.control_cost;
  j["entropy_estimate"] = rep.entropy_estimate;
  j["empirical_entropy"] = rep.empirical_entropy;
  j["empirical_entropy_se"] = rep.empirical_entropy_se;
  j["terminal_distance"] = rep.terminal_distance;
  llns::write_json(dir / "tilt.json", j);
  manifest.add("tilt.json");
  manifest.write(timer.seconds());
  return 0;
}

// ---------------------------------------------------------------------------
// stationarity: invariance of the product Gaussian under the dynamics.
struct StationarityOpts {
  CommonOpts common;
  PhysOpts phys;
  std::size_t replicas = 10000;
  double z_threshold = 4.0;
};

int run_stationarity(const StationarityOpts& o) {
  auto diags = validate_config(o.phys, true);
  if (o.phys.delta != 0.0)
    diags.push_back("stationarity requires delta = 0 (the invariant law is exact "
                    "only for the unregularized noise)");
  if (int rc = report_diagnostics(diags)) return rc;
  RunTimer timer;
  auto dir = prepare_output_dir(o.common);
  llns::StationarityReport rep = llns::stationarity_test(
      noise_params(o.phys), integrator_config(o.phys), o.replicas, o.common.seed);

  llns::ManifestWriter manifest(dir);
  json cfg_echo;
  cfg_echo["subcommand"] = "stationarity";
  cfg_echo.update(phys_json(o.phys));
  cfg_echo["seed"] = o.common.seed;
  cfg_echo["replicas"] = o.replicas;
  cfg_echo["z_threshold"] = o.z_threshold;
  manifest.set_config(cfg_echo);

  json j;
  j["replicas"] = rep.replicas;
  j["seed"] = o.common.seed;
  j["epsilon"] = rep.epsilon;
  j["T"] = rep.T;
  j["dt"] = rep.dt;
  j["target_variance"] = 0.5 * rep.epsilon;
  j["z_threshold"] = o.z_threshold;
  json modes = json::array();
  for (const auto& s : rep.modes) {
    json e;
    e["mode"] = s.mode;
    e["mean"] = s.mean;
    e["se_mean"] = s.se_mean;
    e["z_mean"] = s.z_mean;
    e["var"] = s.var;
    e["se_var"] = s.se_var;
    e["z_var"] = s.z_var;
    modes.push_back(std::move(e));
  }
  j["modes"] = modes;
  json cross = json::array();
  for (const auto& c : rep.cross) {
    json e;
    e["mode_a"] = c.mode_a;
    e["mode_b"] = c.mode_b;
    e["mean"] = c.mean;
    e["se"] = c.se;
    e["z"] = c.z;
    cross.push_back(std::move(e));
  }
  j["cross"] = cross;
  j["energy_diff"] = {{"mean", rep.energy_diff_mean},
                      {"se", rep.energy_diff_se},
                      {"z", rep.energy_diff_z}};
  j["max_abs_z_mean"] = rep.max_abs_z_mean;
  j["max_abs_z_var"] = rep.max_abs_z_var;
  j["max_abs_z_cross"] = rep.max_abs_z_cross;
  bool pass = rep.max_abs_z_mean <= o.z_threshold &&
              rep.max_abs_z_var <= o.z_threshold &&
              rep.max_abs_z_cross <= o.z_threshold;
  j["pass"] = pass;
  llns::write_json(dir / "stationarity.json", j);
  manifest.add("stationarity.json");
  manifest.write(timer.seconds());
  return 0;
}

// ---------------------------------------------------------------------------
// reversal: invariance in law under u(t) -> -u(T-t) at stationarity, with a
// non-negated control run expected to fail on third moments.
struct ReversalOpts {
  CommonOpts common;
  PhysOpts phys;
  std::size_t replicas = 10000;
  std::size_t triads = 8;
  bool control = false;
  double z_threshold = 4.0;
};

int run_reversal(const ReversalOpts& o) {
  auto diags = validate_config(o.phys, true);
  if (o.phys.delta != 0.0) diags.push_back("reversal requires delta = 0");
  if (int rc = report_diagnostics(diags)) return rc;
  RunTimer timer;
  auto dir = prepare_output_dir(o.common);
  llns::ReversalOptions ropt;
  ropt.replicas = o.replicas;
  ropt.seed = o.common.seed;
  ropt.negate = !o.control;
  ropt.triad_count = o.triads;
  llns::ReversalReport rep =
      llns::time_reversal_test(noise_params(o.phys), integrator_config(o.phys), ropt);

  llns::ManifestWriter manifest(dir);
  json cfg_echo;
  cfg_echo["subcommand"] = "reversal";
  cfg_echo.update(phys_json(o.phys));
  cfg_echo["seed"] = o.common.seed;
  cfg_echo["replicas"] = o.replicas;
  cfg_echo["triads"] = o.triads;
  cfg_echo["control"] = o.control;
  cfg_echo["z_threshold"] = o.z_threshold;
  manifest.set_config(cfg_echo);

  auto stat_array = [](const std::vector<llns::ReversalStatistic>& v) {
    json arr = json::array();
    for (const auto& s : v) {
      json e;
      e["label"] = s.label;
      e["diff_mean"] = s.diff_mean;
      e["se"] = s.se;
      e["z"] = s.z;
      arr.push_back(std::move(e));
    }
    return arr;
  };
  json j;
  j["replicas"] = rep.replicas;
  j["seed"] = o.common.seed;
  j["negated"] = rep.negate;
  j["z_threshold"] = o.z_threshold;
  j["second_moments"] = stat_array(rep.second_moments);
  j["third_moments"] = stat_array(rep.third_moments);
  j["max_abs_z_second"] = rep.max_abs_z_second;
  j["max_abs_z_third"] = rep.max_abs_z_third;
  // With the negated map all statistics should be null; the control run is
  // expected to light up at least one third moment.
  bool pass = rep.negate ? (rep.max_abs_z_second <= o.z_threshold &&
                            rep.max_abs_z_third <= o.z_threshold)
                         : rep.max_abs_z_third > o.z_threshold;
  j["pass"] = pass;
  llns::write_json(dir / "reversal.json", j);
  manifest.add("reversal.json");
  manifest.write(timer.seconds());
  return 0;
}

// ---------------------------------------------------------------------------
// blowup: superpose the oscillatory pulse on a base trajectory (or a zero
// base on the anisotropic experiment basis) and report peak norm and cost.
struct BlowupOpts {
  CommonOpts common;
  PhysOpts phys;
  int n = 16;
  double tau_prime = 0.25;
  std::string base_path, base_forcing_path;
};

int run_blowup(const BlowupOpts& o) {
  auto diags = validate_config(o.phys, true);
  if (o.n <= o.phys.m)
    diags.push_back("blowup requires n > m (pulse frequency above the base ball)");
  if (o.base_path.empty() && !(o.tau_prime >= 0.0 && o.tau_prime < o.phys.T))
    diags.push_back("tau-prime must lie in [0, T)");
  if (int rc = report_diagnostics(diags)) return rc;
  RunTimer timer;
  auto dir = prepare_output_dir(o.common);

  llns::Trajectory base;
  llns::Forcing base_forcing;
  if (o.base_path.empty()) {
    auto basis = llns::blowup_basis(o.phys.m, o.n);
    base.t0 = 0.0;
    base.dt = o.phys.dt;
    base.cfg = integrator_config(o.phys);
    std::size_t N = base.cfg.steps();
    base.states.assign(N + 1, llns::SpectralField(basis));
  } else {
    base = llns::read_trajectory_csv(o.base_path);
    if (!o.base_forcing_path.empty())
      base_forcing = llns::read_forcing_csv(o.base_forcing_path);
  }
  llns::BlowupResult res = llns::blowup_family(o.n, o.tau_prime, base, base_forcing);

  llns::ManifestWriter manifest(dir);
  json cfg_echo;
  cfg_echo["subcommand"] = "blowup";
  cfg_echo["n"] = o.n;
  cfg_echo["tau_prime"] = o.tau_prime;
  if (o.base_path.empty())
    cfg_echo.update(phys_json(o.phys, false));
  else {
    cfg_echo["base"] = o.base_path;
    if (!o.base_forcing_path.empty()) cfg_echo["base_forcing"] = o.base_forcing_path;
  }
  manifest.set_config(cfg_echo);

  manifest.add_all(llns::write_trajectory_csv(dir / "trajectory.csv", res.traj));
  manifest.add_all(llns::write_forcing_csv(dir / "forcing.csv", res.forcing));
  json j;
  j["n"] = res.report.n;
  j["tau_prime"] = o.tau_prime;
  j["peak_time"] = res.report.peak_time;
  j["h1_peak"] = res.report.h1_peak;
  j["h1_peak_over_sqrt_n"] = res.report.h1_peak / std::sqrt(double(res.report.n));
  j["extra_cost"] = res.report.extra_cost;
  j["extra_cost_times_n"] = res.report.extra_cost * double(res.report.n);
  llns::write_json(dir / "blowup.json", j);
  manifest.add("blowup.json");
  manifest.write(timer.seconds());
  return 0;
}

// ---------------------------------------------------------------------------
// traces: noise trace tables over m and delta, plus the radial lattice proxy
// for the unbounded-mode limit.
struct TracesOpts {
  CommonOpts common;
  int m_max = 8;
  double beta = 1.5;
  std::string delta_grid = "1e-3:1e-1";
  int grid_points = 0;  // 0 = one point per decade boundary
};

std::vector<double> parse_log_grid(const std::string& spec, int points) {
  std::size_t colon = spec.find(':');
  if (colon == std::string::npos)
    return {llns::parse_double(spec)};
  double lo = llns::parse_double(spec.substr(0, colon));
  std::string rest = spec.substr(colon + 1);
  std::size_t colon2 = rest.find(':');
  double hi;
  if (colon2 != std::string::npos) {
    hi = llns::parse_double(rest.substr(0, colon2));
    points = int(llns::parse_int(rest.substr(colon2 + 1)));
  } else {
    hi = llns::parse_double(rest);
  }
  if (!(lo > 0.0 && hi > lo)) throw std::invalid_argument("bad grid '" + spec + "'");
  if (points <= 0)
    points = int(std::lround(std::log10(hi / lo))) + 1;
  if (points < 2) points = 2;
  std::vector<double> out;
  for (int i = 0; i < points; ++i)
    out.push_back(lo * std::pow(hi / lo, double(i) / double(points - 1)));
  return out;
}

int run_traces(const TracesOpts& o) {
  std::vector<std::string> diags;
  if (o.beta <= 1.25)
    diags.push_back("beta must exceed 5/4 for a finite regularized trace");
  if (o.m_max < 1) diags.push_back("m-max must be >= 1");
  if (int rc = report_diagnostics(diags)) return rc;
  RunTimer timer;
  auto dir = prepare_output_dir(o.common);
  std::vector<double> grid = parse_log_grid(o.delta_grid, o.grid_points);

  auto out = std::ofstream(dir / "traces.csv");
  out << "kind,m,delta,beta,trace\n";
  for (int m = 1; m <= o.m_max; ++m) {
    std::vector<double> deltas{0.0};
    deltas.insert(deltas.end(), grid.begin(), grid.end());
    for (double d : deltas) {
      llns::NoiseParams p{1.0, d, o.beta, m};
      out << "ball," << m << ',' << llns::fmt_double(d) << ','
          << llns::fmt_double(o.beta) << ',' << llns::fmt_double(llns::trace_AQ(p))
          << '\n';
    }
  }
  for (double d : grid)
    out << "unbounded,0," << llns::fmt_double(d) << ',' << llns::fmt_double(o.beta)
        << ',' << llns::fmt_double(llns::trace_AQ_unbounded(d, o.beta)) << '\n';
  out.close();

  llns::ManifestWriter manifest(dir);
  json cfg_echo;
  cfg_echo["subcommand"] = "traces";
  cfg_echo["m_max"] = o.m_max;
  cfg_echo["beta"] = o.beta;
  cfg_echo["delta_grid"] = o.delta_grid;
  manifest.set_config(cfg_echo);
  manifest.add("traces.csv");
  manifest.write(timer.seconds());
  return 0;
}

// ---------------------------------------------------------------------------
// gaussmoment: closed-form vs Monte Carlo exponential moment of the initial
// Gaussian, with the explicit upper bound.
struct GaussMomentOpts {
  CommonOpts common;
  PhysOpts phys;
  double eta = 0.25;
  std::size_t draws = 100000;
  std::string initial_path;
};

int run_gaussmoment(const GaussMomentOpts& o) {
  auto diags = validate_config(o.phys, true, o.eta);
  if (o.phys.epsilon <= 0.0) diags.push_back("gaussmoment requires epsilon > 0");
  if (int rc = report_diagnostics(diags)) return rc;
  RunTimer timer;
  auto dir = prepare_output_dir(o.common);
  auto params = noise_params(o.phys);
  auto basis = llns::Basis::ball(o.phys.m);
  llns::SpectralField u0 = load_field(o.initial_path, basis);
  llns::GaussMomentReport rep =
      llns::gaussian_exp_moment(o.eta, u0, params, o.draws, o.common.seed);

  llns::ManifestWriter manifest(dir);
  json cfg_echo;
  cfg_echo["subcommand"] = "gaussmoment";
  cfg_echo["m"] = o.phys.m;
  cfg_echo["epsilon"] = o.phys.epsilon;
  cfg_echo["delta"] = o.phys.delta;
  cfg_echo["beta"] = o.phys.beta;
  cfg_echo["eta"] = o.eta;
  cfg_echo["draws"] = o.draws;
  cfg_echo["seed"] = o.common.seed;
  if (!o.initial_path.empty()) cfg_echo["initial"] = o.initial_path;
  manifest.set_config(cfg_echo);

  json j;
  j["eta"] = rep.eta;
  j["draws"] = rep.draws;
  j["seed"] = o.common.seed;
  j["closed_form"] = rep.closed_form;
  j["mc_estimate"] = rep.mc_estimate;
  j["mc_se"] = rep.mc_se;
  j["analytic_bound"] = rep.analytic_bound;
  double z = rep.mc_se > 0.0 ? (rep.mc_estimate - rep.closed_form) / rep.mc_se : 0.0;
  j["z"] = z;
  j["bound_holds"] = rep.closed_form <= rep.analytic_bound + 1e-12;
  j["pass"] = std::abs(z) <= 3.0 && rep.closed_form <= rep.analytic_bound + 1e-12;
  llns::write_json(dir / "gaussmoment.json", j);
  manifest.add("gaussmoment.json");
  manifest.write(timer.seconds());
  return 0;
}

// ---------------------------------------------------------------------------
// rareevent: eps log p along a scaling schedule, plain or tilted.
struct RareEventOpts {
  CommonOpts common;
  PhysOpts phys;
  std::string schedule_path;
  std::string event = "terminal_energy";
  double threshold = 1.0;
  std::size_t replicas = 1000;
  std::string initial_path, tilt_path;
};

int run_rareevent(const RareEventOpts& o) {
  auto diags = validate_config(o.phys, false);
  if (o.schedule_path.empty()) diags.push_back("rareevent requires --schedule");
  if (o.event != "terminal_energy" && o.event != "max_energy")
    diags.push_back("event must be terminal_energy or max_energy");
  if (int rc = report_diagnostics(diags)) return rc;
  RunTimer timer;
  auto dir = prepare_output_dir(o.common);
  llns::ScalingSchedule schedule = llns::read_schedule_csv(o.schedule_path);
  auto cfg = integrator_config(o.phys);

  int m_top = 0;
  for (const auto& e : schedule.entries) m_top = std::max(m_top, e.m);
  auto top_basis = llns::Basis::ball(m_top);
  llns::SpectralField u0 = load_field(o.initial_path, top_basis);
  llns::Forcing tilt;
  bool tilted = !o.tilt_path.empty();
  if (tilted) tilt = load_forcing(o.tilt_path, top_basis);

  double threshold = o.threshold;
  std::function<bool(const llns::Trajectory&)> event;
  if (o.event == "terminal_energy") {
    event = [threshold](const llns::Trajectory& t) {
      return llns::energy(t.states.back()) >= threshold;
    };
  } else {
    event = [threshold](const llns::Trajectory& t) {
      for (const auto& s : t.states)
        if (llns::energy(s) >= threshold) return true;
      return false;
    };
  }

  auto points = llns::rare_event_estimate(event, schedule, o.phys.beta, u0, cfg,
                                          o.replicas, o.common.seed,
                                          tilted ? &tilt : nullptr);

  llns::ManifestWriter manifest(dir);
  json cfg_echo;
  cfg_echo["subcommand"] = "rareevent";
  cfg_echo["schedule"] = o.schedule_path;
  cfg_echo["beta"] = o.phys.beta;
  cfg_echo["T"] = o.phys.T;
  cfg_echo["dt"] = o.phys.dt;
  cfg_echo["scheme"] = o.phys.scheme;
  cfg_echo["event"] = o.event;
  cfg_echo["threshold"] = o.threshold;
  cfg_echo["replicas"] = o.replicas;
  cfg_echo["seed"] = o.common.seed;
  if (!o.initial_path.empty()) cfg_echo["initial"] = o.initial_path;
  if (tilted) cfg_echo["tilt"] = o.tilt_path;
  manifest.set_config(cfg_echo);

  json j;
  j["event"] = o.event;
  j["threshold"] = o.threshold;
  j["replicas"] = o.replicas;
  j["seed"] = o.common.seed;
  j["tilted"] = tilted;
  json arr = json::array();
  for (const auto& pt : points) {
    json e;
    e["epsilon"] = pt.epsilon;
    e["delta"] = pt.delta;
    e["m"] = pt.m;
    e["p_hat"] = pt.p_hat;
    e["eps_log_p"] = pt.eps_log_p;
    e["se"] = pt.se;
    e["hits"] = pt.hits;
    e["upper_bound_only"] = pt.upper_bound_only;
    arr.push_back(std::move(e));
  }
  j["points"] = arr;
  llns::write_json(dir / "rareevent.json", j);
  manifest.add("rareevent.json");
  manifest.write(timer.seconds());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spectral Galerkin SDE laboratory"};
  app.set_version_flag("--version", llns::version_string);
  app.set_config("--config", "", "key=value configuration file; flags override");
  app.require_subcommand(1);

  SimulateOpts sim;
  auto* sub_sim = app.add_subcommand("simulate", "integrate the stochastic dynamics")->configurable();
  add_common(sub_sim, sim.common);
  add_phys(sub_sim, sim.phys);
  sub_sim->add_option("--replicas", sim.replicas, "independent sample paths")
      ->capture_default_str();
  sub_sim->add_flag("--gaussian-initial", sim.gaussian_initial,
                    "draw the start from the mode-wise Gaussian around --initial");
  sub_sim->add_option("--initial", sim.initial_path, "initial field CSV");
  sub_sim->add_option("--forcing", sim.forcing_path, "forcing CSV");

  SkeletonOpts ske;
  auto* sub_ske = app.add_subcommand("skeleton", "integrate the zero-noise flow")->configurable();
  add_common(sub_ske, ske.common, false);
  add_phys(sub_ske, ske.phys, false);
  sub_ske->add_option("--initial", ske.initial_path, "initial field CSV");
  sub_ske->add_option("--forcing", ske.forcing_path, "forcing CSV");

  RateOpts rate;
  auto* sub_rate = app.add_subcommand("rate", "action breakdown of a trajectory")->configurable();
  add_common(sub_rate, rate.common, false);
  sub_rate->add_option("--trajectory", rate.trajectory_path, "trajectory CSV")
      ->required();
  sub_rate->add_option("--initial", rate.initial_path,
                       "reference initial field CSV (default: first state)");
  sub_rate->add_option("--const-tol", rate.const_tol,
                       "constant-mode residual tolerance")
      ->capture_default_str();

  TiltOpts tilt;
  auto* sub_tilt = app.add_subcommand("tilt", "Girsanov-tilted ensemble")->configurable();
  add_common(sub_tilt, tilt.common);
  add_phys(sub_tilt, tilt.phys);
  sub_tilt->add_option("--replicas", tilt.replicas, "ensemble size")
      ->capture_default_str();
  sub_tilt->add_option("--forcing", tilt.forcing_path, "control forcing CSV")
      ->required();
  sub_tilt->add_option("--initial", tilt.initial_path, "nominal initial field CSV");
  sub_tilt->add_option("--target", tilt.target_path,
                       "tilted initial mean field CSV (default: --initial)");
  sub_tilt->add_flag("--fixed-initial", tilt.fixed_initial,
                     "start every replica exactly at the target mean");

  StationarityOpts stat;
  auto* sub_stat = app.add_subcommand("stationarity", "invariant-law check")->configurable();
  add_common(sub_stat, stat.common);
  add_phys(sub_stat, stat.phys);
  sub_stat->add_option("--replicas", stat.replicas, "ensemble size")
      ->capture_default_str();
  sub_stat->add_option("--z-threshold", stat.z_threshold, "pass threshold on |z|")
      ->capture_default_str();

  ReversalOpts rev;
  auto* sub_rev = app.add_subcommand("reversal", "time-reversal invariance check")->configurable();
  add_common(sub_rev, rev.common);
  add_phys(sub_rev, rev.phys);
  sub_rev->add_option("--replicas", rev.replicas, "ensemble size")
      ->capture_default_str();
  sub_rev->add_option("--triads", rev.triads, "number of strong triads tested")
      ->capture_default_str();
  sub_rev->add_flag("--control", rev.control,
                    "skip the sign flip (negative control, expected to fail)");
  sub_rev->add_option("--z-threshold", rev.z_threshold, "pass threshold on |z|")
      ->capture_default_str();

  BlowupOpts blow;
  auto* sub_blow = app.add_subcommand("blowup", "oscillatory pulse family")->configurable();
  add_common(sub_blow, blow.common, false);
  add_phys(sub_blow, blow.phys, false);
  sub_blow->add_option("--n", blow.n, "pulse frequency")->capture_default_str();
  sub_blow->add_option("--tau-prime", blow.tau_prime, "pulse onset time")
      ->capture_default_str();
  sub_blow->add_option("--base", blow.base_path, "base trajectory CSV");
  sub_blow->add_option("--base-forcing", blow.base_forcing_path,
                       "forcing of the base trajectory");

  TracesOpts traces;
  auto* sub_traces = app.add_subcommand("traces", "noise trace tables")->configurable();
  add_common(sub_traces, traces.common, false);
  sub_traces->add_option("--m-max", traces.m_max, "largest mode ball")
      ->capture_default_str();
  sub_traces->add_option("--beta", traces.beta, "regularization exponent")
      ->capture_default_str();
  sub_traces->add_option("--delta-grid", traces.delta_grid,
                         "lo:hi[:points] logarithmic delta grid")
      ->capture_default_str();

  GaussMomentOpts gm;
  auto* sub_gm = app.add_subcommand("gaussmoment", "Gaussian exponential moment")->configurable();
  add_common(sub_gm, gm.common);
  add_phys(sub_gm, gm.phys);
  sub_gm->add_option("--eta", gm.eta, "moment parameter, must be < 1")
      ->capture_default_str();
  sub_gm->add_option("--draws", gm.draws, "Monte Carlo draws")->capture_default_str();
  sub_gm->add_option("--initial", gm.initial_path, "mean field CSV");

  RareEventOpts rare;
  auto* sub_rare = app.add_subcommand("rareevent", "eps log p along a schedule")->configurable();
  add_common(sub_rare, rare.common);
  add_phys(sub_rare, rare.phys);
  sub_rare->add_option("--schedule", rare.schedule_path,
                       "scaling schedule CSV (epsilon,delta,m)")
      ->required();
  sub_rare->add_option("--event", rare.event, "terminal_energy or max_energy")
      ->capture_default_str();
  sub_rare->add_option("--threshold", rare.threshold, "event energy level")
      ->capture_default_str();
  sub_rare->add_option("--replicas", rare.replicas, "samples per schedule entry")
      ->capture_default_str();
  sub_rare->add_option("--initial", rare.initial_path, "initial field CSV");
  sub_rare->add_option("--tilt", rare.tilt_path, "importance-sampling forcing CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (sub_sim->parsed()) return run_simulate(sim);
    if (sub_ske->parsed()) return run_skeleton(ske);
    if (sub_rate->parsed()) return run_rate(rate);
    if (sub_tilt->parsed()) return run_tilt(tilt);
    if (sub_stat->parsed()) return run_stationarity(stat);
    if (sub_rev->parsed()) return run_reversal(rev);
    if (sub_blow->parsed()) return run_blowup(blow);
    if (sub_traces->parsed()) return run_traces(traces);
    if (sub_gm->parsed()) return run_gaussmoment(gm);
    if (sub_rare->parsed()) return run_rareevent(rare);
  } catch (const llns::IntegrationError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 3;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  std::cerr << "no subcommand\n";
  return 2;
}
