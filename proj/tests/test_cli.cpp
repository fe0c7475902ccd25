// End-to-end checks of the llns binary: exit codes, diagnostics on stderr,
// reproducible outputs, and agreement between emitted files and direct
// library evaluation. The binary path comes in through LLNS_CLI_BIN.

#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "llns/io.hpp"
#include "llns/modes.hpp"
#include "llns/noise.hpp"
#include "llns/rate.hpp"
#include "llns/rng.hpp"
#include "llns/trilinear.hpp"
#include "llns/version.hpp"

namespace fs = std::filesystem;
using namespace llns;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct CliResult {
  int exit_code = -1;
  std::string out, err;
};

CliResult run_cli(const std::string& args, const fs::path& scratch) {
  fs::path out_file = scratch / "cli_stdout.txt";
  fs::path err_file = scratch / "cli_stderr.txt";
  std::string cmd = std::string("\"") + LLNS_CLI_BIN + "\" " + args + " > \"" +
                    out_file.string() + "\" 2> \"" + err_file.string() + "\"";
  int status = std::system(cmd.c_str());
  CliResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out_file);
  r.err = slurp(err_file);
  return r;
}

bool contains(const std::string& hay, const std::string& needle) {
  return hay.find(needle) != std::string::npos;
}

}  // namespace

TEST_CASE("cli: version and help run clean, bare invocation does not") {
  TempDir tmp("llns-cli-basic");
  auto ver = run_cli("--version", tmp.path);
  CHECK(ver.exit_code == 0);
  CHECK(contains(ver.out, version_string));

  auto help = run_cli("--help", tmp.path);
  CHECK(help.exit_code == 0);
  CHECK(contains(help.out, "simulate"));
  CHECK(contains(help.out, "rareevent"));

  auto bare = run_cli("", tmp.path);
  CHECK(bare.exit_code == 2);
}

TEST_CASE("cli: configuration errors exit with code 2 and name the offender") {
  TempDir tmp("llns-cli-diag");

  auto bad_dt = run_cli("simulate --dt 0.5 --T 0.2", tmp.path);
  CHECK(bad_dt.exit_code == 2);
  CHECK(contains(bad_dt.err, "config error:"));
  CHECK(contains(bad_dt.err, "dt = 0.5 exceeds T = 0.2"));

  auto bad_beta = run_cli("traces --beta 1.0 --output-dir \"" +
                              (tmp.path / "t").string() + "\"",
                          tmp.path);
  CHECK(bad_beta.exit_code == 2);
  CHECK(contains(bad_beta.err, "beta must exceed 5/4"));

  auto bad_eta = run_cli("gaussmoment --eta 1.5", tmp.path);
  CHECK(bad_eta.exit_code == 2);
  CHECK(contains(bad_eta.err, "eta = 1.5"));

  auto bad_m = run_cli("simulate --m 0", tmp.path);
  CHECK(bad_m.exit_code == 2);
  CHECK(contains(bad_m.err, "config error:"));

  auto unknown = run_cli("simulate --frobnicate", tmp.path);
  CHECK(unknown.exit_code == 2);
}

TEST_CASE("cli: identical configurations reproduce byte-identical outputs") {
  TempDir tmp("llns-cli-repro");
  std::string common =
      " --m 1 --epsilon 0.3 --T 0.05 --dt 0.01 --replicas 3 --gaussian-initial";
  fs::path a = tmp.path / "a", b = tmp.path / "b", c = tmp.path / "c";

  auto ra = run_cli("simulate --output-dir \"" + a.string() + "\" --seed 7" + common,
                    tmp.path);
  REQUIRE(ra.exit_code == 0);
  auto rb = run_cli("simulate --output-dir \"" + b.string() + "\" --seed 7" + common,
                    tmp.path);
  REQUIRE(rb.exit_code == 0);
  auto rc = run_cli("simulate --output-dir \"" + c.string() + "\" --seed 8" + common,
                    tmp.path);
  REQUIRE(rc.exit_code == 0);

  std::string traj_a = slurp(a / "trajectory.csv");
  CHECK(traj_a == slurp(b / "trajectory.csv"));
  CHECK(traj_a != slurp(c / "trajectory.csv"));
  CHECK(traj_a.rfind("# llns trajectory\n", 0) == 0);
  CHECK(slurp(a / "ensemble.json") == slurp(b / "ensemble.json"));

  json ens = json::parse(slurp(a / "ensemble.json"));
  CHECK(ens.at("replicas").get<std::size_t>() == 3);
  CHECK(ens.at("mean_energy").size() == 6);

  json ma = json::parse(slurp(a / "manifest.json"));
  json mb = json::parse(slurp(b / "manifest.json"));
  CHECK(ma.at("version").get<std::string>() == version_string);
  ma.erase("wall_time_s");
  mb.erase("wall_time_s");
  CHECK(ma == mb);

  bool saw_traj = false;
  for (const auto& f : ma.at("files")) {
    if (f.at("name").get<std::string>() == "trajectory.csv") {
      saw_traj = true;
      CHECK(f.at("fnv1a64").get<std::string>() == hex64(hash_file(a / "trajectory.csv")));
    }
  }
  CHECK(saw_traj);
}

TEST_CASE("cli: rate subcommand reproduces the library breakdown") {
  TempDir tmp("llns-cli-rate");
  auto basis = Basis::ball(1);
  auto rng = make_rng(101, 0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  SpectralField u0(basis);
  SpectralField g(basis);
  for (std::size_t i = 0; i < basis->size(); ++i) {
    if (basis->modes()[i].kind != ModeKind::wave) continue;
    u0.c[i] = 0.4 * gauss(rng);
    g.c[i] = gauss(rng);
  }
  write_field_csv(tmp.path / "init.csv", u0);

  Forcing f;
  f.t0 = 0.0;
  f.dt = 0.01;
  for (int i = 0; i < 7; ++i) f.values.push_back(g);
  write_forcing_csv(tmp.path / "force.csv", f);

  fs::path sdir = tmp.path / "skel", rdir = tmp.path / "rate";
  auto rs = run_cli("skeleton --output-dir \"" + sdir.string() +
                        "\" --m 1 --T 0.06 --dt 0.01 --initial \"" +
                        (tmp.path / "init.csv").string() + "\" --forcing \"" +
                        (tmp.path / "force.csv").string() + "\"",
                    tmp.path);
  REQUIRE(rs.exit_code == 0);
  auto rr = run_cli("rate --output-dir \"" + rdir.string() + "\" --trajectory \"" +
                        (sdir / "trajectory.csv").string() + "\"",
                    tmp.path);
  REQUIRE(rr.exit_code == 0);

  Trajectory traj = read_trajectory_csv(sdir / "trajectory.csv");
  auto table = shared_table(traj.basis());
  RateBreakdown rb = total_rate(traj, traj.states.front(), *table);

  json j = json::parse(slurp(rdir / "rate.json"));
  CHECK(j.at("initial").get<double>() == rb.initial);
  CHECK(j.at("dynamic").get<double>() == rb.dynamic);
  CHECK(j.at("total").get<double>() == rb.total);
  CHECK(j.at("profile").size() == rb.residual_profile.size());
  CHECK(rb.residual_profile.size() == traj.states.size());
  CHECK(rb.initial == 0.0);
  CHECK(rb.total > 0.0);
}

TEST_CASE("cli: trace tables match direct evaluation") {
  TempDir tmp("llns-cli-traces");
  fs::path dir = tmp.path / "out";
  auto r = run_cli("traces --output-dir \"" + dir.string() +
                       "\" --m-max 3 --beta 1.5 --delta-grid 1e-3:1e-1:3",
                   tmp.path);
  REQUIRE(r.exit_code == 0);

  std::ifstream in(dir / "traces.csv");
  std::string line;
  REQUIRE(std::getline(in, line));
  CHECK(line == "kind,m,delta,beta,trace");
  int ball_rows = 0, unbounded_rows = 0;
  while (std::getline(in, line)) {
    auto cells = llns::detail::split_csv(line);
    REQUIRE(cells.size() == 5);
    double delta = parse_double(cells[2]);
    double beta = parse_double(cells[3]);
    double trace = parse_double(cells[4]);
    if (cells[0] == "ball") {
      ++ball_rows;
      NoiseParams p{1.0, delta, beta, int(parse_int(cells[1]))};
      CHECK(trace == trace_AQ(p));
    } else {
      REQUIRE(cells[0] == "unbounded");
      ++unbounded_rows;
      CHECK(parse_int(cells[1]) == 0);
      CHECK(trace == trace_AQ_unbounded(delta, beta));
    }
  }
  CHECK(ball_rows == 3 * 4);
  CHECK(unbounded_rows == 3);
}

TEST_CASE("cli: integration failure exits with code 3 and reports the step") {
  TempDir tmp("llns-cli-blow");
  auto basis = Basis::ball(2);
  SpectralField bad(basis);
  for (std::size_t i = 0; i < basis->size(); ++i)
    if (basis->modes()[i].kind == ModeKind::wave) bad.c[i] = 1e200;
  write_field_csv(tmp.path / "bad.csv", bad);

  auto r = run_cli("simulate --output-dir \"" + (tmp.path / "f").string() +
                       "\" --m 2 --T 0.01 --dt 0.001 --seed 1 --initial \"" +
                       (tmp.path / "bad.csv").string() + "\"",
                   tmp.path);
  CHECK(r.exit_code == 3);
  CHECK(contains(r.err, "numerical failure:"));
  CHECK(contains(r.err, "non-finite coefficient at step"));
}

TEST_CASE("cli: flags override configuration file values") {
  TempDir tmp("llns-cli-config");
  {
    std::ofstream cfg(tmp.path / "run.ini");
    cfg << "[simulate]\n"
        << "m=1\n"
        << "T=0.05\n"
        << "dt=0.01\n"
        << "epsilon=0.2\n"
        << "seed=5\n";
  }
  fs::path dir = tmp.path / "out";
  auto r = run_cli("--config \"" + (tmp.path / "run.ini").string() +
                       "\" simulate --output-dir \"" + dir.string() + "\" --epsilon 0.4",
                   tmp.path);
  REQUIRE(r.exit_code == 0);

  json cfg = json::parse(slurp(dir / "manifest.json")).at("config");
  CHECK(cfg.at("m").get<int>() == 1);
  CHECK(cfg.at("T").get<double>() == 0.05);
  CHECK(cfg.at("epsilon").get<double>() == 0.4);
  CHECK(cfg.at("seed").get<std::uint64_t>() == 5);
}
