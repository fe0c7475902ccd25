#pragma once
// CSV and JSON serialization. All decimals use shortest round-trip formatting
// so files re-parse to the exact same doubles; output is byte-identical for
// identical inputs. Trajectory and forcing files are self-describing through
// "# key=value" comment headers, with a sidecar mode table when the basis is
// not a plain centered ball.

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "json.hpp"

#include "llns/dynamics.hpp"
#include "llns/field.hpp"
#include "llns/forcing.hpp"
#include "llns/modes.hpp"
#include "llns/noise.hpp"
#include "llns/rate.hpp"
#include "llns/version.hpp"

namespace llns {

// ---------------------------------------------------------------------------
// Round-trip number formatting.
inline std::string fmt_double(double x) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s) {
  double x = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), x);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw std::invalid_argument("bad number: '" + std::string(s) + "'");
  return x;
}

inline long long parse_int(std::string_view s) {
  long long x = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), x);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw std::invalid_argument("bad integer: '" + std::string(s) + "'");
  return x;
}

namespace detail {

inline std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

inline std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return in;
}

inline std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Mode rows. Constants use the pol column for their axis and "-" for parity.
inline void write_mode_columns(std::ostream& os, const ModeIndex& m) {
  if (m.kind == ModeKind::constant) {
    os << "constant,0,0,0," << m.axis << ",-";
  } else {
    os << "wave," << m.k[0] << ',' << m.k[1] << ',' << m.k[2] << ',' << m.pol
       << ',' << (m.parity == Parity::cos ? "cos" : "sin");
  }
}

// fields[at .. at+5] = kind,kx,ky,kz,pol,parity
inline ModeIndex parse_mode_columns(const std::vector<std::string_view>& f,
                                    std::size_t at) {
  if (f.size() < at + 6) throw std::invalid_argument("short mode row");
  std::string_view kind = f[at];
  if (kind == "constant") return ModeIndex::constant_mode(int(parse_int(f[at + 4])));
  if (kind != "wave") throw std::invalid_argument("bad mode kind");
  IVec3 k{int(parse_int(f[at + 1])), int(parse_int(f[at + 2])),
          int(parse_int(f[at + 3]))};
  int pol = int(parse_int(f[at + 4]));
  std::string_view par = f[at + 5];
  if (par != "cos" && par != "sin") throw std::invalid_argument("bad parity");
  return ModeIndex::wave(k, pol, par == "cos" ? Parity::cos : Parity::sin);
}

// Radius when the basis is exactly a centered ball enumeration, else -1.
inline int ball_radius(const Basis& basis) {
  int m = basis.max_frequency();
  std::vector<ModeIndex> ref = enumerate_modes(m);
  if (ref.size() != basis.size()) return -1;
  for (std::size_t i = 0; i < ref.size(); ++i)
    if (!(ref[i] == basis.mode(i))) return -1;
  return m;
}

inline void write_modes_csv(const std::filesystem::path& path, const Basis& basis) {
  auto out = detail::open_out(path);
  out << "mode_id,kind,kx,ky,kz,pol,parity\n";
  for (std::size_t i = 0; i < basis.size(); ++i) {
    out << i << ',';
    write_mode_columns(out, basis.mode(i));
    out << '\n';
  }
}

inline BasisPtr read_modes_csv(const std::filesystem::path& path) {
  auto in = detail::open_in(path);
  std::string line;
  std::getline(in, line);  // header
  std::vector<ModeIndex> modes;
  int maxf = 0;
  while (std::getline(in, line)) {
    std::string_view lv = detail::trim(line);
    if (lv.empty()) continue;
    auto f = detail::split_csv(lv);
    if (std::size_t(parse_int(f[0])) != modes.size())
      throw std::invalid_argument("mode rows out of order in " + path.string());
    ModeIndex m = parse_mode_columns(f, 1);
    if (m.kind == ModeKind::wave)
      for (int c : m.k) maxf = std::max(maxf, std::abs(c));
    modes.push_back(m);
  }
  return std::make_shared<const Basis>(std::move(modes), maxf);
}

// ---------------------------------------------------------------------------
// SpectralField: one row per mode with its full description.
inline void write_field_csv(std::ostream& os, const SpectralField& u) {
  os << "mode_id,kind,kx,ky,kz,pol,parity,coeff\n";
  for (std::size_t i = 0; i < u.size(); ++i) {
    os << i << ',';
    write_mode_columns(os, u.basis->mode(i));
    os << ',' << fmt_double(u.c[i]) << '\n';
  }
}

inline void write_field_csv(const std::filesystem::path& path, const SpectralField& u) {
  auto out = detail::open_out(path);
  write_field_csv(out, u);
}

inline SpectralField read_field_csv(const std::filesystem::path& path) {
  auto in = detail::open_in(path);
  std::string line;
  std::getline(in, line);
  std::vector<ModeIndex> modes;
  std::vector<double> coeffs;
  int maxf = 0;
  while (std::getline(in, line)) {
    std::string_view lv = detail::trim(line);
    if (lv.empty()) continue;
    auto f = detail::split_csv(lv);
    if (f.size() != 8) throw std::invalid_argument("bad field row in " + path.string());
    if (std::size_t(parse_int(f[0])) != modes.size())
      throw std::invalid_argument("field rows out of order in " + path.string());
    ModeIndex m = parse_mode_columns(f, 1);
    if (m.kind == ModeKind::wave)
      for (int c : m.k) maxf = std::max(maxf, std::abs(c));
    modes.push_back(m);
    coeffs.push_back(parse_double(f[7]));
  }
  auto basis = std::make_shared<const Basis>(std::move(modes), maxf);
  SpectralField u(basis);
  u.c = std::move(coeffs);
  return u;
}

// ---------------------------------------------------------------------------
// Trajectory: "# key=value" headers, then (step, mode_id, coeff) rows. For a
// non-ball basis a sidecar "<stem>_modes.csv" carries the mode table and is
// referenced by file name. Returns every path written.
inline const char* scheme_name(Scheme s) {
  return s == Scheme::semi_implicit_euler ? "semi_implicit_euler"
                                          : "exponential_euler";
}

inline Scheme parse_scheme(std::string_view s) {
  if (s == "semi_implicit_euler") return Scheme::semi_implicit_euler;
  if (s == "exponential_euler") return Scheme::exponential_euler;
  throw std::invalid_argument("unknown scheme '" + std::string(s) + "'");
}

inline std::vector<std::filesystem::path> write_trajectory_csv(
    const std::filesystem::path& path, const Trajectory& traj) {
  std::vector<std::filesystem::path> written;
  int m = ball_radius(*traj.basis());
  std::filesystem::path modes_path;
  if (m < 0) {
    modes_path = path;
    modes_path.replace_filename(path.stem().string() + "_modes.csv");
  }
  auto out = detail::open_out(path);
  out << "# llns trajectory\n";
  out << "# t0=" << fmt_double(traj.t0) << '\n';
  out << "# dt=" << fmt_double(traj.dt) << '\n';
  out << "# scheme=" << scheme_name(traj.cfg.scheme) << '\n';
  if (m >= 0)
    out << "# m=" << m << '\n';
  else
    out << "# modes=" << modes_path.filename().string() << '\n';
  out << "step,mode_id,coeff\n";
  for (std::size_t i = 0; i < traj.states.size(); ++i)
    for (std::size_t z = 0; z < traj.states[i].size(); ++z)
      out << i << ',' << z << ',' << fmt_double(traj.states[i].c[z]) << '\n';
  written.push_back(path);
  if (m < 0) {
    write_modes_csv(modes_path, *traj.basis());
    written.push_back(modes_path);
  }
  return written;
}

inline std::map<std::string, std::string> read_csv_headers(std::istream& in,
                                                           std::string& first_data) {
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    std::string_view lv = detail::trim(line);
    if (lv.empty()) continue;
    if (lv.front() != '#') {
      first_data = std::string(lv);
      break;
    }
    lv.remove_prefix(1);
    lv = detail::trim(lv);
    std::size_t eq = lv.find('=');
    if (eq == std::string_view::npos) continue;  // free-form comment
    kv.emplace(std::string(detail::trim(lv.substr(0, eq))),
               std::string(detail::trim(lv.substr(eq + 1))));
  }
  return kv;
}

inline Trajectory read_trajectory_csv(const std::filesystem::path& path) {
  auto in = detail::open_in(path);
  std::string header_row;
  auto kv = read_csv_headers(in, header_row);
  BasisPtr basis;
  if (auto it = kv.find("m"); it != kv.end()) {
    basis = Basis::ball(int(parse_int(it->second)));
  } else if (auto jt = kv.find("modes"); jt != kv.end()) {
    basis = read_modes_csv(path.parent_path() / jt->second);
  } else {
    throw std::invalid_argument("trajectory " + path.string() +
                                " lacks a '# m=' or '# modes=' header");
  }
  Trajectory traj;
  traj.t0 = kv.count("t0") ? parse_double(kv.at("t0")) : 0.0;
  if (!kv.count("dt"))
    throw std::invalid_argument("trajectory " + path.string() + " lacks '# dt='");
  traj.dt = parse_double(kv.at("dt"));
  if (kv.count("scheme")) traj.cfg.scheme = parse_scheme(kv.at("scheme"));

  std::string line;
  const std::size_t nmodes = basis->size();
  while (std::getline(in, line)) {
    std::string_view lv = detail::trim(line);
    if (lv.empty()) continue;
    auto f = detail::split_csv(lv);
    if (f.size() != 3)
      throw std::invalid_argument("bad trajectory row in " + path.string());
    std::size_t step = std::size_t(parse_int(f[0]));
    std::size_t z = std::size_t(parse_int(f[1]));
    if (z >= nmodes)
      throw std::invalid_argument("mode_id out of range in " + path.string());
    if (step == traj.states.size()) traj.states.emplace_back(basis);
    if (step >= traj.states.size())
      throw std::invalid_argument("non-contiguous steps in " + path.string());
    traj.states[step].c[z] = parse_double(f[2]);
  }
  if (traj.states.empty())
    throw std::invalid_argument("trajectory " + path.string() + " has no rows");
  traj.cfg.dt = traj.dt;
  traj.cfg.T = traj.dt * double(traj.states.size() - 1);
  return traj;
}

// ---------------------------------------------------------------------------
// Forcing: identical layout with node rows.
inline std::vector<std::filesystem::path> write_forcing_csv(
    const std::filesystem::path& path, const Forcing& f) {
  if (f.values.empty()) throw std::invalid_argument("write_forcing_csv: empty forcing");
  std::vector<std::filesystem::path> written;
  int m = ball_radius(*f.values.front().basis);
  std::filesystem::path modes_path;
  if (m < 0) {
    modes_path = path;
    modes_path.replace_filename(path.stem().string() + "_modes.csv");
  }
  auto out = detail::open_out(path);
  out << "# llns forcing\n";
  out << "# t0=" << fmt_double(f.t0) << '\n';
  out << "# dt=" << fmt_double(f.dt) << '\n';
  if (m >= 0)
    out << "# m=" << m << '\n';
  else
    out << "# modes=" << modes_path.filename().string() << '\n';
  out << "node,mode_id,coeff\n";
  for (std::size_t i = 0; i < f.values.size(); ++i)
    for (std::size_t z = 0; z < f.values[i].size(); ++z)
      out << i << ',' << z << ',' << fmt_double(f.values[i].c[z]) << '\n';
  written.push_back(path);
  if (m < 0) {
    write_modes_csv(modes_path, *f.values.front().basis);
    written.push_back(modes_path);
  }
  return written;
}

inline Forcing read_forcing_csv(const std::filesystem::path& path) {
  auto in = detail::open_in(path);
  std::string header_row;
  auto kv = read_csv_headers(in, header_row);
  BasisPtr basis;
  if (auto it = kv.find("m"); it != kv.end())
    basis = Basis::ball(int(parse_int(it->second)));
  else if (auto jt = kv.find("modes"); jt != kv.end())
    basis = read_modes_csv(path.parent_path() / jt->second);
  else
    throw std::invalid_argument("forcing " + path.string() +
                                " lacks a '# m=' or '# modes=' header");
  Forcing f;
  f.t0 = kv.count("t0") ? parse_double(kv.at("t0")) : 0.0;
  if (!kv.count("dt"))
    throw std::invalid_argument("forcing " + path.string() + " lacks '# dt='");
  f.dt = parse_double(kv.at("dt"));
  std::string line;
  while (std::getline(in, line)) {
    std::string_view lv = detail::trim(line);
    if (lv.empty()) continue;
    auto fl = detail::split_csv(lv);
    if (fl.size() != 3) throw std::invalid_argument("bad forcing row in " + path.string());
    std::size_t node = std::size_t(parse_int(fl[0]));
    std::size_t z = std::size_t(parse_int(fl[1]));
    if (z >= basis->size())
      throw std::invalid_argument("mode_id out of range in " + path.string());
    if (node == f.values.size()) f.values.emplace_back(basis);
    if (node >= f.values.size())
      throw std::invalid_argument("non-contiguous nodes in " + path.string());
    f.values[node].c[z] = parse_double(fl[2]);
  }
  if (f.values.empty())
    throw std::invalid_argument("forcing " + path.string() + " has no rows");
  return f;
}

// ---------------------------------------------------------------------------
// Scaling schedules: plain header + (epsilon, delta, m) rows.
inline void write_schedule_csv(const std::filesystem::path& path,
                               const ScalingSchedule& s) {
  auto out = detail::open_out(path);
  out << "epsilon,delta,m\n";
  for (const auto& e : s.entries)
    out << fmt_double(e.epsilon) << ',' << fmt_double(e.delta) << ',' << e.m << '\n';
}

inline ScalingSchedule read_schedule_csv(const std::filesystem::path& path) {
  auto in = detail::open_in(path);
  std::string line;
  std::getline(in, line);
  ScalingSchedule s;
  while (std::getline(in, line)) {
    std::string_view lv = detail::trim(line);
    if (lv.empty()) continue;
    auto f = detail::split_csv(lv);
    if (f.size() != 3) throw std::invalid_argument("bad schedule row in " + path.string());
    s.entries.push_back({parse_double(f[0]), parse_double(f[1]), int(parse_int(f[2]))});
  }
  s.validate();
  return s;
}

// ---------------------------------------------------------------------------
// JSON reports.
using json = nlohmann::ordered_json;

inline json rate_breakdown_json(const RateBreakdown& rb) {
  json j;
  j["initial"] = rb.initial;
  j["dynamic"] = rb.dynamic;
  j["total"] = rb.total;
  j["profile"] = rb.residual_profile;
  return j;
}

inline void write_json(const std::filesystem::path& path, const json& j) {
  auto out = detail::open_out(path);
  out << j.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Content hashing and the run manifest. Every emitted file is listed with its
// FNV-1a 64 hash; wall_time_s is informational and exempt from byte-identical
// reproducibility (the data files themselves are covered by their hashes).
inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t hash_file(const std::filesystem::path& path) {
  auto in = detail::open_in(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  std::string s = ss.str();
  return fnv1a64(s);
}

inline std::string hex64(std::uint64_t h) {
  char buf[19];
  buf[0] = '0';
  buf[1] = 'x';
  static const char* digits = "0123456789abcdef";
  for (int i = 0; i < 16; ++i)
    buf[2 + i] = digits[(h >> (60 - 4 * i)) & 0xf];
  return std::string(buf, 18);
}

class ManifestWriter {
 public:
  explicit ManifestWriter(std::filesystem::path output_dir)
      : dir_(std::move(output_dir)) {}

  void set_config(json config_echo) { config_ = std::move(config_echo); }

  // Register a file (path relative to the output dir) after it is written.
  void add(const std::filesystem::path& rel) {
    json e;
    e["name"] = rel.generic_string();
    e["fnv1a64"] = hex64(hash_file(dir_ / rel));
    files_.push_back(std::move(e));
  }
  void add_all(const std::vector<std::filesystem::path>& paths) {
    for (const auto& p : paths)
      add(std::filesystem::relative(p, dir_));
  }

  void write(double wall_time_s) const {
    json j;
    j["version"] = version_string;
    j["config"] = config_;
    j["files"] = files_;
    j["wall_time_s"] = wall_time_s;
    write_json(dir_ / "manifest.json", j);
  }

 private:
  std::filesystem::path dir_;
  json config_;
  json files_ = json::array();
};

}  // namespace llns
