#pragma once
// Real divergence-free Stokes eigenbasis of the 3-torus.
//
// Wave modes come in quadruples (k, pol, parity) over a canonical half-lattice
// (exactly one of {k,-k}, the one whose first nonzero component is positive);
// each is sqrt(2) * u_pol * cos/sin(2 pi k.x) with u_pol a unit vector
// perpendicular to k, so the family is orthonormal in L^2. Three constant
// modes span the momentum kernel.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <memory>
#include <numbers>
#include <stdexcept>
#include <unordered_map>
#include <vector>

namespace llns {

using IVec3 = std::array<int, 3>;
using DVec3 = std::array<double, 3>;

inline constexpr double two_pi = 2.0 * std::numbers::pi;
inline constexpr double four_pi_sq = 4.0 * std::numbers::pi * std::numbers::pi;

inline int dot(const IVec3& a, const IVec3& b) {
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}
inline double dot(const DVec3& a, const DVec3& b) {
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}
inline double dot(const DVec3& a, const IVec3& b) {
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}
inline DVec3 cross(const DVec3& a, const DVec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2],
          a[0] * b[1] - a[1] * b[0]};
}
inline int norm_sq(const IVec3& k) { return dot(k, k); }
inline double norm(const DVec3& v) { return std::sqrt(dot(v, v)); }
inline DVec3 normalized(const DVec3& v) {
  double n = norm(v);
  return {v[0] / n, v[1] / n, v[2] / n};
}
inline IVec3 negated(const IVec3& k) { return {-k[0], -k[1], -k[2]}; }

// True iff k is the canonical representative of {k,-k}.
inline bool canonical_half(const IVec3& k) {
  if (k[0] != 0) return k[0] > 0;
  if (k[1] != 0) return k[1] > 0;
  return k[2] > 0;
}

enum class Parity : std::uint8_t { cos = 0, sin = 1 };
enum class ModeKind : std::uint8_t { constant = 0, wave = 1 };

struct ModeIndex {
  ModeKind kind = ModeKind::constant;
  IVec3 k{0, 0, 0};  // wave only, canonical half-lattice
  int pol = 0;       // wave only, 0 or 1
  Parity parity = Parity::cos;
  int axis = 0;  // constant only

  static ModeIndex constant_mode(int axis) {
    ModeIndex m;
    m.kind = ModeKind::constant;
    m.axis = axis;
    return m;
  }
  static ModeIndex wave(const IVec3& k, int pol, Parity parity) {
    ModeIndex m;
    m.kind = ModeKind::wave;
    m.k = k;
    m.pol = pol;
    m.parity = parity;
    return m;
  }
  bool operator==(const ModeIndex& o) const {
    if (kind != o.kind) return false;
    if (kind == ModeKind::constant) return axis == o.axis;
    return k == o.k && pol == o.pol && parity == o.parity;
  }
};

inline double eigenvalue(const ModeIndex& m) {
  if (m.kind == ModeKind::constant) return 0.0;
  return four_pi_sq * norm_sq(m.k);
}

// (I - k k^T / |k|^2) v
inline DVec3 leray_project(const IVec3& k, const DVec3& v) {
  double kk = norm_sq(k);
  if (kk == 0.0) throw std::invalid_argument("leray_project: k = 0");
  double s = (k[0] * v[0] + k[1] * v[1] + k[2] * v[2]) / kk;
  return {v[0] - s * k[0], v[1] - s * k[1], v[2] - s * k[2]};
}

// Two unit vectors perpendicular to k: u1 = normalized(k x e_z), falling back
// to e_x when k is parallel to e_z, and u2 = normalized(k x u1).
inline std::pair<DVec3, DVec3> polarization_vectors(const IVec3& k) {
  DVec3 kd{double(k[0]), double(k[1]), double(k[2])};
  DVec3 a{0.0, 0.0, 1.0};
  if (k[0] == 0 && k[1] == 0) a = {1.0, 0.0, 0.0};
  DVec3 u1 = normalized(cross(kd, a));
  DVec3 u2 = normalized(cross(kd, u1));
  return {u1, u2};
}

inline DVec3 polarization_vector(const ModeIndex& m) {
  if (m.kind == ModeKind::constant) {
    DVec3 e{0, 0, 0};
    e[m.axis] = 1.0;
    return e;
  }
  auto [u1, u2] = polarization_vectors(m.k);
  return m.pol == 0 ? u1 : u2;
}

// Pointwise value of the basis function at x in [0,1)^3.
inline DVec3 evaluate_mode(const ModeIndex& m, const DVec3& x) {
  DVec3 u = polarization_vector(m);
  if (m.kind == ModeKind::constant) return u;
  double th = two_pi * dot(x, m.k);
  double s = std::numbers::sqrt2 *
             (m.parity == Parity::cos ? std::cos(th) : std::sin(th));
  return {s * u[0], s * u[1], s * u[2]};
}

// Complex exponential expansion: e_mode(x) = sum_t amp_t exp(2 pi i kk_t . x).
struct ExpTerm {
  IVec3 kk;
  std::array<std::complex<double>, 3> amp;
};

inline std::vector<ExpTerm> exp_terms(const ModeIndex& m) {
  std::vector<ExpTerm> out;
  DVec3 u = polarization_vector(m);
  if (m.kind == ModeKind::constant) {
    out.push_back({IVec3{0, 0, 0}, {u[0], u[1], u[2]}});
    return out;
  }
  const double r = 1.0 / std::numbers::sqrt2;  // sqrt(2)/2
  std::complex<double> cp, cm;                 // coefficients of e^{i th}, e^{-i th}
  if (m.parity == Parity::cos) {
    cp = {r, 0.0};
    cm = {r, 0.0};
  } else {
    cp = {0.0, -r};
    cm = {0.0, r};
  }
  out.push_back({m.k, {cp * u[0], cp * u[1], cp * u[2]}});
  out.push_back({negated(m.k), {cm * u[0], cm * u[1], cm * u[2]}});
  return out;
}

inline bool mode_order_before(const ModeIndex& a, const ModeIndex& b) {
  if (a.kind != b.kind) return a.kind == ModeKind::constant;
  if (a.kind == ModeKind::constant) return a.axis < b.axis;
  int na = norm_sq(a.k), nb = norm_sq(b.k);
  if (na != nb) return na < nb;
  if (a.k != b.k) return a.k < b.k;
  if (a.pol != b.pol) return a.pol < b.pol;
  return a.parity < b.parity;
}

// Deterministic enumeration of B_m: constants first, then waves sorted by
// (|k|^2, lexicographic k, pol, parity). Enumerations for increasing m are
// prefixes of one another.
inline std::vector<ModeIndex> enumerate_modes(int m) {
  if (m < 0) throw std::invalid_argument("enumerate_modes: m < 0");
  std::vector<ModeIndex> out;
  for (int axis = 0; axis < 3; ++axis) out.push_back(ModeIndex::constant_mode(axis));
  std::vector<IVec3> half;
  for (int kx = -m; kx <= m; ++kx)
    for (int ky = -m; ky <= m; ++ky)
      for (int kz = -m; kz <= m; ++kz) {
        IVec3 k{kx, ky, kz};
        int n2 = norm_sq(k);
        if (n2 == 0 || n2 > m * m) continue;
        if (!canonical_half(k)) continue;
        half.push_back(k);
      }
  std::sort(half.begin(), half.end(), [](const IVec3& a, const IVec3& b) {
    int na = norm_sq(a), nb = norm_sq(b);
    if (na != nb) return na < nb;
    return a < b;
  });
  for (const auto& k : half)
    for (int pol = 0; pol < 2; ++pol)
      for (Parity p : {Parity::cos, Parity::sin})
        out.push_back(ModeIndex::wave(k, pol, p));
  return out;
}

// Ordered mode set with O(1) lookup. Shared immutably by fields built on it.
class Basis {
 public:
  explicit Basis(std::vector<ModeIndex> modes, int max_frequency)
      : modes_(std::move(modes)), max_frequency_(max_frequency) {
    for (std::size_t i = 0; i < modes_.size(); ++i)
      lookup_.emplace(pack(modes_[i]), i);
  }

  static std::shared_ptr<const Basis> ball(int m) {
    return std::make_shared<const Basis>(enumerate_modes(m), m);
  }

  std::size_t size() const { return modes_.size(); }
  const ModeIndex& mode(std::size_t i) const { return modes_[i]; }
  const std::vector<ModeIndex>& modes() const { return modes_; }
  int max_frequency() const { return max_frequency_; }

  // Index of a mode, or npos when absent. Wave keys are normalized to the
  // canonical half-lattice first (a non-canonical k names the same subspace).
  static constexpr std::size_t npos = std::size_t(-1);
  std::size_t find(const ModeIndex& m) const {
    auto it = lookup_.find(pack(m));
    return it == lookup_.end() ? npos : it->second;
  }
  std::size_t find_wave(const IVec3& k, int pol, Parity parity) const {
    IVec3 kc = canonical_half(k) ? k : negated(k);
    return find(ModeIndex::wave(kc, pol, parity));
  }

  bool same_modes(const Basis& o) const {
    if (modes_.size() != o.modes_.size()) return false;
    for (std::size_t i = 0; i < modes_.size(); ++i)
      if (!(modes_[i] == o.modes_[i])) return false;
    return true;
  }

 private:
  static std::uint64_t pack(const ModeIndex& m) {
    if (m.kind == ModeKind::constant) return std::uint64_t(m.axis);
    auto enc = [](int v) { return std::uint64_t(v + 512) & 0x3ff; };
    return (std::uint64_t(1) << 63) | (enc(m.k[0]) << 33) | (enc(m.k[1]) << 23) |
           (enc(m.k[2]) << 13) | (std::uint64_t(m.pol) << 12) |
           (std::uint64_t(m.parity) << 11);
  }

  std::vector<ModeIndex> modes_;
  int max_frequency_;
  std::unordered_map<std::uint64_t, std::size_t> lookup_;
};

using BasisPtr = std::shared_ptr<const Basis>;

}  // namespace llns
