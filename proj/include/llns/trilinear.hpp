#pragma once
// Convection coefficients B_{z,z1,z2} = <(e_{z1}.grad) e_{z2}, e_z> and the
// projected nonlinear term. Coefficients are exact: each real mode expands
// into at most two complex exponentials, the product-to-sum bookkeeping is a
// sum over sign combinations whose wavevectors cancel.

#include <complex>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <vector>

#include "llns/field.hpp"
#include "llns/modes.hpp"

namespace llns {

inline double trilinear_coeff(const ModeIndex& z, const ModeIndex& z1,
                              const ModeIndex& z2) {
  if (z2.kind == ModeKind::constant) return 0.0;  // grad of a constant
  std::complex<double> acc = 0.0;
  const auto t1s = exp_terms(z1);
  const auto t2s = exp_terms(z2);
  const auto tzs = exp_terms(z);
  const std::complex<double> i2pi(0.0, two_pi);
  for (const auto& t1 : t1s)
    for (const auto& t2 : t2s) {
      // (e1 . grad) e2 contributes (A1 . i 2 pi k2) A2 at wavevector k1+k2.
      std::complex<double> adv =
          i2pi * (t1.amp[0] * double(t2.kk[0]) + t1.amp[1] * double(t2.kk[1]) +
                  t1.amp[2] * double(t2.kk[2]));
      if (adv == 0.0) continue;
      for (const auto& tz : tzs) {
        if (t1.kk[0] + t2.kk[0] + tz.kk[0] != 0 ||
            t1.kk[1] + t2.kk[1] + tz.kk[1] != 0 ||
            t1.kk[2] + t2.kk[2] + tz.kk[2] != 0)
          continue;
        acc += adv * (t2.amp[0] * tz.amp[0] + t2.amp[1] * tz.amp[1] +
                      t2.amp[2] * tz.amp[2]);
      }
    }
  return acc.real();
}

class TrilinearTable {
 public:
  struct Entry {
    std::uint32_t z, z1, z2;
    double v;
  };

  explicit TrilinearTable(BasisPtr basis) : basis_(std::move(basis)) { build(); }

  const BasisPtr& basis() const { return basis_; }
  const std::vector<Entry>& entries() const { return entries_; }

  // Coefficient vector of P_m P((u.grad) u).
  SpectralField apply(const SpectralField& u) const {
    check_basis(u);
    SpectralField out(u.basis);
    for (const Entry& e : entries_) out.c[e.z] += e.v * u.c[e.z1] * u.c[e.z2];
    return out;
  }

  // Coefficient vector of P_m P((a.grad) b) for distinct fields.
  SpectralField apply_bilinear(const SpectralField& a, const SpectralField& b) const {
    check_basis(a);
    check_basis(b);
    SpectralField out(a.basis);
    for (const Entry& e : entries_) out.c[e.z] += e.v * a.c[e.z1] * b.c[e.z2];
    return out;
  }

 private:
  void check_basis(const SpectralField& u) const {
    if (u.basis.get() != basis_.get() && !u.basis->same_modes(*basis_))
      throw std::invalid_argument("TrilinearTable: basis mismatch");
  }

  void build() {
    const auto& modes = basis_->modes();
    const double drop = 1e-14;
    for (std::uint32_t i1 = 0; i1 < modes.size(); ++i1) {
      for (std::uint32_t i2 = 0; i2 < modes.size(); ++i2) {
        const ModeIndex& m2 = modes[i2];
        if (m2.kind == ModeKind::constant) continue;
        // Candidate output wavevectors: sums of exponential-term wavevectors.
        std::vector<IVec3> cands;
        for (const auto& t1 : exp_terms(modes[i1]))
          for (const auto& t2 : exp_terms(m2)) {
            IVec3 s{t1.kk[0] + t2.kk[0], t1.kk[1] + t2.kk[1], t1.kk[2] + t2.kk[2]};
            if (s == IVec3{0, 0, 0}) continue;  // constant rows vanish
            if (!canonical_half(s)) s = negated(s);
            bool seen = false;
            for (const auto& c : cands) seen = seen || c == s;
            if (!seen) cands.push_back(s);
          }
        for (const auto& kc : cands)
          for (int pol = 0; pol < 2; ++pol)
            for (Parity p : {Parity::cos, Parity::sin}) {
              std::size_t iz = basis_->find(ModeIndex::wave(kc, pol, p));
              if (iz == Basis::npos) continue;
              double v = trilinear_coeff(modes[iz], modes[i1], m2);
              if (std::abs(v) > drop)
                entries_.push_back({std::uint32_t(iz), i1, i2, v});
            }
      }
    }
    std::sort(entries_.begin(), entries_.end(), [](const Entry& a, const Entry& b) {
      if (a.z1 != b.z1) return a.z1 < b.z1;
      if (a.z2 != b.z2) return a.z2 < b.z2;
      return a.z < b.z;
    });
  }

  BasisPtr basis_;
  std::vector<Entry> entries_;
};

using TablePtr = std::shared_ptr<const TrilinearTable>;

// Process-wide cache; tables are immutable after construction.
inline TablePtr shared_table(const BasisPtr& basis) {
  static std::mutex mu;
  static std::map<const Basis*, std::weak_ptr<const TrilinearTable>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto& slot = cache[basis.get()];
  if (auto t = slot.lock()) return t;
  auto t = std::make_shared<const TrilinearTable>(basis);
  slot = t;
  return t;
}

inline SpectralField nonlinear_term(const SpectralField& u, const TrilinearTable& table) {
  return table.apply(u);
}

}  // namespace llns
