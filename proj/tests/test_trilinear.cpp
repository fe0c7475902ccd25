#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "llns/field.hpp"
#include "llns/modes.hpp"
#include "llns/trilinear.hpp"
#include "oracles.hpp"

using namespace llns;

namespace {

SpectralField random_field(const BasisPtr& basis, std::mt19937_64& rng) {
  SpectralField u(basis);
  std::normal_distribution<double> gauss;
  for (auto& c : u.c) c = gauss(rng);
  return u;
}

}  // namespace

TEST_CASE("oracle gradient matches central differences") {
  auto b2 = Basis::ball(2);
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double h = 1e-6;
  for (std::size_t z = 3; z < b2->size(); z += 7) {
    const ModeIndex& m = b2->mode(z);
    DVec3 x{unif(rng), unif(rng), unif(rng)};
    for (int j = 0; j < 3; ++j) {
      DVec3 xp = x, xm = x;
      xp[j] += h;
      xm[j] -= h;
      DVec3 up = evaluate_mode(m, xp), um = evaluate_mode(m, xm);
      DVec3 d = oracle::mode_partial(m, j, x);
      for (int c = 0; c < 3; ++c)
        CHECK_THAT((up[c] - um[c]) / (2.0 * h),
                   Catch::Matchers::WithinAbs(d[c], 1e-4));
    }
  }
}

TEST_CASE("interaction coefficients match grid quadrature") {
  auto b2 = Basis::ball(2);
  std::mt19937_64 rng(22);
  std::uniform_int_distribution<std::size_t> pick(0, b2->size() - 1);
  for (int trial = 0; trial < 200; ++trial) {
    const ModeIndex& z = b2->mode(pick(rng));
    const ModeIndex& z1 = b2->mode(pick(rng));
    const ModeIndex& z2 = b2->mode(pick(rng));
    double exact = trilinear_coeff(z, z1, z2);
    double quad = oracle::trilinear_quadrature(z, z1, z2, 16);
    CHECK_THAT(exact, Catch::Matchers::WithinAbs(quad, 1e-12));
  }
}

TEST_CASE("antisymmetry in the outer pair") {
  auto b2 = Basis::ball(2);
  std::mt19937_64 rng(23);
  std::uniform_int_distribution<std::size_t> pick(0, b2->size() - 1);
  for (int trial = 0; trial < 500; ++trial) {
    const ModeIndex& z = b2->mode(pick(rng));
    const ModeIndex& z1 = b2->mode(pick(rng));
    const ModeIndex& z2 = b2->mode(pick(rng));
    CHECK(std::abs(trilinear_coeff(z, z1, z2) + trilinear_coeff(z2, z1, z)) < 1e-12);
  }
}

TEST_CASE("table application equals the brute-force double sum") {
  auto b1 = Basis::ball(1);
  TrilinearTable table(b1);
  std::mt19937_64 rng(24);
  SpectralField u = random_field(b1, rng);
  SpectralField direct(b1);
  for (std::size_t z = 0; z < b1->size(); ++z) {
    double acc = 0.0;
    for (std::size_t z1 = 0; z1 < b1->size(); ++z1)
      for (std::size_t z2 = 0; z2 < b1->size(); ++z2)
        acc += trilinear_coeff(b1->mode(z), b1->mode(z1), b1->mode(z2)) * u.c[z1] *
               u.c[z2];
    direct.c[z] = acc;
  }
  SpectralField fast = table.apply(u);
  for (std::size_t z = 0; z < b1->size(); ++z)
    CHECK_THAT(fast.c[z], Catch::Matchers::WithinAbs(direct.c[z], 1e-12));
}

TEST_CASE("wave-only self-interaction vanishes at m=1") {
  // Each |k|=1 wavevector interacts with itself only, and single-wavevector
  // convection is annihilated by incompressibility; constants still advect.
  auto b1 = Basis::ball(1);
  TrilinearTable table(b1);
  std::mt19937_64 rng(25);
  SpectralField u = random_field(b1, rng);
  u.c[0] = u.c[1] = u.c[2] = 0.0;
  SpectralField out = table.apply(u);
  for (std::size_t z = 0; z < b1->size(); ++z) CHECK(std::abs(out.c[z]) < 1e-13);

  SpectralField v = random_field(b1, rng);
  SpectralField moved = table.apply(v);
  double sum = 0.0;
  for (std::size_t z = 0; z < b1->size(); ++z) sum += std::abs(moved.c[z]);
  CHECK(sum > 1e-3);  // constant sweep does move the waves
}

TEST_CASE("constant modes are never targets and never advected fields") {
  auto b2 = Basis::ball(2);
  TrilinearTable table(b2);
  for (const auto& e : table.entries()) {
    CHECK(b2->mode(e.z).kind == ModeKind::wave);
    CHECK(b2->mode(e.z2).kind == ModeKind::wave);
  }
}

TEST_CASE("convection conserves energy") {
  auto b2 = Basis::ball(2);
  TrilinearTable table(b2);
  std::mt19937_64 rng(26);
  for (int trial = 0; trial < 100; ++trial) {
    SpectralField u = random_field(b2, rng);
    SpectralField bu = table.apply(u);
    double n = norm(u, NormKind::H);
    CHECK(std::abs(inner(bu, u)) <= 1e-12 * n * n * n);
  }
}

TEST_CASE("single-wavevector fields are steady states of convection") {
  auto b2 = Basis::ball(2);
  TrilinearTable table(b2);
  std::mt19937_64 rng(27);
  std::normal_distribution<double> gauss;
  IVec3 k{1, 1, 0};
  SpectralField u(b2);
  for (int pol = 0; pol < 2; ++pol)
    for (Parity p : {Parity::cos, Parity::sin})
      u.c[b2->find_wave(k, pol, p)] = gauss(rng);
  SpectralField out = table.apply(u);
  for (std::size_t z = 0; z < b2->size(); ++z) CHECK(std::abs(out.c[z]) < 1e-13);
}

TEST_CASE("bilinear split is consistent with the quadratic form") {
  auto b2 = Basis::ball(2);
  TrilinearTable table(b2);
  std::mt19937_64 rng(28);
  SpectralField a = random_field(b2, rng);
  SpectralField b = random_field(b2, rng);
  SpectralField whole = table.apply(a + b);
  SpectralField parts = table.apply_bilinear(a, a) + table.apply_bilinear(a, b) +
                        table.apply_bilinear(b, a) + table.apply_bilinear(b, b);
  for (std::size_t z = 0; z < b2->size(); ++z)
    CHECK_THAT(whole.c[z], Catch::Matchers::WithinAbs(parts.c[z], 1e-11));
}

TEST_CASE("pseudo-spectral collocation agrees with the table") {
  auto b2 = Basis::ball(2);
  TrilinearTable table(b2);
  oracle::GridCache grid(b2, 32);
  std::mt19937_64 rng(29);
  for (int trial = 0; trial < 5; ++trial) {
    SpectralField u = random_field(b2, rng);
    SpectralField fast = table.apply(u);
    std::vector<double> slow = grid.convection_coeffs(u);
    double scale = 0.0;
    for (double v : slow) scale = std::max(scale, std::abs(v));
    for (std::size_t z = 0; z < b2->size(); ++z)
      CHECK_THAT(fast.c[z], Catch::Matchers::WithinAbs(slow[z], 1e-10 * scale));
  }
}

TEST_CASE("shared tables are cached per basis") {
  auto b2 = Basis::ball(2);
  TablePtr t1 = shared_table(b2);
  TablePtr t2 = shared_table(b2);
  CHECK(t1.get() == t2.get());
  auto b1 = Basis::ball(1);
  CHECK(shared_table(b1).get() != t1.get());
  SpectralField u(b2);
  u.c[b2->find_wave({1, 0, 0}, 0, Parity::cos)] = 1.0;
  SpectralField via_helper = nonlinear_term(u, *t1);
  SpectralField via_table = t1->apply(u);
  for (std::size_t z = 0; z < b2->size(); ++z)
    CHECK(via_helper.c[z] == via_table.c[z]);
}
