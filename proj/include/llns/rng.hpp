#pragma once
// Deterministic seeding. Replicas derive independent generators from
// (master_seed, stream_id) through splitmix64, so replica r of run s is
// reproducible regardless of scheduling.

#include <cstdint>
#include <random>

namespace llns {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::mt19937_64 make_rng(std::uint64_t master_seed, std::uint64_t stream = 0) {
  std::uint64_t s = master_seed ^ (0x9e3779b97f4a7c15ULL * (stream + 1));
  std::uint64_t w0 = splitmix64(s), w1 = splitmix64(s), w2 = splitmix64(s),
                w3 = splitmix64(s);
  std::seed_seq seq{std::uint32_t(w0), std::uint32_t(w0 >> 32), std::uint32_t(w1),
                    std::uint32_t(w1 >> 32), std::uint32_t(w2), std::uint32_t(w2 >> 32),
                    std::uint32_t(w3), std::uint32_t(w3 >> 32)};
  return std::mt19937_64(seq);
}

}  // namespace llns
