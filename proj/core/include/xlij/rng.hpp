#pragma once

#include <cstdint>
#include <random>

namespace xlij {

// splitmix64; used to decorrelate consecutive sample seeds and to derive
// per-purpose streams from one run seed.
inline uint64_t mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline uint64_t derive_seed(uint64_t base, uint64_t stream) {
  return mix64(mix64(base) ^ mix64(stream * 0x9e3779b97f4a7c15ULL + 0x2545f4914f6cdd1dULL));
}

inline std::mt19937_64 make_rng(uint64_t seed) { return std::mt19937_64(mix64(seed)); }

// Uniform integer in [0, n) from a raw 64-bit state, without distribution
// objects so results stay stable across standard library versions.
inline uint64_t bounded(uint64_t raw, uint64_t n) { return raw % n; }

}  // namespace xlij
