#pragma once

#include <cstdint>
#include <random>

namespace posetlab {

// splitmix64: cheap stateless mixer used to derive independent stream seeds
// from a root seed plus indices (trial number, grid cell, ...).
inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline uint64_t derive_seed(uint64_t root, uint64_t a, uint64_t b = 0, uint64_t c = 0) {
    uint64_t s = splitmix64(root ^ 0x517cc1b727220a95ULL);
    s = splitmix64(s ^ a);
    s = splitmix64(s ^ b);
    s = splitmix64(s ^ c);
    return s;
}

inline std::mt19937_64 make_rng(uint64_t seed) { return std::mt19937_64(seed); }

} // namespace posetlab
