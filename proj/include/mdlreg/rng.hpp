#pragma once

#include <cstdint>
#include <random>

namespace mdlreg {

// splitmix64 finalizer; spreads nearby seeds across the full 64-bit range.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// Sub-seed for task `stream` of a run seeded with `seed`. Seeded operations
// depend only on (seed, stream), never on scheduling or worker count.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    return mix64(mix64(seed) ^ mix64(stream * 0xd6e8feb86659fd93ull + 0x9e3779b97f4a7c15ull));
}

inline std::mt19937_64 make_rng(std::uint64_t seed) {
    return std::mt19937_64(mix64(seed));
}

}  // namespace mdlreg
