#pragma once

#include <cstdint>
#include <random>

namespace hwsched {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Hash of (seed, stream, index); distinct streams keep e.g. noise and policy
/// randomization independent.
inline std::uint64_t counter_key(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
    return splitmix64(splitmix64(splitmix64(seed) ^ stream) ^ index);
}

/// Generator for path `index`; results do not depend on which thread runs the path.
inline std::mt19937_64 path_rng(std::uint64_t seed, std::uint64_t index, std::uint64_t stream = 0) {
    return std::mt19937_64(counter_key(seed, stream, index));
}

namespace streams {
inline constexpr std::uint64_t diffusion_noise = 0x6e6f697365ULL;
inline constexpr std::uint64_t policy_switching = 0x737769746368ULL;
inline constexpr std::uint64_t ctmc_events = 0x6374636dULL;
inline constexpr std::uint64_t boundary_mc = 0x626f756e64ULL;
}  // namespace streams

}  // namespace hwsched
