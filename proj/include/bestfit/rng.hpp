// Seeded random streams. Every stochastic component derives its generator
// from (seed, stream) so that parallel and serial runs draw identical numbers.

#pragma once

#include <cstdint>
#include <random>

namespace bestfit {

inline std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
    // splitmix64 scramble of the pair; avoids correlated mt19937 states for
    // adjacent (seed, stream) values
    std::uint64_t x = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    auto mix = [&x]() {
        x += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = x;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    };
    std::seed_seq seq{static_cast<std::uint32_t>(mix()), static_cast<std::uint32_t>(mix() >> 32),
                      static_cast<std::uint32_t>(mix()), static_cast<std::uint32_t>(mix() >> 32)};
    return std::mt19937_64(seq);
}

}  // namespace bestfit
