#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace rectify {

// Deterministic substream derivation: mixing (seed, a, b, c) through
// splitmix64 gives independent generators for (prompt, pass, purpose)
// tuples regardless of scheduling order.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::mt19937_64 substream(std::uint64_t seed, std::uint64_t a = 0,
                                 std::uint64_t b = 0, std::uint64_t c = 0) {
    std::uint64_t s = splitmix64(seed);
    s = splitmix64(s ^ (a + 0x9e3779b97f4a7c15ULL));
    s = splitmix64(s ^ (b + 0x7f4a7c159e3779b9ULL));
    s = splitmix64(s ^ (c + 0x2545f4914f6cdd1dULL));
    return std::mt19937_64(s);
}

// Uniform in [0,1) from the top 53 bits; independent of libstdc++'s
// distribution internals so streams are stable across toolchains.
inline double uniform01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// One standard normal draw (Box-Muller, two uniforms consumed per call).
inline double normal01(std::mt19937_64& rng) {
    double u1 = uniform01(rng);
    double u2 = uniform01(rng);
    while (u1 <= 0.0) u1 = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

}  // namespace rectify
