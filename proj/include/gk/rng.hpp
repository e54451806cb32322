#pragma once

#include <cmath>
#include <cstdint>

namespace gk {

/// Counter-based generator: every draw is a pure function of
/// (seed, stream, counter), so parallel sampling is reproducible
/// independent of the thread schedule.
namespace rng {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

inline std::uint64_t at(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter) {
    std::uint64_t h = splitmix64(seed ^ 0x6a09e667f3bcc909ull);
    h = splitmix64(h ^ splitmix64(stream));
    return splitmix64(h ^ splitmix64(counter ^ 0xbb67ae8584caa73bull));
}

/// uniform in (0,1]; never returns 0 so log() is safe
inline double u01_open(std::uint64_t bits) { return (static_cast<double>(bits >> 11) + 1.0) * 0x1.0p-53; }

inline double u01(std::uint64_t bits) { return static_cast<double>(bits >> 11) * 0x1.0p-53; }

/// Box-Muller pair from two counter draws.
inline void normal_pair(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter, double& z0,
                        double& z1) {
    double u1 = u01_open(at(seed, stream, 2 * counter));
    double u2 = u01(at(seed, stream, 2 * counter + 1));
    double r = std::sqrt(-2.0 * std::log(u1));
    double th = 6.283185307179586476925286766559 * u2;
    z0 = r * std::cos(th);
    z1 = r * std::sin(th);
}

}  // namespace rng

}  // namespace gk
