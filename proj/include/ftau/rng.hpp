#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace ftau {

/// SplitMix64 step; used to derive independent substream seeds.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Deterministic substream seed from (seed, stream id). Chaining two ids
/// gives per-(replicate, purpose) streams.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t s = seed ^ (0x6a09e667f3bcc909ULL + stream * 0x9e3779b97f4a7c15ULL);
    std::uint64_t out = splitmix64(s);
    out ^= splitmix64(s);
    return out;
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    return derive_seed(derive_seed(seed, a), b);
}

/// Seedable random generator with pinned output distributions.
///
/// std::mt19937_64's bit stream is specified by the standard, but the
/// library distributions are not; every transformation here is spelled
/// out so that results are reproducible across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform on [0, 1), 53-bit resolution.
    double u01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Standard normal via Box-Muller; consumes exactly two engine outputs.
    double normal() {
        const double u1 = u01();
        const double u2 = u01();
        // 1-u1 lies in (0,1], keeping the log finite
        return std::sqrt(-2.0 * std::log(1.0 - u1)) * std::cos(two_pi * u2);
    }

    /// Exponential with the given rate (mean 1/rate), by inversion.
    double exponential(double rate) { return -std::log(1.0 - u01()) / rate; }

    /// Uniform integer in [0, bound). bound must be >= 1.
    std::uint64_t below(std::uint64_t bound) {
        // multiply-shift; bias is O(bound / 2^64), negligible for the
        // small bounds used here
        const unsigned __int128 wide =
            static_cast<unsigned __int128>(engine_()) * static_cast<unsigned __int128>(bound);
        return static_cast<std::uint64_t>(wide >> 64);
    }

private:
    static constexpr double two_pi = 6.283185307179586476925286766559;
    std::mt19937_64 engine_;
};

}  // namespace ftau
