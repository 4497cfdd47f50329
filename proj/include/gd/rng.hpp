#pragma once

#include <cstdint>
#include <string_view>

// Deterministic random number generation.
//
// The generator is xoshiro256++ 1.0 (Blackman & Vigna), seeded through
// splitmix64. Both algorithms are fixed by this header and never change
// between releases, so any stream drawn from a given seed is reproducible
// bit for bit across platforms and implementations ("gd-rng-1").
//
// Independent streams are derived from (seed, index) or (seed, tag) via
// derive_stream / derive_tagged; sample i of a dataset always uses
// derive_stream(seed, i) regardless of generation order.

namespace gd {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) {
        std::uint64_t sm = seed;
        for (auto& w : s_) w = splitmix64(sm);
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // Uniform in [0, 1) with 53 random mantissa bits.
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    // Uniform integer in [0, n), n >= 1. Fixed-point multiply (Lemire),
    // without the rejection step; the bias is < 2^-64 per draw.
    std::uint64_t next_below(std::uint64_t n) {
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
    std::uint64_t s_[4];
};

// Stream for element `index` of the run seeded with `seed`.
inline Rng derive_stream(std::uint64_t seed, std::uint64_t index) {
    return Rng(seed ^ (0x9E3779B97F4A7C15ULL * (index + 1)));
}

// Stream for a named purpose ("shuffle", "dropout", ...) using FNV-1a over the tag.
inline Rng derive_tagged(std::uint64_t seed, std::string_view tag) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (char c : tag) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001B3ULL;
    }
    return Rng(seed ^ h);
}

}  // namespace gd
