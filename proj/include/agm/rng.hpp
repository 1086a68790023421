// rng.hpp
//
// Small explicit-state generator. Every randomized step (weight init, batch
// shuffles, prompt sampling, synthetic placement) owns one of these; there is
// no global RNG. Outputs are identical on every platform, which the standard
// <random> distributions do not guarantee.

#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace agm
{

class SplitMix64
{
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next()
    {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). n must be > 0. Rejection sampling, no modulo bias.
    std::uint64_t below(std::uint64_t n)
    {
        const std::uint64_t limit = (~std::uint64_t{0}) - ((~std::uint64_t{0}) % n);
        std::uint64_t r = next();
        while (r >= limit)
            r = next();
        return r % n;
    }

    /// Standard normal via Box-Muller (one value per call; the pair's twin is dropped).
    double normal()
    {
        double u1 = uniform();
        while (u1 <= 0.0)
            u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

private:
    std::uint64_t state_;
};

/// Stateless 64-bit mix (the splitmix finalizer).
constexpr std::uint64_t mix64(std::uint64_t z)
{
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// FNV-1a over the bytes of s.
constexpr std::uint64_t fnv1a(std::string_view s)
{
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (char c : s)
    {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001B3ULL;
    }
    return h;
}

/// Seed for per-sample work: depends only on the run seed and the sample id.
constexpr std::uint64_t sample_seed(std::uint64_t global_seed, std::string_view id)
{
    return mix64(global_seed ^ mix64(fnv1a(id)));
}

}  // namespace agm
