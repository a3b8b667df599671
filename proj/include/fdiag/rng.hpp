#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace fdiag {

constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

/// Uniform double in (0, 1] from 53 random bits.
inline double to_unit(std::uint64_t bits) {
    return (static_cast<double>(bits >> 11) + 1.0) * 0x1.0p-53;
}

/// Stateless generator: sample i depends only on (seed, i), so any subset of a
/// stream can be produced in any order with identical results.
class CounterRng {
public:
    explicit CounterRng(std::uint64_t seed) : key_(splitmix64(seed ^ 0x6A09E667F3BCC909ull)) {}

    std::uint64_t bits(std::uint64_t i) const { return splitmix64(key_ + splitmix64(i)); }
    double uniform(std::uint64_t i) const { return to_unit(bits(i)); }

    /// Standard normal via Box-Muller on the counter pair (2i, 2i+1).
    double normal(std::uint64_t i) const {
        const double u1 = uniform(2 * i);
        const double u2 = uniform(2 * i + 1);
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

private:
    std::uint64_t key_;
};

/// Sequential stream over a CounterRng.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    double uniform() { return gen_.uniform(next_++); }
    double normal() { return gen_.normal(next_++); }
    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) { return static_cast<std::uint64_t>(uniform() * static_cast<double>(n)) % n; }
    /// Normal truncated to [-2, 2] standard deviations.
    double truncated_normal(double stddev) {
        for (;;) {
            const double z = normal();
            if (std::abs(z) <= 2.0) return z * stddev;
        }
    }

private:
    CounterRng gen_;
    std::uint64_t next_ = 0;
};

}  // namespace fdiag
