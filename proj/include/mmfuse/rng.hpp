#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>

#include "mmfuse/tensor.hpp"

namespace mmfuse {

// xoshiro256** seeded through splitmix64 from a single 64-bit seed.
// Identical seeds produce identical sequences on every platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t s = seed;
        for (auto& word : state_) {
            s += 0x9E3779B97F4A7C15ULL;
            std::uint64_t z = s;
            z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
            z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
            word = z ^ (z >> 31);
        }
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // [0, 1) with 53-bit resolution.
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, bound) via rejection sampling (no modulo bias).
    std::uint64_t next_below(std::uint64_t bound) {
        if (bound == 0) {
            throw std::invalid_argument("next_below: bound must be positive");
        }
        const std::uint64_t threshold = (0 - bound) % bound;  // 2^64 mod bound
        std::uint64_t r = next_u64();
        while (r < threshold) r = next_u64();
        return r % bound;
    }

    double next_uniform(double lo, double hi) {
        if (!(lo < hi)) {
            throw std::invalid_argument("next_uniform: lo must be < hi");
        }
        return lo + (hi - lo) * next_double();
    }

    // Box-Muller, cosine branch; consumes exactly two raw draws per value.
    // The first uniform is shifted into (0, 1] so the log stays finite.
    double next_normal() {
        const double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
        const double u2 = next_double();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    std::array<std::uint64_t, 4> state_;
};

inline Tensor rng_normal(Rng& rng, std::vector<std::size_t> shape) {
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.next_normal();
    return t;
}

inline Tensor rng_uniform(Rng& rng, std::vector<std::size_t> shape, double lo, double hi) {
    if (!(lo < hi)) {
        throw std::invalid_argument("rng_uniform: lo must be < hi");
    }
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.next_uniform(lo, hi);
    return t;
}

}  // namespace mmfuse
