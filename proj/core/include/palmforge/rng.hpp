#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace palmforge {

// splitmix64 step; used to mix seeds and derive independent stream seeds.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// Injective-enough derivation of a child seed from (seed, a, b). Every
// consumer that needs an independent stream (per step, per identity, per
// render) goes through here so no two streams share state.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
    std::uint64_t s = seed;
    std::uint64_t x = splitmix64(s);
    s ^= a * 0xD1342543DE82EF95ULL + 0x2545F4914F6CDD1DULL;
    x ^= splitmix64(s);
    s ^= b * 0xA24BAED4963EE407ULL + 0x9FB21C651E98DF25ULL;
    x ^= splitmix64(s);
    return x;
}

// Deterministic RNG stream. mt19937_64 has a fully specified sequence, and
// the distributions below are hand-rolled so draws are identical across
// standard library implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t next_u64() { return eng_(); }

    // Uniform in [0, 1). 53-bit resolution.
    double uniform() {
        return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Unbiased integer in [0, n). Rejection sampling on the top range.
    std::uint64_t uniform_index(std::uint64_t n) {
        const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
        std::uint64_t x;
        do {
            x = eng_();
        } while (x >= limit);
        return x % n;
    }

    int uniform_int(int lo, int hi) {  // inclusive bounds
        return lo + static_cast<int>(uniform_index(static_cast<std::uint64_t>(hi - lo + 1)));
    }

    // Standard normal via Box-Muller. Caches the second draw.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

private:
    std::mt19937_64 eng_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace palmforge
