#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace mow {

// Counter-based generator: the draw at position c is a pure function of
// (seed, c), so the full stream state is two integers and splitting a
// request of m+n draws into m then n yields identical values.
// The mixer is the splitmix64 finalizer.
class Rng {
public:
    Rng() = default;
    Rng(uint64_t seed, uint64_t counter = 0) : seed_(seed), counter_(counter) {}

    // Independent stream derived from (seed, tag).
    static Rng derive(uint64_t seed, uint64_t tag) {
        return Rng(mix(seed ^ 0x9E3779B97F4A7C15ull, tag));
    }

    uint64_t next_u64() { return mix(seed_, counter_++); }

    // Uniform in [0, 1), 53-bit resolution.
    double next_unit() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Standard normal via Box-Muller; consumes exactly two counters so the
    // stream position stays a pure function of the number of draws.
    double next_gaussian() {
        const double u1 = next_unit();
        const double u2 = next_unit();
        const double r = std::sqrt(-2.0 * std::log1p(-u1));
        return r * std::cos(2.0 * std::numbers::pi * u2);
    }

    // Uniform integer in [0, n). Fixed-width multiply keeps it counter-exact.
    uint64_t next_below(uint64_t n) {
        return static_cast<uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    uint64_t seed() const { return seed_; }
    uint64_t counter() const { return counter_; }
    void set_counter(uint64_t c) { counter_ = c; }

    friend bool operator==(const Rng&, const Rng&) = default;

private:
    static uint64_t mix(uint64_t seed, uint64_t counter) {
        uint64_t z = seed + (counter + 1) * 0x9E3779B97F4A7C15ull;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    uint64_t seed_ = 0;
    uint64_t counter_ = 0;
};

}  // namespace mow
