#pragma once

// Counter-based pseudo-random streams. Every (seed, stream) pair yields an
// independent reproducible sequence, so parallel replicates can each own
// stream = replicate index and still reproduce a serial run bit for bit.
// The generator walks a 64-bit counter through the SplitMix64 finalizer;
// normal variates come from Box-Muller (no rejection, so the number of
// counter increments per draw is fixed).

#include <cmath>
#include <cstdint>

namespace evanova {

class CounterRng {
public:
    explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0)
        : state_(mix(mix(seed ^ 0xD1B54A32D192ED03ull) + stream * 0x9E3779B97F4A7C15ull)) {}

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ull;
        return mix(state_);
    }

    // Uniform on [0, 1), 53 random bits.
    double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    bool next_bernoulli(double p) { return next_unit() < p; }

    // Standard normal via Box-Muller; the paired variate is cached.
    double next_normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = 1.0 - next_unit();  // (0, 1], keeps log finite
        const double u2 = next_unit();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * M_PI * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

private:
    static std::uint64_t mix(std::uint64_t z) {
        z ^= z >> 30;
        z *= 0xBF58476D1CE4E5B9ull;
        z ^= z >> 27;
        z *= 0x94D049BB133111EBull;
        z ^= z >> 31;
        return z;
    }

    std::uint64_t state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace evanova
