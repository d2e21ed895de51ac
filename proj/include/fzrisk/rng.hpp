#pragma once

#include <cstdint>

#include "fzrisk/mathutil.hpp"

namespace fzrisk {

// Deterministic, splittable random source built on xoshiro256++ with
// splitmix64 seeding. A (seed, stream) pair fully determines the output
// sequence, so parallel consumers can draw from independent streams and
// still reproduce results bit for bit at any thread count.
class Rng {
public:
    explicit Rng(uint64_t seed, uint64_t stream = 0) {
        uint64_t x = mix(seed + 0x9E3779B97F4A7C15ULL)
                   ^ mix(stream + 0xD1B54A32D192ED03ULL);
        for (auto& word : state_) {
            x += 0x9E3779B97F4A7C15ULL;
            word = mix(x);
        }
        if ((state_[0] | state_[1] | state_[2] | state_[3]) == 0)
            state_[0] = 0x853C49E6748FEA9BULL;
    }

    uint64_t next_u64() {
        uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform draw strictly inside (0, 1); safe as a quantile argument.
    double uniform() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    // Standard normal draw via the inverse CDF, so the distribution is
    // pinned down by the uniform stream alone.
    double normal() { return norm_quantile(uniform()); }

private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    // splitmix64 finalizer.
    static uint64_t mix(uint64_t z) {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    uint64_t state_[4];
};

} // namespace fzrisk
