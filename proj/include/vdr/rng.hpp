#pragma once

#include <cmath>
#include <cstdint>

namespace vdr {

// Counter-based deterministic RNG. Every stream is identified by a
// (seed, stream) pair hashed through splitmix64; draws advance a local
// counter only, so parallel workers can derive independent streams from
// one user seed without shared state.
class Rng {
public:
    explicit Rng(uint64_t seed, uint64_t stream = 0)
        : state_(mix(mix(seed + 0x9e3779b97f4a7c15ULL) ^ mix(stream + 0xbf58476d1ce4e5b9ULL))) {}

    // Derive a child stream (e.g. per sample index) from this stream.
    Rng derive(uint64_t substream) const { return Rng(state_, substream); }

    uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ULL;
        return mix(state_);
    }

    // Uniform in [0,1).
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n).
    uint64_t uniform_index(uint64_t n) {
        return n ? next_u64() % n : 0;
    }

    // Standard normal via Box-Muller (one value per call; pairs cached).
    double normal() {
        if (has_cached_) {
            has_cached_ = false;
            return cached_;
        }
        double u1 = uniform();
        double u2 = uniform();
        // Guard against log(0).
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        cached_ = r * std::sin(a);
        has_cached_ = true;
        return r * std::cos(a);
    }

private:
    static uint64_t mix(uint64_t z) {
        z ^= z >> 30;
        z *= 0xbf58476d1ce4e5b9ULL;
        z ^= z >> 27;
        z *= 0x94d049bb133111ebULL;
        z ^= z >> 31;
        return z;
    }

    uint64_t state_;
    double cached_ = 0.0;
    bool has_cached_ = false;
};

}  // namespace vdr
