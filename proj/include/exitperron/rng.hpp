#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace exitperron {

/// Counter-based stream: output k is a fixed 64-bit mix of
/// (base + k·gamma), so streams derived from the same key are identical
/// regardless of which thread consumes them. Used to give each simulated
/// path its own stream keyed on (seed, path index), which is what makes
/// runs independent of the worker count.
class SplitStream {
public:
    SplitStream(uint64_t seed, uint64_t stream) {
        // decorrelate seed and stream id before forming the counter base
        base_ = mix(seed + 0x9E3779B97F4A7C15ULL * (stream + 1));
    }

    uint64_t next_u64() {
        counter_ += 0x9E3779B97F4A7C15ULL;
        return mix(base_ ^ counter_);
    }

    /// Uniform in (0, 1].
    double next_uniform_pos() {
        return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    }

    /// Standard normal via Box–Muller (pairs cached).
    double next_normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = next_uniform_pos();
        double u2 = next_uniform_pos();
        double r = std::sqrt(-2.0 * std::log(u1));
        double t = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(t);
        have_spare_ = true;
        return r * std::cos(t);
    }

    static uint64_t mix(uint64_t z) {
        z ^= z >> 30;
        z *= 0xBF58476D1CE4E5B9ULL;
        z ^= z >> 27;
        z *= 0x94D049BB133111EBULL;
        z ^= z >> 31;
        return z;
    }

private:
    uint64_t base_ = 0;
    uint64_t counter_ = 0;
    double spare_ = 0;
    bool have_spare_ = false;
};

}  // namespace exitperron
