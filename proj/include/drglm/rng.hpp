#pragma once

#include <cstdint>

namespace drglm {

/// SplitMix64 finalizer: full-avalanche 64-bit hash, the standard seeding
/// primitive for xoshiro-family generators.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ULL;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBULL;
    z ^= z >> 31;
    return z;
}

/// Deterministic random stream keyed by (seed, hi, lo).
///
/// Counter-based derivation: each key triple produces an independent
/// xoshiro256** generator, so e.g. the mask stream for (replica l, data row i)
/// is RngStream(master_seed, l, i) and is identical no matter which thread,
/// or in which order, it is drawn. This is the whole reproducibility contract:
/// serial and parallel runs agree bit for bit.
class RngStream {
public:
    RngStream() : RngStream(0, 0, 0) {}

    RngStream(std::uint64_t seed, std::uint64_t hi, std::uint64_t lo) {
        std::uint64_t s = mix64(seed + 0x9E3779B97F4A7C15ULL);
        s = mix64(s ^ (hi + 0xD1B54A32D192ED03ULL));
        s = mix64(s ^ (lo + 0x8CB92BA72F3D8DD7ULL));
        for (auto& w : state_) {
            s += 0x9E3779B97F4A7C15ULL;
            w = mix64(s);
        }
        if ((state_[0] | state_[1] | state_[2] | state_[3]) == 0) state_[0] = 1;
    }

    // xoshiro256** step (Blackman & Vigna).
    std::uint64_t next_u64() noexcept {
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

    /// Uniform on [0,1), 53-bit resolution.
    double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform on (0,1); safe input for inverse-CDF sampling.
    double uniform_pos() noexcept {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    /// Standard normal via the inverse CDF; exactly one uniform consumed per
    /// draw, which keeps stream layouts stable when code is reordered.
    double normal() noexcept;

private:
    static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
        return (x << k) | (x >> (64 - k));
    }
    std::uint64_t state_[4];
};

/// Standard normal quantile z with Phi(z) = p, for p in (0,1).
/// Wichura's AS 241 (PPND16) rational approximation; |error| < 1e-15,
/// comfortably inside the 1e-8 contract for the tuning rule.
double normal_quantile(double p);

/// Standard normal CDF (via erfc); used for cross-checks and coverage math.
double normal_cdf(double z);

inline double RngStream::normal() noexcept { return normal_quantile(uniform_pos()); }

}  // namespace drglm
