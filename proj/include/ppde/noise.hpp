#pragma once

#include <array>
#include <cmath>
#include <cstdint>

#include "ppde/stats.hpp"

namespace ppde {

namespace philox {

// Philox 4x32-10 (Salmon et al., SC 2011).  Counter-based: every draw is a
// pure function of (key, counter), so path i / step j / mode k is addressable
// without sequential state.
inline constexpr std::uint32_t kW32A = 0x9E3779B9u;
inline constexpr std::uint32_t kW32B = 0xBB67AE85u;
inline constexpr std::uint32_t kM4x32A = 0xD2511F53u;
inline constexpr std::uint32_t kM4x32B = 0xCD9E8D57u;

inline void round_once(std::array<std::uint32_t, 4>& ctr, std::array<std::uint32_t, 2>& key) {
    const std::uint64_t p0 = static_cast<std::uint64_t>(kM4x32A) * ctr[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(kM4x32B) * ctr[2];
    const std::uint32_t lo0 = static_cast<std::uint32_t>(p0);
    const std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const std::uint32_t lo1 = static_cast<std::uint32_t>(p1);
    const std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kW32A;
    key[1] += kW32B;
}

inline std::array<std::uint32_t, 4> block(std::array<std::uint32_t, 4> ctr,
                                          std::array<std::uint32_t, 2> key) {
    for (int r = 0; r < 10; ++r) round_once(ctr, key);
    return ctr;
}

} // namespace philox

/// One 64-bit word fully determined by (seed, path, step, mode).
inline std::uint64_t counter_word(std::uint64_t seed, std::uint64_t path, std::uint32_t step,
                                  std::uint32_t mode) {
    const std::array<std::uint32_t, 4> ctr = {static_cast<std::uint32_t>(path),
                                              static_cast<std::uint32_t>(path >> 32), step, mode};
    const std::array<std::uint32_t, 2> key = {static_cast<std::uint32_t>(seed),
                                              static_cast<std::uint32_t>(seed >> 32)};
    const auto out = philox::block(ctr, key);
    return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

/// Uniform in (0,1) with 53 significant bits, never exactly 0 or 1.
inline double uniform_from_word(std::uint64_t w) {
    return (static_cast<double>(w >> 11) + 0.5) * 0x1.0p-53;
}

/// Derives an unrelated sub-seed from a base seed and a purpose tag.
/// SplitMix64 finalizer.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (tag + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

/// Addressable noise source for one simulated path.  Gaussian increments are
/// N(0, dt); the Bernoulli mode yields +-sqrt(dt) with equal probability and
/// exists so that exact tree enumeration has the same law as the simulator.
struct NoiseStream {
    std::uint64_t seed = 0;
    std::uint64_t path_index = 0;
    bool bernoulli = false;

    double gauss(int step, int mode) const {
        return inverse_normal_cdf(uniform_from_word(
            counter_word(seed, path_index, static_cast<std::uint32_t>(step),
                         static_cast<std::uint32_t>(mode))));
    }

    bool coin(int step, int mode) const {
        return (counter_word(seed, path_index, static_cast<std::uint32_t>(step),
                             static_cast<std::uint32_t>(mode)) &
                1ull) != 0;
    }

    /// Brownian increment over one step of size dt for the given mode.
    double increment(int step, int mode, double dt) const {
        const double root = std::sqrt(dt);
        if (bernoulli) return coin(step, mode) ? root : -root;
        return root * gauss(step, mode);
    }

    NoiseStream for_path(std::uint64_t index) const { return {seed, index, bernoulli}; }
};

} // namespace ppde
