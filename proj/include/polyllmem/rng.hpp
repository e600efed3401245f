// Copyright (c) 2026, PolyLLMem developers
// SPDX-License-Identifier: Apache-2.0
//
// Counter-based deterministic randomness. Every random quantity in the
// library is drawn from a SplitMix64 stream whose key is derived from the
// user seed and a stage label, so results never depend on call order across
// independent jobs.

#ifndef POLYLLMEM_RNG_HPP
#define POLYLLMEM_RNG_HPP

#include <cstddef>
#include <cstdint>
#include <string_view>

namespace polyllmem {

inline constexpr std::uint64_t kGoldenGamma = 0x9e3779b97f4a7c15ULL;

/// SplitMix64 output finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept
{
    z = (z ^ (z >> 30U)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27U)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31U);
}

/// 64-bit FNV-1a over raw bytes.
std::uint64_t fnv1a64(std::string_view bytes) noexcept;

/// Key for a named stage: mix64(seed ^ fnv1a64(label)).
std::uint64_t derive_seed(std::uint64_t seed, std::string_view label) noexcept;

/// Key for an indexed job, e.g. (fold, grid cell).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) noexcept;

/// SplitMix64 generator. The i-th output (0-based) is mix64(key + (i+1)*gamma).
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t key) noexcept : state_(key) {}

    std::uint64_t next() noexcept
    {
        state_ += kGoldenGamma;
        return mix64(state_);
    }

    /// Uniform on (0, 1]: ((x >> 11) + 1) * 2^-53.
    double uniform_open() noexcept;

    /// Uniform on [0, 1): (x >> 11) * 2^-53.
    double uniform() noexcept;

    /// Standard normal via Box-Muller. Draws u1 = uniform_open(), u2 = uniform()
    /// and yields r*cos(2*pi*u2) then r*sin(2*pi*u2) on the following call.
    double normal() noexcept;

    /// Unbiased integer in [0, n) by rejection. n must be positive.
    std::uint64_t below(std::uint64_t n) noexcept;

private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace polyllmem

#endif // POLYLLMEM_RNG_HPP
