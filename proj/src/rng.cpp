// Copyright (c) 2026, PolyLLMem developers
// SPDX-License-Identifier: Apache-2.0

#include "polyllmem/rng.hpp"

#include <cmath>
#include <numbers>

namespace polyllmem {

std::uint64_t fnv1a64(std::string_view bytes) noexcept
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view label) noexcept
{
    return mix64(seed ^ fnv1a64(label));
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) noexcept
{
    return mix64(seed ^ mix64(a * kGoldenGamma + mix64(b + 1)));
}

double SplitMix64::uniform_open() noexcept
{
    return static_cast<double>((next() >> 11U) + 1U) * 0x1.0p-53;
}

double SplitMix64::uniform() noexcept
{
    return static_cast<double>(next() >> 11U) * 0x1.0p-53;
}

double SplitMix64::normal() noexcept
{
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    const double u1 = uniform_open();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
}

std::uint64_t SplitMix64::below(std::uint64_t n) noexcept
{
    const std::uint64_t threshold = (0 - n) % n;
    for (;;) {
        const std::uint64_t x = next();
        if (x >= threshold) {
            return x % n;
        }
    }
}

} // namespace polyllmem
