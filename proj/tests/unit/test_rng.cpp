// Copyright (c) 2026, PolyLLMem developers
// SPDX-License-Identifier: Apache-2.0

#include "polyllmem/rng.hpp"

#include <doctest.h>

#include <cmath>
#include <vector>

using polyllmem::SplitMix64;

TEST_CASE("splitmix64 reference stream from key 0")
{
    SplitMix64 g(0);
    CHECK(g.next() == 0xe220a8397b1dcdafULL);
    CHECK(g.next() == 0x6e789e6aa1b965f4ULL);
    CHECK(g.next() == 0x06c45d188009454fULL);
}

TEST_CASE("fnv1a64 reference values")
{
    CHECK(polyllmem::fnv1a64("") == 0xcbf29ce484222325ULL);
    CHECK(polyllmem::fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
    CHECK(polyllmem::fnv1a64("foobar") == 0x85944171f73967e8ULL);
}

TEST_CASE("derived seeds separate labels and indices")
{
    CHECK(polyllmem::derive_seed(42, "split") == polyllmem::derive_seed(42, "split"));
    CHECK(polyllmem::derive_seed(42, "split") != polyllmem::derive_seed(42, "model-init"));
    CHECK(polyllmem::derive_seed(42, "split") != polyllmem::derive_seed(43, "split"));
    CHECK(polyllmem::derive_seed(1, 0, 1) != polyllmem::derive_seed(1, 1, 0));
    CHECK(polyllmem::derive_seed(1, 2, 3) == polyllmem::derive_seed(1, 2, 3));
}

TEST_CASE("uniform ranges")
{
    SplitMix64 g(7);
    for (int i = 0; i < 100000; ++i) {
        const double u = g.uniform();
        const double o = g.uniform_open();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        REQUIRE(o > 0.0);
        REQUIRE(o <= 1.0);
    }
}

TEST_CASE("below is in range and roughly uniform")
{
    SplitMix64 g(11);
    const std::uint64_t n = 7;
    std::vector<int> counts(n, 0);
    const int draws = 70000;
    for (int i = 0; i < draws; ++i) {
        const auto k = g.below(n);
        REQUIRE(k < n);
        ++counts[k];
    }
    double chi2 = 0.0;
    for (int c : counts) {
        const double e = draws / static_cast<double>(n);
        chi2 += (c - e) * (c - e) / e;
    }
    // 6 degrees of freedom; 0.999 quantile is 22.46
    CHECK(chi2 < 22.46);
    CHECK(g.below(1) == 0);
}

TEST_CASE("normal moments")
{
    SplitMix64 g(3);
    const int n = 200000;
    double s = 0.0;
    double s2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double z = g.normal();
        s += z;
        s2 += z * z;
    }
    const double mean = s / n;
    const double var = s2 / n - mean * mean;
    CHECK(std::abs(mean) < 0.01);
    CHECK(std::abs(var - 1.0) < 0.02);
}

TEST_CASE("normal pairs come from one Box-Muller draw")
{
    SplitMix64 a(99);
    SplitMix64 b(99);
    const double u1 = b.uniform_open();
    const double u2 = b.uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double two_pi = 2.0 * 3.14159265358979323846;
    CHECK(a.normal() == doctest::Approx(r * std::cos(two_pi * u2)).epsilon(1e-15));
    CHECK(a.normal() == doctest::Approx(r * std::sin(two_pi * u2)).epsilon(1e-15));
}
