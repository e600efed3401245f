// Copyright (c) 2026, PolyLLMem developers
// SPDX-License-Identifier: Apache-2.0

#include "fixtures.hpp"
#include "oracles.hpp"
#include "polyllmem/error.hpp"
#include "polyllmem/rng.hpp"
#include "polyllmem/trainer.hpp"

#include <doctest.h>

#include <cmath>

using namespace polyllmem;
using namespace polyllmem::train;

namespace {

oracle::Matrix to_rows(const nd::Tensor2& x)
{
    oracle::Matrix m(x.rows());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        m[i].assign(x.row(i).begin(), x.row(i).end());
    }
    return m;
}

} // namespace

TEST_CASE("ridge matches the normal-equation oracle")
{
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const auto x = fixtures::random_rows(50, 5, seed);
        SplitMix64 g(seed + 100);
        std::vector<double> y(50);
        for (auto& v : y) {
            v = g.normal();
        }
        for (double lambda : {0.0, 1e-3, 0.5, 10.0}) {
            const auto w = ridge_fit(x, y, lambda);
            const auto ref = oracle::ridge_normal_equations(to_rows(x), y, lambda);
            for (std::size_t j = 0; j < 5; ++j) {
                CHECK(std::abs(w[j] - ref[j]) < 1e-8);
            }
        }
    }
}

TEST_CASE("ridge wide systems use the same solution")
{
    const auto x = fixtures::random_rows(8, 20, 3);
    SplitMix64 g(4);
    std::vector<double> y(8);
    for (auto& v : y) {
        v = g.normal();
    }
    const auto w = ridge_fit(x, y, 0.7);
    const auto ref = oracle::ridge_normal_equations(to_rows(x), y, 0.7);
    for (std::size_t j = 0; j < 20; ++j) {
        CHECK(std::abs(w[j] - ref[j]) < 1e-8);
    }
}

TEST_CASE("square invertible system interpolates at lambda 0")
{
    const auto x = fixtures::random_rows(6, 6, 5);
    const std::vector<double> y{1, -2, 3, 0.5, 4, -1};
    const auto w = ridge_fit(x, y, 0.0);
    const auto p = ridge_predict(x, w);
    for (std::size_t i = 0; i < 6; ++i) {
        CHECK(std::abs(p[i] - y[i]) < 1e-10);
    }
    CHECK(r2(y, p) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("shrinkage limit")
{
    const auto x = fixtures::random_rows(30, 4, 6);
    std::vector<double> y(30, 0.0);
    for (std::size_t i = 0; i < 30; ++i) {
        y[i] = x(i, 0) - 2.0 * x(i, 3);
    }
    double prev = INFINITY;
    for (double lambda : {1e-2, 1e2, 1e5, 1e9}) {
        const auto w = ridge_fit(x, y, lambda);
        double norm = 0.0;
        for (double v : w) {
            norm += v * v;
        }
        norm = std::sqrt(norm);
        CHECK(norm < prev);
        prev = norm;
    }
    CHECK(prev < 1e-6);
}

TEST_CASE("rank-deficient system at lambda 0 is singular")
{
    auto x = fixtures::random_rows(10, 3, 7);
    for (std::size_t i = 0; i < 10; ++i) {
        x(i, 2) = 2.0 * x(i, 0);
    }
    const std::vector<double> y(10, 1.0);
    try {
        (void)ridge_fit(x, y, 0.0);
        FAIL("expected Singular");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::Singular);
    }
    CHECK_NOTHROW((void)ridge_fit(x, y, 1.0));
}

TEST_CASE("ridge baseline recovers a planted signal")
{
    fixtures::PlantedOptions o;
    o.n = 300;
    const auto set = fixtures::planted_set(7, o);
    const auto r = ridge_baseline(set.data);
    CHECK(r.model == "ridge");
    CHECK(r.folds.size() == 5);
    CHECK(r.r2_mean > 0.9);
    CHECK(report_to_json(ridge_baseline(set.data)) == report_to_json(r));
    for (const auto& f : r.folds) {
        CHECK(f.best_epoch >= 1);
        CHECK(f.best_epoch <= 7);
    }

    o.pure_noise = true;
    const auto noise = fixtures::planted_set(7, o);
    CHECK(ridge_baseline(noise.data).r2_mean < 0.1);
}
