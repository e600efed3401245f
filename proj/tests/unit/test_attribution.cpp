// Copyright (c) 2026, PolyLLMem developers
// SPDX-License-Identifier: Apache-2.0

#include "fixtures.hpp"
#include "oracles.hpp"
#include "polyllmem/attribution.hpp"
#include "polyllmem/error.hpp"
#include "polyllmem/rng.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

using namespace polyllmem;
using namespace polyllmem::attr;
using nd::Tensor2;

namespace {

ErrorCode code_of(const std::function<void()>& fn)
{
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an error");
    return ErrorCode::InvalidArgument;
}

std::vector<std::string> star_tokens(std::size_t n)
{
    std::vector<std::string> t(n, "C");
    t.front() = "[*]";
    t.back() = "[*]";
    return t;
}

Attribution with_scores(std::vector<std::string> tokens, std::vector<double> scores)
{
    Attribution a;
    a.tokens = std::move(tokens);
    a.scores = std::move(scores);
    return a;
}

double median(std::vector<double> v)
{
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
}

} // namespace

TEST_CASE("integrated gradients is exact for a linear probe")
{
    SplitMix64 g(1);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t dim = 3 + g.below(10);
        const std::size_t n = 1 + g.below(8);
        std::vector<double> w(dim);
        for (auto& v : w) {
            v = g.normal();
        }
        const LinearProbe probe(w, g.normal());
        const auto x = fixtures::random_rows(n, dim, g.next());
        const auto tokens = star_tokens(n);
        for (std::size_t steps : {1U, 2U, 7U, 64U, 256U}) {
            const auto a = integrated_gradients(probe, x, tokens, steps);
            for (std::size_t k = 0; k < n; ++k) {
                double expected = 0.0;
                for (std::size_t d = 0; d < dim; ++d) {
                    expected += w[d] * x(k, d);
                }
                expected /= static_cast<double>(n);
                CHECK(std::abs(a.scores[k] - expected) < 1e-12);
            }
            CHECK(a.completeness_gap < 1e-12);
            CHECK(a.steps == steps);
        }
    }
}

TEST_CASE("zero token vectors get zero scores")
{
    const LinearProbe probe({1.0, -2.0, 3.0}, 0.5);
    const Tensor2 x(4, 3, 0.0);
    const auto a = integrated_gradients(probe, x, star_tokens(4));
    for (double s : a.scores) {
        CHECK(s == 0.0);
    }
    CHECK(a.output == a.baseline_output);

    const auto p = fixtures::random_params(fixtures::tiny_config(), 3);
    const ModelFunction f(p, std::vector<double>(5, 0.3));
    const auto b = integrated_gradients(f, Tensor2(3, 6, 0.0), star_tokens(3));
    for (double s : b.scores) {
        CHECK(s == 0.0);
    }
}

TEST_CASE("integrated gradients argument errors")
{
    const LinearProbe probe({1.0, 2.0});
    const auto x = fixtures::random_rows(3, 2, 1);
    CHECK(code_of([&] { integrated_gradients(probe, x, star_tokens(3), 0); }) == ErrorCode::InvalidArgument);
    CHECK(code_of([&] { integrated_gradients(probe, x, star_tokens(2)); }) == ErrorCode::ShapeMismatch);
    CHECK(code_of([&] { integrated_gradients(probe, fixtures::random_rows(3, 4, 1), star_tokens(3)); }) ==
          ErrorCode::ShapeMismatch);
}

TEST_CASE("model function gradient matches finite differences")
{
    const auto p = fixtures::random_params(fixtures::tiny_config(), 4);
    std::vector<double> structure(5);
    SplitMix64 g(5);
    for (auto& v : structure) {
        v = g.normal();
    }
    const ModelFunction f(p, structure);
    auto x = fixtures::random_rows(1, 6, 9);
    const auto grad = f.gradient(x);
    const std::vector<double> point(x.data().begin(), x.data().end());
    const auto value = [&](std::span<const double> q) {
        std::copy(q.begin(), q.end(), x.data().begin());
        return f.value(x)[0];
    };
    CHECK(nd::grad_check(value, point, grad.data()) < 1e-5);

    const auto rows = fixtures::random_rows(1, 6, 9);
    Tensor2 uni(1, 5, structure);
    CHECK(f.value(rows)[0] == model::forward(p, rows, uni, nd::Mode::Eval)[0]);
}

TEST_CASE("completeness gap shrinks with more steps")
{
    std::vector<double> at_m;
    std::vector<double> at_2m;
    for (std::uint64_t seed = 1; seed <= 15; ++seed) {
        const auto p = fixtures::random_params(fixtures::tiny_config(), seed);
        std::vector<double> structure(5);
        SplitMix64 g(seed);
        for (auto& v : structure) {
            v = g.normal();
        }
        const ModelFunction f(p, structure);
        const auto x = fixtures::random_rows(5, 6, seed * 11);
        const auto tokens = star_tokens(5);
        const auto a = integrated_gradients(f, x, tokens, 8);
        const auto b = integrated_gradients(f, x, tokens, 16);
        const auto c = integrated_gradients(f, x, tokens, 256);
        at_m.push_back(a.completeness_gap);
        at_2m.push_back(b.completeness_gap);
        const double delta = std::abs(c.output - c.baseline_output);
        if (delta > 1e-3) {
            CHECK(c.completeness_gap / delta < 1e-2);
        }
    }
    CHECK(median(at_2m) <= median(at_m));
}

TEST_CASE("normalize by the first star token")
{
    const auto a = normalize_by_star(with_scores({"C", "[*]", "O", "[*]"}, {0.2, 0.5, -0.1, 0.25}));
    REQUIRE(a.normalized_scores.size() == 4);
    CHECK(a.normalized_scores[1] == 1.0);
    CHECK(a.normalized_scores[0] == doctest::Approx(0.4).epsilon(1e-15));
    CHECK(a.normalized_scores[3] == 0.5);
    CHECK(a.scores[1] == 0.5);

    CHECK(code_of([] { normalize_by_star(with_scores({"C", "O"}, {1.0, 2.0})); }) == ErrorCode::InvalidArgument);
    CHECK(code_of([] { normalize_by_star(with_scores({"[*]", "O"}, {0.0, 2.0})); }) == ErrorCode::ZeroReference);
}

TEST_CASE("normalization is invariant under global rescaling")
{
    SplitMix64 g(6);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> s(6);
        for (auto& v : s) {
            v = g.normal();
        }
        const auto tokens = star_tokens(6);
        const auto base = normalize_by_star(with_scores(tokens, s));
        for (double c : {2.0, 0.25, -8.0, 1024.0}) {
            auto scaled = s;
            for (auto& v : scaled) {
                v *= c;
            }
            CHECK(normalize_by_star(with_scores(tokens, scaled)).normalized_scores == base.normalized_scores);
        }
        for (double c : {3.0, -0.7, 1e-3}) {
            auto scaled = s;
            for (auto& v : scaled) {
                v *= c;
            }
            const auto n = normalize_by_star(with_scores(tokens, scaled)).normalized_scores;
            for (std::size_t i = 0; i < n.size(); ++i) {
                CHECK(n[i] == doctest::Approx(base.normalized_scores[i]).epsilon(1e-14));
            }
        }
    }
}

TEST_CASE("merged attribution keeps the totals")
{
    auto a = with_scores({"[", "*]", "CC", "([", "*]"}, {0.25, 0.5, -1.0, 0.75, 0.125});
    a.output = 3.0;
    a.baseline_output = 1.0;
    a.completeness_gap = 0.01;
    const std::vector<std::string> raw{"[", "*]", "CC", "([", "*]"};
    const std::vector<std::string> target{"[*]", "C", "C", "(", "[*]"};
    const auto m = merge_attribution(a, psmiles::build_merge_map(raw, target));
    CHECK(m.tokens == target);
    CHECK(m.scores == std::vector<double>{0.75, -0.5, -0.5, 0.375, 0.5});
    CHECK(std::accumulate(m.scores.begin(), m.scores.end(), 0.0) ==
          std::accumulate(a.scores.begin(), a.scores.end(), 0.0));
    CHECK(m.output == 3.0);
    CHECK(m.completeness_gap == 1.375);
}

TEST_CASE("cosine similarity")
{
    const Tensor2 v(4, 2, {1, 0, 2, 0, 0, 3, -1, 0});
    const std::vector<std::string> t{"a", "b", "c", "d"};
    const auto s = cosine_matrix(v, t);
    CHECK(s.matrix(0, 1) == 1.0);
    CHECK(s.matrix(0, 2) == 0.0);
    CHECK(s.matrix(0, 3) == -1.0);
    CHECK(s.threshold == 0.5);
    REQUIRE(s.edges.size() == 1);
    CHECK(s.edges[0].i == 0);
    CHECK(s.edges[0].j == 1);
    CHECK(s.edges[0].value == 1.0);
}

TEST_CASE("cosine matrix invariants")
{
    SplitMix64 g(7);
    auto v = fixtures::random_rows(6, 5, 8);
    const std::vector<std::string> t(6, "x");
    const auto s = cosine_matrix(v, t, 0.2);
    for (std::size_t i = 0; i < 6; ++i) {
        CHECK(s.matrix(i, i) == doctest::Approx(1.0).epsilon(1e-15));
        for (std::size_t j = 0; j < 6; ++j) {
            CHECK(s.matrix(i, j) == s.matrix(j, i));
        }
    }
    for (const auto& e : s.edges) {
        CHECK(e.i < e.j);
        CHECK(e.value >= 0.2);
        CHECK(e.value == s.matrix(e.i, e.j));
    }
    std::size_t expected_edges = 0;
    for (std::size_t i = 0; i < 6; ++i) {
        for (std::size_t j = i + 1; j < 6; ++j) {
            expected_edges += s.matrix(i, j) >= 0.2 ? 1 : 0;
        }
    }
    CHECK(s.edges.size() == expected_edges);

    for (std::size_t d = 0; d < 5; ++d) {
        v(2, d) *= 3.7;
    }
    const auto r = cosine_matrix(v, t, 0.2);
    for (std::size_t i = 0; i < s.matrix.size(); ++i) {
        CHECK(r.matrix.data()[i] == doctest::Approx(s.matrix.data()[i]).epsilon(1e-14));
    }

    for (std::size_t d = 0; d < 5; ++d) {
        v(4, d) = 0.0;
    }
    const auto z = cosine_matrix(v, t, 0.2);
    CHECK_FALSE(z.defined[4]);
    CHECK(z.defined[3]);
    CHECK(std::isnan(z.matrix(4, 1)));
    CHECK(std::isnan(z.matrix(1, 4)));
    CHECK(std::isnan(z.matrix(4, 4)));
    for (const auto& e : z.edges) {
        CHECK(e.i != 4);
        CHECK(e.j != 4);
    }
}

TEST_CASE("pca on collinear points")
{
    const Tensor2 x(4, 2, {0, 0, 1, 2, 2, 4, 3, 6});
    const auto p = pca_reduce(x, 1);
    CHECK(p.explained_ratio[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(p.components(0, 1) > 0.0);
    CHECK(p.components(0, 0) == doctest::Approx(1.0 / std::sqrt(5.0)).epsilon(1e-12));
    CHECK(p.mean == std::vector<double>{1.5, 3.0});
}

TEST_CASE("pca with a full basis reconstructs the data")
{
    const auto x = fixtures::random_rows(12, 4, 9);
    const auto p = pca_reduce(x, 4);
    for (std::size_t i = 0; i < 12; ++i) {
        for (std::size_t d = 0; d < 4; ++d) {
            double rec = p.mean[d];
            for (std::size_t k = 0; k < 4; ++k) {
                rec += p.projected(i, k) * p.components(k, d);
            }
            CHECK(std::abs(rec - x(i, d)) < 1e-10);
        }
    }
    double total = 0.0;
    for (double r : p.explained_ratio) {
        total += r;
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("pca matches the Jacobi eigen oracle")
{
    for (std::uint64_t seed : {10U, 11U, 12U}) {
        const auto x = fixtures::random_rows(50, 10, seed);
        const auto p = pca_reduce(x, 3);

        std::vector<double> mean(10, 0.0);
        for (std::size_t i = 0; i < 50; ++i) {
            for (std::size_t d = 0; d < 10; ++d) {
                mean[d] += x(i, d) / 50.0;
            }
        }
        oracle::Matrix cov(10, std::vector<double>(10, 0.0));
        for (std::size_t i = 0; i < 50; ++i) {
            for (std::size_t a = 0; a < 10; ++a) {
                for (std::size_t b = 0; b < 10; ++b) {
                    cov[a][b] += (x(i, a) - mean[a]) * (x(i, b) - mean[b]) / 49.0;
                }
            }
        }
        double trace = 0.0;
        for (std::size_t a = 0; a < 10; ++a) {
            trace += cov[a][a];
        }
        auto eig = oracle::jacobi(cov);
        for (std::size_t k = 0; k < 3; ++k) {
            auto& vec = eig.vectors[k];
            std::size_t arg = 0;
            for (std::size_t d = 1; d < 10; ++d) {
                if (std::abs(vec[d]) > std::abs(vec[arg])) {
                    arg = d;
                }
            }
            if (vec[arg] < 0.0) {
                for (auto& v : vec) {
                    v = -v;
                }
            }
            CHECK(std::abs(p.explained_variance[k] - eig.values[k]) < 1e-8);
            CHECK(std::abs(p.explained_ratio[k] - eig.values[k] / trace) < 1e-8);
            for (std::size_t d = 0; d < 10; ++d) {
                CHECK(std::abs(p.components(k, d) - vec[d]) < 1e-8);
            }
            for (std::size_t i = 0; i < 50; ++i) {
                double proj = 0.0;
                for (std::size_t d = 0; d < 10; ++d) {
                    proj += (x(i, d) - mean[d]) * vec[d];
                }
                CHECK(std::abs(p.projected(i, k) - proj) < 1e-8);
            }
        }
    }
}

TEST_CASE("pca with more columns than rows")
{
    const auto x = fixtures::random_rows(6, 20, 13);
    const auto p = pca_reduce(x, 3);
    const auto p_all = pca_reduce(x, 5);
    for (std::size_t k = 0; k < 3; ++k) {
        CHECK(p.explained_variance[k] == doctest::Approx(p_all.explained_variance[k]).epsilon(1e-12));
        double norm = 0.0;
        for (std::size_t d = 0; d < 20; ++d) {
            norm += p.components(k, d) * p.components(k, d);
        }
        CHECK(norm == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("pca argument errors")
{
    const auto x = fixtures::random_rows(5, 3, 1);
    CHECK(code_of([&] { pca_reduce(x, 0); }) == ErrorCode::InvalidArgument);
    CHECK(code_of([&] { pca_reduce(x, 4); }) == ErrorCode::InvalidArgument);
    CHECK(code_of([&] { pca_reduce(fixtures::random_rows(1, 3, 1), 1); }) == ErrorCode::InvalidArgument);
}
