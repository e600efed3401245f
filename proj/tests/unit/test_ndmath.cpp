// Copyright (c) 2026, PolyLLMem developers
// SPDX-License-Identifier: Apache-2.0

#include "oracles.hpp"
#include "polyllmem/error.hpp"
#include "polyllmem/ndmath.hpp"
#include "polyllmem/rng.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>

using namespace polyllmem;
using namespace polyllmem::nd;

namespace {

Tensor2 random_tensor(std::size_t r, std::size_t c, SplitMix64& g, double s = 1.0)
{
    Tensor2 t(r, c);
    for (auto& v : t.data()) {
        v = s * g.normal();
    }
    return t;
}

std::vector<double> random_vec(std::size_t n, SplitMix64& g, double s = 1.0)
{
    std::vector<double> v(n);
    for (auto& x : v) {
        x = s * g.normal();
    }
    return v;
}

double weighted_sum(const Tensor2& y, const Tensor2& w)
{
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        s += y.data()[i] * w.data()[i];
    }
    return s;
}

// Checks d/dp sum(R * op(p)) where `slot` is overwritten by the probe point.
double check_slot(std::span<double> slot, const std::function<double()>& objective, std::span<const double> analytic)
{
    const std::vector<double> saved(slot.begin(), slot.end());
    const auto f = [&](std::span<const double> p) {
        std::copy(p.begin(), p.end(), slot.begin());
        return objective();
    };
    const double err = grad_check(f, saved, analytic);
    std::copy(saved.begin(), saved.end(), slot.begin());
    return err;
}

constexpr int kSeeds = 20;

} // namespace

TEST_CASE("gelu values")
{
    CHECK(gelu(0.0) == 0.0);
    CHECK(std::abs(gelu(1.0) - oracle::normal_cdf(1.0)) < 1e-12);
    CHECK(std::abs(gelu(1.0) - 0.841345) < 1e-6);
    CHECK(std::abs(gelu(10.0) - 10.0) < 1e-9);
    CHECK(std::abs(gelu(-2.0) - (-2.0 * (1.0 - oracle::normal_cdf(2.0)))) < 1e-12);
    const Tensor2 x(1, 3, {0.0, 1.0, -1.0});
    const auto y = gelu(x);
    CHECK(y(0, 1) == gelu(1.0));
}

TEST_CASE("gelu derivative matches finite differences")
{
    const std::vector<double> pt{0.5};
    const std::vector<double> an{gelu_derivative(0.5)};
    CHECK(grad_check([](std::span<const double> p) { return gelu(p[0]); }, pt, an) < 1e-6);
    SplitMix64 g(1);
    for (int s = 0; s < kSeeds; ++s) {
        const auto x = random_tensor(3, 4, g, 2.0);
        const auto r = random_tensor(3, 4, g);
        const auto dx = gelu_backward(x, r);
        auto xp = x;
        const double err = check_slot(
            xp.data(), [&] { return weighted_sum(gelu(xp), r); }, dx.data());
        CHECK(err < 1e-6);
    }
}

TEST_CASE("linear forward examples")
{
    LinearLayer id = LinearLayer::zeros(2, 2);
    id.weight(0, 0) = 1.0;
    id.weight(1, 1) = 1.0;
    const Tensor2 x(2, 2, {1.5, -2.0, 3.0, 0.25});
    CHECK(linear_forward(x, id) == x);

    LinearLayer l;
    l.weight = Tensor2(2, 2, {1, 1, 0, 1});
    l.bias = {1, 0};
    CHECK(linear_forward(Tensor2(1, 2, {1, 2}), l) == Tensor2(1, 2, {4, 2}));
}

TEST_CASE("linear backward matches finite differences")
{
    SplitMix64 g(2);
    for (int s = 0; s < kSeeds; ++s) {
        LinearLayer l{random_tensor(3, 5, g), random_vec(3, g)};
        auto x = random_tensor(4, 5, g);
        const auto r = random_tensor(4, 3, g);
        LinearLayer grad = LinearLayer::zeros(3, 5);
        const auto dx = linear_backward(x, r, l, grad);
        const auto obj = [&] { return weighted_sum(linear_forward(x, l), r); };
        CHECK(check_slot(l.weight.data(), obj, grad.weight.data()) < 1e-7);
        CHECK(check_slot(l.bias, obj, grad.bias) < 1e-7);
        CHECK(check_slot(x.data(), obj, dx.data()) < 1e-7);
    }
}

TEST_CASE("linear backward accumulates")
{
    SplitMix64 g(3);
    LinearLayer l{random_tensor(2, 3, g), random_vec(2, g)};
    const auto x = random_tensor(4, 3, g);
    const auto r = random_tensor(4, 2, g);
    LinearLayer once = LinearLayer::zeros(2, 3);
    LinearLayer twice = LinearLayer::zeros(2, 3);
    (void)linear_backward(x, r, l, once);
    (void)linear_backward(x, r, l, twice);
    (void)linear_backward(x, r, l, twice);
    for (std::size_t i = 0; i < once.weight.size(); ++i) {
        CHECK(twice.weight.data()[i] == doctest::Approx(2.0 * once.weight.data()[i]));
    }
}

TEST_CASE("batch norm examples")
{
    // Zero-mean, unit-variance columns pass through up to the eps effect.
    const Tensor2 x(4, 1, {1, -1, 1, -1});
    const auto s = BatchNormState::identity(1);
    const auto y = batchnorm_forward(x, s, Mode::Train);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(std::abs(y(i, 0) - x(i, 0) / std::sqrt(1.0 + 1e-5)) < 1e-15);
    }

    auto c = BatchNormState::identity(2);
    c.beta = {0.7, -0.3};
    const Tensor2 constant(3, 2, {5, 1, 5, 2, 5, 3});
    const auto yc = batchnorm_forward(constant, c, Mode::Train);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(yc(i, 0) == 0.7);
    }

    auto e = BatchNormState::identity(1);
    e.running_mean = {2.0};
    e.running_var = {4.0};
    e.gamma = {3.0};
    e.beta = {1.0};
    const auto ye = batchnorm_forward(Tensor2(1, 1, {6.0}), e, Mode::Eval);
    CHECK(ye(0, 0) == doctest::Approx(3.0 * 4.0 / std::sqrt(4.0 + 1e-5) + 1.0).epsilon(1e-15));

    try {
        (void)batchnorm_forward(Tensor2(1, 1, {1.0}), s, Mode::Train);
        FAIL("expected an error for a single-row batch");
    } catch (const Error& err) {
        CHECK(err.code() == ErrorCode::InvalidArgument);
    }
}

TEST_CASE("batch norm train statistics and running update")
{
    SplitMix64 g(4);
    const std::size_t n = 50;
    auto x = random_tensor(n, 3, g, 3.0);
    for (std::size_t i = 0; i < n; ++i) {
        x(i, 1) += 10.0;
    }
    auto s = BatchNormState::identity(3);
    BatchNormCache cache;
    const auto y = batchnorm_forward(x, s, Mode::Train, &cache);
    for (std::size_t j = 0; j < 3; ++j) {
        double mx = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            mx += x(i, j);
        }
        mx /= n;
        double vx = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            vx += (x(i, j) - mx) * (x(i, j) - mx);
        }
        vx /= n;
        double my = 0.0;
        double vy = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            my += y(i, j);
        }
        my /= n;
        for (std::size_t i = 0; i < n; ++i) {
            vy += (y(i, j) - my) * (y(i, j) - my);
        }
        vy /= n;
        CHECK(std::abs(my) < 1e-10 * n);
        CHECK(vy == doctest::Approx(vx / (vx + 1e-5)).epsilon(1e-12));
        CHECK(cache.batch_mean[j] == doctest::Approx(mx).epsilon(1e-13));
        CHECK(cache.batch_var[j] == doctest::Approx(vx).epsilon(1e-13));
    }
    batchnorm_update_running(s, cache);
    for (std::size_t j = 0; j < 3; ++j) {
        CHECK(s.running_mean[j] == doctest::Approx(0.1 * cache.batch_mean[j]).epsilon(1e-14));
        CHECK(s.running_var[j] == doctest::Approx(0.9 + 0.1 * cache.batch_var[j]).epsilon(1e-14));
    }
}

TEST_CASE("batch norm backward matches finite differences")
{
    SplitMix64 g(5);
    for (int seed = 0; seed < kSeeds; ++seed) {
        for (Mode mode : {Mode::Train, Mode::Eval}) {
            auto s = BatchNormState::identity(3);
            s.gamma = random_vec(3, g);
            s.beta = random_vec(3, g);
            s.running_mean = random_vec(3, g);
            for (auto& v : s.running_var) {
                v = 0.5 + g.uniform();
            }
            auto x = random_tensor(6, 3, g, 2.0);
            const auto r = random_tensor(6, 3, g);
            BatchNormCache cache;
            (void)batchnorm_forward(x, s, mode, &cache);
            auto grad = BatchNormState::identity(3);
            std::fill(grad.gamma.begin(), grad.gamma.end(), 0.0);
            std::fill(grad.beta.begin(), grad.beta.end(), 0.0);
            const auto dx = batchnorm_backward(cache, s, r, grad);
            const auto obj = [&] { return weighted_sum(batchnorm_forward(x, s, mode), r); };
            CHECK(check_slot(x.data(), obj, dx.data()) < 1e-5);
            CHECK(check_slot(s.gamma, obj, grad.gamma) < 1e-5);
            CHECK(check_slot(s.beta, obj, grad.beta) < 1e-5);
        }
    }
}

TEST_CASE("dropout")
{
    SplitMix64 g(6);
    const auto x = random_tensor(5, 4, g);
    std::vector<double> mask;
    CHECK(dropout_forward(x, 0.0, Mode::Train, &g, &mask) == x);
    CHECK(mask.empty());
    CHECK(dropout_forward(x, 0.0, Mode::Eval, nullptr, &mask) == x);
    CHECK(dropout_forward(x, 0.7, Mode::Eval, nullptr, &mask) == x);

    Tensor2 big(1000, 100);
    for (auto& v : big.data()) {
        v = 1.0 + g.uniform();
    }
    const auto y = dropout_forward(big, 0.5, Mode::Train, &g, &mask);
    double mx = 0.0;
    double my = 0.0;
    std::size_t zeros = 0;
    for (std::size_t i = 0; i < big.size(); ++i) {
        mx += big.data()[i];
        my += y.data()[i];
        REQUIRE((mask[i] == 0.0 || mask[i] == 2.0));
        zeros += mask[i] == 0.0 ? 1 : 0;
        CHECK(y.data()[i] == big.data()[i] * mask[i]);
    }
    CHECK(std::abs(my / mx - 1.0) < 0.02);
    CHECK(std::abs(static_cast<double>(zeros) / 1e5 - 0.5) < 0.01);

    const auto dy = random_tensor(1000, 100, g);
    const auto dx = dropout_backward(dy, mask);
    for (std::size_t i = 0; i < dy.size(); i += 97) {
        CHECK(dx.data()[i] == dy.data()[i] * mask[i]);
    }

    for (double p : {1.0, -0.1, 1.5}) {
        try {
            (void)dropout_forward(x, p, Mode::Train, &g, &mask);
            FAIL("expected InvalidArgument");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::InvalidArgument);
        }
    }
}

TEST_CASE("lora with zero B equals the base layer")
{
    SplitMix64 g(7);
    for (int s = 0; s < kSeeds; ++s) {
        const LinearLayer base{random_tensor(4, 6, g), random_vec(4, g)};
        auto lora = LoraAdapter::zeros(2, 6, 4, 16.0);
        lora.a = random_tensor(2, 6, g);
        const auto x = random_tensor(5, 6, g);
        CHECK(lora_forward(x, base, lora) == linear_forward(x, base));
    }
}

TEST_CASE("lora scale")
{
    SplitMix64 g(8);
    const LinearLayer base{random_tensor(3, 4, g), random_vec(3, g)};
    auto lora = LoraAdapter::zeros(2, 4, 3, 2.0);
    lora.a = random_tensor(2, 4, g);
    lora.b = random_tensor(3, 2, g);
    CHECK(lora.scale() == 1.0);
    const auto x = random_tensor(3, 4, g);
    const auto y0 = linear_forward(x, base);
    const auto y1 = lora_forward(x, base, lora);
    lora.alpha = 4.0;
    const auto y2 = lora_forward(x, base, lora);
    for (std::size_t i = 0; i < y0.size(); ++i) {
        const double d1 = y1.data()[i] - y0.data()[i];
        const double d2 = y2.data()[i] - y0.data()[i];
        CHECK(d2 == doctest::Approx(2.0 * d1).epsilon(1e-12));
    }
    // scale 1: delta = (x A^T) B^T by hand
    lora.alpha = 2.0;
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t o = 0; o < 3; ++o) {
            double delta = 0.0;
            for (std::size_t k = 0; k < 2; ++k) {
                double down = 0.0;
                for (std::size_t c = 0; c < 4; ++c) {
                    down += x(i, c) * lora.a(k, c);
                }
                delta += down * lora.b(o, k);
            }
            CHECK(y1(i, o) - y0(i, o) == doctest::Approx(delta).epsilon(1e-12));
        }
    }
}

TEST_CASE("lora backward matches finite differences")
{
    SplitMix64 g(9);
    for (int s = 0; s < kSeeds; ++s) {
        LinearLayer base{random_tensor(4, 5, g), random_vec(4, g)};
        auto lora = LoraAdapter::zeros(3, 5, 4, 6.0);
        lora.a = random_tensor(3, 5, g);
        lora.b = random_tensor(4, 3, g);
        auto x = random_tensor(3, 5, g);
        const auto r = random_tensor(3, 4, g);
        Tensor2 down;
        (void)lora_forward(x, base, lora, &down);
        LinearLayer base_grad = LinearLayer::zeros(4, 5);
        auto lora_grad = LoraAdapter::zeros(3, 5, 4, 6.0);
        const auto dx = lora_backward(x, down, r, base, lora, &base_grad, lora_grad);
        const auto obj = [&] { return weighted_sum(lora_forward(x, base, lora), r); };
        CHECK(check_slot(lora.a.data(), obj, lora_grad.a.data()) < 1e-6);
        CHECK(check_slot(lora.b.data(), obj, lora_grad.b.data()) < 1e-6);
        CHECK(check_slot(base.weight.data(), obj, base_grad.weight.data()) < 1e-6);
        CHECK(check_slot(base.bias, obj, base_grad.bias) < 1e-6);
        CHECK(check_slot(x.data(), obj, dx.data()) < 1e-6);

        // Frozen base: LoRA gradients are unchanged and nothing else is touched.
        auto frozen = LoraAdapter::zeros(3, 5, 4, 6.0);
        const auto dx2 = lora_backward(x, down, r, base, lora, nullptr, frozen);
        CHECK(frozen.a == lora_grad.a);
        CHECK(frozen.b == lora_grad.b);
        CHECK(dx2 == dx);
    }
}

TEST_CASE("gated fusion examples")
{
    SplitMix64 g(10);
    const auto u = random_tensor(4, 3, g);
    const auto v = random_tensor(4, 3, g);
    auto gate = GateUnit::zeros(3);
    const auto half = gated_fuse(u, v, gate);
    for (std::size_t i = 0; i < u.size(); ++i) {
        CHECK(half.data()[i] == doctest::Approx((u.data()[i] + v.data()[i]) / 2.0).epsilon(1e-15));
    }
    std::fill(gate.bias.begin(), gate.bias.end(), 20.0);
    const auto sat = gated_fuse(u, v, gate);
    for (std::size_t i = 0; i < u.size(); ++i) {
        CHECK(std::abs(sat.data()[i] - u.data()[i]) < 1e-8);
    }
}

TEST_CASE("gated fusion is a pointwise convex combination")
{
    SplitMix64 g(11);
    for (int s = 0; s < 50; ++s) {
        const auto u = random_tensor(3, 4, g);
        const auto v = random_tensor(3, 4, g);
        GateUnit gate{random_tensor(4, 8, g, 2.0), random_vec(4, g)};
        const auto out = gated_fuse(u, v, gate);
        for (std::size_t i = 0; i < u.size(); ++i) {
            const double lo = std::min(u.data()[i], v.data()[i]);
            const double hi = std::max(u.data()[i], v.data()[i]);
            CHECK(out.data()[i] >= lo - 1e-15);
            CHECK(out.data()[i] <= hi + 1e-15);
        }
    }
}

TEST_CASE("gated fusion backward matches finite differences")
{
    SplitMix64 g(12);
    for (int s = 0; s < kSeeds; ++s) {
        auto u = random_tensor(3, 4, g);
        auto v = random_tensor(3, 4, g);
        GateUnit gate{random_tensor(4, 8, g, 0.5), random_vec(4, g)};
        const auto r = random_tensor(3, 4, g);
        Tensor2 gv;
        (void)gated_fuse(u, v, gate, &gv);
        auto grad = GateUnit::zeros(4);
        Tensor2 du;
        Tensor2 dv;
        gated_fuse_backward(u, v, gv, r, gate, grad, du, dv);
        const auto obj = [&] { return weighted_sum(gated_fuse(u, v, gate), r); };
        CHECK(check_slot(u.data(), obj, du.data()) < 1e-5);
        CHECK(check_slot(v.data(), obj, dv.data()) < 1e-5);
        CHECK(check_slot(gate.weight.data(), obj, grad.weight.data()) < 1e-5);
        CHECK(check_slot(gate.bias, obj, grad.bias) < 1e-5);
    }
}

TEST_CASE("grad_check on an exactly linear function")
{
    SplitMix64 g(13);
    const auto w = random_vec(6, g);
    const auto p = random_vec(6, g);
    const auto f = [&](std::span<const double> x) {
        double s = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            s += w[i] * x[i];
        }
        return s;
    };
    CHECK(grad_check(f, p, w) < 1e-7);
    auto wrong = w;
    wrong[3] += 0.1;
    CHECK(grad_check(f, p, wrong) > 1e-3);
}

TEST_CASE("matrix products")
{
    const Tensor2 a(2, 3, {1, 2, 3, 4, 5, 6});
    const Tensor2 b(2, 3, {1, 0, 1, 0, 1, 0});
    CHECK(matmul_nt(a, b) == Tensor2(2, 2, {4, 2, 10, 5}));
    CHECK(matmul_tn(a, b) == Tensor2(3, 3, {1, 4, 1, 2, 5, 2, 3, 6, 3}));
    const Tensor2 c(3, 1, {1, 1, 1});
    CHECK(matmul(a, c) == Tensor2(2, 1, {6, 15}));
    std::vector<double> sums(3, 1.0);
    add_column_sums(a, sums);
    CHECK(sums == std::vector<double>{6, 8, 10});
}
