// Copyright (c) 2026, PolyLLMem developers
// SPDX-License-Identifier: Apache-2.0

#include "polyllmem/ndmath.hpp"
#include "polyllmem/error.hpp"
#include "polyllmem/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace polyllmem::nd {

namespace {

std::string shape_str(const Tensor2& t)
{
    return std::to_string(t.rows()) + "x" + std::to_string(t.cols());
}

void require_shape(bool ok, const char* op, const Tensor2& a, const Tensor2& b)
{
    if (!ok) {
        fail(ErrorCode::ShapeMismatch, std::string(op) + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
    }
}

double sigmoid(double x) noexcept
{
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

void add_bias(Tensor2& y, std::span<const double> bias)
{
    for (std::size_t i = 0; i < y.rows(); ++i) {
        auto row = y.row(i);
        for (std::size_t j = 0; j < row.size(); ++j) {
            row[j] += bias[j];
        }
    }
}

} // namespace

Tensor2::Tensor2(std::size_t rows, std::size_t cols, double fill) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Tensor2::Tensor2(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data))
{
    require(data_.size() == rows * cols, ErrorCode::ShapeMismatch,
            "tensor data length " + std::to_string(data_.size()) + " does not match " + std::to_string(rows) + "x" +
                std::to_string(cols));
}

bool Tensor2::all_finite() const noexcept
{
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor2& Tensor2::operator+=(const Tensor2& o)
{
    require_shape(same_shape(o), "add", *this, o);
    for (std::size_t i = 0; i < data_.size(); ++i) {
        data_[i] += o.data_[i];
    }
    return *this;
}

Tensor2 matmul_nt(const Tensor2& a, const Tensor2& b)
{
    require_shape(a.cols() == b.cols(), "matmul_nt", a, b);
    Tensor2 out(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const auto ar = a.row(i);
        auto orow = out.row(i);
        for (std::size_t j = 0; j < b.rows(); ++j) {
            const auto br = b.row(j);
            double acc = 0.0;
            for (std::size_t k = 0; k < ar.size(); ++k) {
                acc += ar[k] * br[k];
            }
            orow[j] = acc;
        }
    }
    return out;
}

Tensor2 matmul_tn(const Tensor2& a, const Tensor2& b)
{
    require_shape(a.rows() == b.rows(), "matmul_tn", a, b);
    Tensor2 out(a.cols(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const auto ar = a.row(i);
        const auto br = b.row(i);
        for (std::size_t p = 0; p < ar.size(); ++p) {
            const double s = ar[p];
            if (s == 0.0) {
                continue;
            }
            auto orow = out.row(p);
            for (std::size_t q = 0; q < br.size(); ++q) {
                orow[q] += s * br[q];
            }
        }
    }
    return out;
}

Tensor2 matmul(const Tensor2& a, const Tensor2& b)
{
    require_shape(a.cols() == b.rows(), "matmul", a, b);
    Tensor2 out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const auto ar = a.row(i);
        auto orow = out.row(i);
        for (std::size_t k = 0; k < ar.size(); ++k) {
            const double s = ar[k];
            if (s == 0.0) {
                continue;
            }
            const auto br = b.row(k);
            for (std::size_t j = 0; j < br.size(); ++j) {
                orow[j] += s * br[j];
            }
        }
    }
    return out;
}

void add_column_sums(const Tensor2& x, std::span<double> out)
{
    require(out.size() == x.cols(), ErrorCode::ShapeMismatch, "column-sum target has wrong length");
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const auto r = x.row(i);
        for (std::size_t j = 0; j < r.size(); ++j) {
            out[j] += r[j];
        }
    }
}

double gelu(double x) noexcept
{
    return x * 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

double gelu_derivative(double x) noexcept
{
    const double cdf = 0.5 * std::erfc(-x / std::numbers::sqrt2);
    const double pdf = std::exp(-0.5 * x * x) * (0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2);
    return cdf + x * pdf;
}

Tensor2 gelu(const Tensor2& x)
{
    Tensor2 y(x.rows(), x.cols());
    auto out = y.data();
    auto in = x.data();
    for (std::size_t i = 0; i < in.size(); ++i) {
        out[i] = gelu(in[i]);
    }
    return y;
}

Tensor2 gelu_backward(const Tensor2& x, const Tensor2& dy)
{
    require_shape(x.same_shape(dy), "gelu_backward", x, dy);
    Tensor2 dx(x.rows(), x.cols());
    auto out = dx.data();
    auto in = x.data();
    auto g = dy.data();
    for (std::size_t i = 0; i < in.size(); ++i) {
        out[i] = g[i] * gelu_derivative(in[i]);
    }
    return dx;
}

LinearLayer LinearLayer::zeros(std::size_t out, std::size_t in)
{
    return {Tensor2(out, in), std::vector<double>(out, 0.0)};
}

Tensor2 linear_forward(const Tensor2& x, const LinearLayer& layer)
{
    require_shape(x.cols() == layer.in_features(), "linear_forward", x, layer.weight);
    Tensor2 y = matmul_nt(x, layer.weight);
    add_bias(y, layer.bias);
    return y;
}

Tensor2 linear_backward(const Tensor2& x, const Tensor2& dy, const LinearLayer& layer, LinearLayer& grad)
{
    require_shape(dy.cols() == layer.out_features() && dy.rows() == x.rows(), "linear_backward", dy, layer.weight);
    grad.weight += matmul_tn(dy, x);
    add_column_sums(dy, grad.bias);
    return matmul(dy, layer.weight);
}

LoraAdapter LoraAdapter::zeros(std::size_t rank, std::size_t in, std::size_t out, double alpha)
{
    return {Tensor2(rank, in), Tensor2(out, rank), alpha};
}

Tensor2 lora_forward(const Tensor2& x, const LinearLayer& base, const LoraAdapter& lora, Tensor2* down)
{
    require_shape(lora.a.cols() == base.in_features() && lora.b.rows() == base.out_features() &&
                      lora.b.cols() == lora.rank(),
                  "lora_forward", lora.a, lora.b);
    Tensor2 y = linear_forward(x, base);
    Tensor2 d = matmul_nt(x, lora.a);
    const Tensor2 delta = matmul_nt(d, lora.b);
    const double s = lora.scale();
    auto yd = y.data();
    auto dd = delta.data();
    for (std::size_t i = 0; i < yd.size(); ++i) {
        yd[i] += s * dd[i];
    }
    if (down != nullptr) {
        *down = std::move(d);
    }
    return y;
}

Tensor2 lora_backward(const Tensor2& x, const Tensor2& down, const Tensor2& dy, const LinearLayer& base,
                      const LoraAdapter& lora, LinearLayer* base_grad, LoraAdapter& lora_grad)
{
    const double s = lora.scale();
    Tensor2 scaled_dy = dy;
    for (auto& v : scaled_dy.data()) {
        v *= s;
    }
    lora_grad.b += matmul_tn(scaled_dy, down);
    const Tensor2 d_down = matmul(scaled_dy, lora.b);
    lora_grad.a += matmul_tn(d_down, x);

    Tensor2 dx;
    if (base_grad != nullptr) {
        dx = linear_backward(x, dy, base, *base_grad);
    } else {
        dx = matmul(dy, base.weight);
    }
    dx += matmul(d_down, lora.a);
    return dx;
}

BatchNormState BatchNormState::identity(std::size_t dim, double momentum, double eps)
{
    return {std::vector<double>(dim, 1.0), std::vector<double>(dim, 0.0), std::vector<double>(dim, 0.0),
            std::vector<double>(dim, 1.0), momentum, eps};
}

Tensor2 batchnorm_forward(const Tensor2& x, const BatchNormState& state, Mode mode, BatchNormCache* cache)
{
    const std::size_t n = x.rows();
    const std::size_t d = x.cols();
    require(d == state.dim(), ErrorCode::ShapeMismatch,
            "batchnorm: input has " + std::to_string(d) + " columns, state has " + std::to_string(state.dim()));
    require(state.eps > 0.0, ErrorCode::InvalidArgument, "batchnorm eps must be positive");

    std::vector<double> mean(d, 0.0);
    std::vector<double> var(d, 0.0);
    if (mode == Mode::Train) {
        require(n >= 2, ErrorCode::InvalidArgument, "batchnorm in Train mode needs at least 2 rows");
        add_column_sums(x, mean);
        for (auto& m : mean) {
            m /= static_cast<double>(n);
        }
        for (std::size_t i = 0; i < n; ++i) {
            const auto r = x.row(i);
            for (std::size_t j = 0; j < d; ++j) {
                const double c = r[j] - mean[j];
                var[j] += c * c;
            }
        }
        for (auto& v : var) {
            v /= static_cast<double>(n);
        }
    } else {
        mean = state.running_mean;
        var = state.running_var;
    }

    std::vector<double> inv_std(d);
    for (std::size_t j = 0; j < d; ++j) {
        inv_std[j] = 1.0 / std::sqrt(var[j] + state.eps);
    }
    Tensor2 xhat(n, d);
    Tensor2 y(n, d);
    for (std::size_t i = 0; i < n; ++i) {
        const auto r = x.row(i);
        auto hr = xhat.row(i);
        auto yr = y.row(i);
        for (std::size_t j = 0; j < d; ++j) {
            hr[j] = (r[j] - mean[j]) * inv_std[j];
            yr[j] = state.gamma[j] * hr[j] + state.beta[j];
        }
    }
    if (cache != nullptr) {
        cache->mode = mode;
        cache->normalized = std::move(xhat);
        cache->inv_std = std::move(inv_std);
        if (mode == Mode::Train) {
            cache->batch_mean = std::move(mean);
            cache->batch_var = std::move(var);
        } else {
            cache->batch_mean.clear();
            cache->batch_var.clear();
        }
    }
    return y;
}

void batchnorm_update_running(BatchNormState& state, const BatchNormCache& cache)
{
    if (cache.mode != Mode::Train) {
        return;
    }
    const double m = state.momentum;
    for (std::size_t j = 0; j < state.dim(); ++j) {
        state.running_mean[j] = (1.0 - m) * state.running_mean[j] + m * cache.batch_mean[j];
        state.running_var[j] = (1.0 - m) * state.running_var[j] + m * cache.batch_var[j];
    }
}

Tensor2 batchnorm_backward(const BatchNormCache& cache, const BatchNormState& state, const Tensor2& dy,
                           BatchNormState& grad)
{
    const Tensor2& xhat = cache.normalized;
    require_shape(xhat.same_shape(dy), "batchnorm_backward", xhat, dy);
    const std::size_t n = dy.rows();
    const std::size_t d = dy.cols();

    std::vector<double> sum_dxhat(d, 0.0);
    std::vector<double> sum_dxhat_xhat(d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto g = dy.row(i);
        const auto h = xhat.row(i);
        for (std::size_t j = 0; j < d; ++j) {
            grad.gamma[j] += g[j] * h[j];
            grad.beta[j] += g[j];
            const double dh = g[j] * state.gamma[j];
            sum_dxhat[j] += dh;
            sum_dxhat_xhat[j] += dh * h[j];
        }
    }

    Tensor2 dx(n, d);
    const auto nn = static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto g = dy.row(i);
        const auto h = xhat.row(i);
        auto out = dx.row(i);
        for (std::size_t j = 0; j < d; ++j) {
            const double dh = g[j] * state.gamma[j];
            if (cache.mode == Mode::Train) {
                out[j] = cache.inv_std[j] / nn * (nn * dh - sum_dxhat[j] - h[j] * sum_dxhat_xhat[j]);
            } else {
                out[j] = dh * cache.inv_std[j];
            }
        }
    }
    return dx;
}

Tensor2 dropout_forward(const Tensor2& x, double p, Mode mode, SplitMix64* rng, std::vector<double>* mask)
{
    require(p >= 0.0 && p < 1.0, ErrorCode::InvalidArgument, "dropout rate must lie in [0, 1)");
    if (mask != nullptr) {
        mask->clear();
    }
    if (mode == Mode::Eval || p == 0.0) {
        return x;
    }
    require(rng != nullptr, ErrorCode::InvalidArgument, "dropout in Train mode needs an rng");
    const double keep_scale = 1.0 / (1.0 - p);
    std::vector<double> m(x.size());
    Tensor2 y(x.rows(), x.cols());
    auto in = x.data();
    auto out = y.data();
    for (std::size_t i = 0; i < in.size(); ++i) {
        m[i] = rng->uniform() < p ? 0.0 : keep_scale;
        out[i] = in[i] * m[i];
    }
    if (mask != nullptr) {
        *mask = std::move(m);
    }
    return y;
}

Tensor2 dropout_backward(const Tensor2& dy, const std::vector<double>& mask)
{
    if (mask.empty()) {
        return dy;
    }
    require(mask.size() == dy.size(), ErrorCode::ShapeMismatch, "dropout mask does not match gradient");
    Tensor2 dx(dy.rows(), dy.cols());
    auto in = dy.data();
    auto out = dx.data();
    for (std::size_t i = 0; i < in.size(); ++i) {
        out[i] = in[i] * mask[i];
    }
    return dx;
}

GateUnit GateUnit::zeros(std::size_t hidden)
{
    return {Tensor2(hidden, 2 * hidden), std::vector<double>(hidden, 0.0)};
}

namespace {

Tensor2 concat_columns(const Tensor2& u, const Tensor2& v)
{
    Tensor2 c(u.rows(), u.cols() + v.cols());
    for (std::size_t i = 0; i < u.rows(); ++i) {
        auto cr = c.row(i);
        std::copy(u.row(i).begin(), u.row(i).end(), cr.begin());
        std::copy(v.row(i).begin(), v.row(i).end(), cr.begin() + static_cast<std::ptrdiff_t>(u.cols()));
    }
    return c;
}

} // namespace

Tensor2 gated_fuse(const Tensor2& u, const Tensor2& v, const GateUnit& gate, Tensor2* gate_values)
{
    require_shape(u.same_shape(v), "gated_fuse", u, v);
    require_shape(gate.weight.cols() == 2 * u.cols() && gate.hidden() == u.cols(), "gated_fuse", u, gate.weight);
    Tensor2 g = linear_forward(concat_columns(u, v), LinearLayer{gate.weight, gate.bias});
    Tensor2 out(u.rows(), u.cols());
    auto gd = g.data();
    auto ud = u.data();
    auto vd = v.data();
    auto od = out.data();
    for (std::size_t i = 0; i < gd.size(); ++i) {
        gd[i] = sigmoid(gd[i]);
        od[i] = gd[i] * ud[i] + (1.0 - gd[i]) * vd[i];
    }
    if (gate_values != nullptr) {
        *gate_values = std::move(g);
    }
    return out;
}

void gated_fuse_backward(const Tensor2& u, const Tensor2& v, const Tensor2& gate_values, const Tensor2& dy,
                         const GateUnit& gate, GateUnit& grad, Tensor2& du, Tensor2& dv)
{
    require_shape(u.same_shape(dy) && v.same_shape(dy) && gate_values.same_shape(dy), "gated_fuse_backward", u, dy);
    const std::size_t h = u.cols();
    Tensor2 dpre(dy.rows(), h);
    du = Tensor2(dy.rows(), h);
    dv = Tensor2(dy.rows(), h);
    {
        auto g = gate_values.data();
        auto gy = dy.data();
        auto ud = u.data();
        auto vd = v.data();
        auto dp = dpre.data();
        auto dud = du.data();
        auto dvd = dv.data();
        for (std::size_t i = 0; i < g.size(); ++i) {
            dp[i] = gy[i] * (ud[i] - vd[i]) * g[i] * (1.0 - g[i]);
            dud[i] = gy[i] * g[i];
            dvd[i] = gy[i] * (1.0 - g[i]);
        }
    }
    const Tensor2 c = concat_columns(u, v);
    grad.weight += matmul_tn(dpre, c);
    add_column_sums(dpre, grad.bias);
    const Tensor2 dc = matmul(dpre, gate.weight);
    for (std::size_t i = 0; i < dy.rows(); ++i) {
        const auto r = dc.row(i);
        auto ur = du.row(i);
        auto vr = dv.row(i);
        for (std::size_t j = 0; j < h; ++j) {
            ur[j] += r[j];
            vr[j] += r[h + j];
        }
    }
}

double grad_check(const std::function<double(std::span<const double>)>& f, std::span<const double> point,
                  std::span<const double> analytic, double eps)
{
    require(point.size() == analytic.size(), ErrorCode::ShapeMismatch, "grad_check: point and gradient lengths differ");
    std::vector<double> x(point.begin(), point.end());
    double worst = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double saved = x[i];
        x[i] = saved + eps;
        const double fp = f(x);
        x[i] = saved - eps;
        const double fm = f(x);
        x[i] = saved;
        const double numeric = (fp - fm) / (2.0 * eps);
        const double denom = std::max(1e-8, std::abs(analytic[i]) + std::abs(numeric));
        worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
    }
    return worst;
}

} // namespace polyllmem::nd
