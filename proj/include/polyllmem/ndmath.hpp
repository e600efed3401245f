// Copyright (c) 2026, PolyLLMem developers
// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major f64 tensors and the layers of the fusion network, each with
// an explicit forward and backward pass. Backward functions accumulate
// parameter gradients into a gradient object of the same type as the layer.

#ifndef POLYLLMEM_NDMATH_HPP
#define POLYLLMEM_NDMATH_HPP

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace polyllmem {
class SplitMix64;
}

namespace polyllmem::nd {

enum class Mode { Train, Eval };

class Tensor2 {
public:
    Tensor2() = default;
    Tensor2(std::size_t rows, std::size_t cols, double fill = 0.0);
    Tensor2(std::size_t rows, std::size_t cols, std::vector<double> data);

    [[nodiscard]] std::size_t rows() const noexcept { return rows_; }
    [[nodiscard]] std::size_t cols() const noexcept { return cols_; }
    [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }

    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    std::span<double> data() noexcept { return data_; }
    [[nodiscard]] std::span<const double> data() const noexcept { return data_; }
    std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    [[nodiscard]] std::span<const double> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

    [[nodiscard]] bool all_finite() const noexcept;
    [[nodiscard]] bool same_shape(const Tensor2& o) const noexcept { return rows_ == o.rows_ && cols_ == o.cols_; }

    Tensor2& operator+=(const Tensor2& o);

    friend bool operator==(const Tensor2&, const Tensor2&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// a * b^T
Tensor2 matmul_nt(const Tensor2& a, const Tensor2& b);
/// a^T * b
Tensor2 matmul_tn(const Tensor2& a, const Tensor2& b);
/// a * b
Tensor2 matmul(const Tensor2& a, const Tensor2& b);

/// Column sums accumulated into out (size cols).
void add_column_sums(const Tensor2& x, std::span<double> out);

// GELU with the exact normal CDF.
double gelu(double x) noexcept;
double gelu_derivative(double x) noexcept;
Tensor2 gelu(const Tensor2& x);
Tensor2 gelu_backward(const Tensor2& x, const Tensor2& dy);

struct LinearLayer {
    Tensor2 weight;             // out x in
    std::vector<double> bias;   // out

    static LinearLayer zeros(std::size_t out, std::size_t in);
    [[nodiscard]] std::size_t in_features() const noexcept { return weight.cols(); }
    [[nodiscard]] std::size_t out_features() const noexcept { return weight.rows(); }
};

/// y = x W^T + b
Tensor2 linear_forward(const Tensor2& x, const LinearLayer& layer);
/// Accumulates dW, db into grad and returns dx.
Tensor2 linear_backward(const Tensor2& x, const Tensor2& dy, const LinearLayer& layer, LinearLayer& grad);

/// Low-rank update B A scaled by alpha / rank.
struct LoraAdapter {
    Tensor2 a;  // rank x in
    Tensor2 b;  // out x rank
    double alpha = 1.0;

    static LoraAdapter zeros(std::size_t rank, std::size_t in, std::size_t out, double alpha);
    [[nodiscard]] std::size_t rank() const noexcept { return a.rows(); }
    [[nodiscard]] double scale() const noexcept { return alpha / static_cast<double>(rank()); }
};

/// y = base(x) + scale * (x A^T) B^T. `down` receives x A^T for the backward pass.
Tensor2 lora_forward(const Tensor2& x, const LinearLayer& base, const LoraAdapter& lora, Tensor2* down = nullptr);

/// Returns dx. Base gradients are skipped when base_grad is null (frozen base).
Tensor2 lora_backward(const Tensor2& x, const Tensor2& down, const Tensor2& dy, const LinearLayer& base,
                      const LoraAdapter& lora, LinearLayer* base_grad, LoraAdapter& lora_grad);

struct BatchNormState {
    std::vector<double> gamma;
    std::vector<double> beta;
    std::vector<double> running_mean;
    std::vector<double> running_var;
    double momentum = 0.1;
    double eps = 1e-5;

    /// gamma = 1, beta = 0, running mean 0, running var 1.
    static BatchNormState identity(std::size_t dim, double momentum = 0.1, double eps = 1e-5);
    [[nodiscard]] std::size_t dim() const noexcept { return gamma.size(); }
};

struct BatchNormCache {
    Mode mode = Mode::Eval;
    Tensor2 normalized;               // x-hat
    std::vector<double> inv_std;      // per column
    std::vector<double> batch_mean;   // Train only
    std::vector<double> batch_var;    // Train only, biased
};

/// Train: batch statistics (needs n >= 2). Eval: running statistics.
Tensor2 batchnorm_forward(const Tensor2& x, const BatchNormState& state, Mode mode, BatchNormCache* cache = nullptr);
/// r <- (1 - momentum) r + momentum * batch, from a Train-mode cache.
void batchnorm_update_running(BatchNormState& state, const BatchNormCache& cache);
/// Accumulates dgamma, dbeta into grad and returns dx.
Tensor2 batchnorm_backward(const BatchNormCache& cache, const BatchNormState& state, const Tensor2& dy,
                           BatchNormState& grad);

/// Inverted dropout. `mask` receives the per-element multiplier (empty in the
/// identity cases). Throws InvalidArgument unless 0 <= p < 1.
Tensor2 dropout_forward(const Tensor2& x, double p, Mode mode, SplitMix64* rng, std::vector<double>* mask);
Tensor2 dropout_backward(const Tensor2& dy, const std::vector<double>& mask);

struct GateUnit {
    Tensor2 weight;            // h x 2h
    std::vector<double> bias;  // h

    static GateUnit zeros(std::size_t hidden);
    [[nodiscard]] std::size_t hidden() const noexcept { return weight.rows(); }
};

/// g = sigmoid([u, v] Wg^T + bg); out = g * u + (1 - g) * v, per dimension.
Tensor2 gated_fuse(const Tensor2& u, const Tensor2& v, const GateUnit& gate, Tensor2* gate_values = nullptr);
void gated_fuse_backward(const Tensor2& u, const Tensor2& v, const Tensor2& gate_values, const Tensor2& dy,
                         const GateUnit& gate, GateUnit& grad, Tensor2& du, Tensor2& dv);

/// Central-difference check of `analytic` against f at `point`. Returns the
/// max over coordinates of |a - n| / max(1e-8, |a| + |n|).
double grad_check(const std::function<double(std::span<const double>)>& f, std::span<const double> point,
                  std::span<const double> analytic, double eps = 1e-5);

} // namespace polyllmem::nd

#endif // POLYLLMEM_NDMATH_HPP
