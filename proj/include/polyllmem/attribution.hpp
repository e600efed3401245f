// Copyright (c) 2026, PolyLLMem developers
// SPDX-License-Identifier: Apache-2.0
//
// Token attribution with Integrated Gradients, token similarity, and PCA.

#ifndef POLYLLMEM_ATTRIBUTION_HPP
#define POLYLLMEM_ATTRIBUTION_HPP

#include "polyllmem/model.hpp"
#include "polyllmem/ndmath.hpp"
#include "polyllmem/psmiles.hpp"

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace polyllmem::attr {

/// A scalar function of a pooled input vector, evaluated on a batch of rows.
class PooledFunction {
public:
    virtual ~PooledFunction() = default;
    [[nodiscard]] virtual std::size_t input_dim() const = 0;
    /// One value per row of `x`.
    [[nodiscard]] virtual std::vector<double> value(const nd::Tensor2& x) const = 0;
    /// d value / d x for every row of `x`.
    [[nodiscard]] virtual nd::Tensor2 gradient(const nd::Tensor2& x) const = 0;
};

/// F(x) = w . x + b
class LinearProbe final : public PooledFunction {
public:
    LinearProbe(std::vector<double> weights, double bias = 0.0);
    [[nodiscard]] std::size_t input_dim() const override { return weights_.size(); }
    [[nodiscard]] std::vector<double> value(const nd::Tensor2& x) const override;
    [[nodiscard]] nd::Tensor2 gradient(const nd::Tensor2& x) const override;

private:
    std::vector<double> weights_;
    double bias_;
};

/// The trained network in Eval mode with the structure vector held fixed.
class ModelFunction final : public PooledFunction {
public:
    ModelFunction(model::ModelParams params, std::vector<double> structure);
    [[nodiscard]] std::size_t input_dim() const override { return params_.config.llm_dim; }
    [[nodiscard]] std::vector<double> value(const nd::Tensor2& x) const override;
    [[nodiscard]] nd::Tensor2 gradient(const nd::Tensor2& x) const override;

private:
    [[nodiscard]] nd::Tensor2 structure_rows(std::size_t n) const;

    model::ModelParams params_;
    std::vector<double> structure_;
};

struct Attribution {
    std::string polymer_id;
    std::vector<std::string> tokens;
    std::vector<double> scores;
    std::vector<double> normalized_scores;  // empty until normalize_by_star
    double output = 0.0;                    // F(x)
    double baseline_output = 0.0;           // F(0)
    double completeness_gap = 0.0;          // |sum(scores) - (F(x) - F(0))|
    std::size_t steps = 0;
};

inline constexpr std::size_t kDefaultSteps = 64;

/// Integrated Gradients from the zero baseline through a mean-pooling wrapper,
/// using the midpoint rule with `steps` points. `token_vectors` has one row
/// per token. Scores sum dimension-wise attributions per token.
Attribution integrated_gradients(const PooledFunction& f, const nd::Tensor2& token_vectors,
                                 std::span<const std::string> tokens, std::size_t steps = kDefaultSteps);

/// Divides every score by the score of the first "[*]" token. Throws
/// InvalidArgument without such a token and ZeroReference when its score is 0.
Attribution normalize_by_star(Attribution a);

/// Merges scores onto chemically meaningful tokens (weighted sums). The
/// completeness totals carry over.
Attribution merge_attribution(const Attribution& a, const psmiles::MergeMap& map);

struct SimilarityEdge {
    std::size_t i = 0;
    std::size_t j = 0;
    double value = 0.0;
};

struct SimilarityMatrix {
    std::vector<std::string> tokens;
    nd::Tensor2 matrix;             // NaN in rows and columns of zero vectors
    std::vector<bool> defined;      // false for zero vectors
    double threshold = 0.5;
    std::vector<SimilarityEdge> edges;  // i < j, value >= threshold
};

inline constexpr double kDefaultSimilarityThreshold = 0.5;

SimilarityMatrix cosine_matrix(const nd::Tensor2& vectors, std::span<const std::string> tokens,
                               double threshold = kDefaultSimilarityThreshold);

struct PcaResult {
    nd::Tensor2 projected;                  // n x k
    nd::Tensor2 components;                 // k x d, unit rows
    std::vector<double> mean;               // d
    std::vector<double> explained_variance; // k, sample variance (n - 1)
    std::vector<double> explained_ratio;    // k
};

/// Mean-centered projection onto the top-k covariance eigenvectors. Each
/// component's largest-magnitude coordinate is made positive.
PcaResult pca_reduce(const nd::Tensor2& x, std::size_t k);

} // namespace polyllmem::attr

#endif // POLYLLMEM_ATTRIBUTION_HPP
