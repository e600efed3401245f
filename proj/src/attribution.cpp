// Copyright (c) 2026, PolyLLMem developers
// SPDX-License-Identifier: Apache-2.0

#include "polyllmem/attribution.hpp"
#include "polyllmem/error.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>

namespace polyllmem::attr {

using nd::Tensor2;

LinearProbe::LinearProbe(std::vector<double> weights, double bias) : weights_(std::move(weights)), bias_(bias)
{
    require(!weights_.empty(), ErrorCode::EmptyInput, "linear probe needs at least one weight");
}

std::vector<double> LinearProbe::value(const Tensor2& x) const
{
    require(x.cols() == weights_.size(), ErrorCode::ShapeMismatch, "linear probe: input width mismatch");
    std::vector<double> out(x.rows(), bias_);
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const auto r = x.row(i);
        for (std::size_t d = 0; d < r.size(); ++d) {
            out[i] += weights_[d] * r[d];
        }
    }
    return out;
}

Tensor2 LinearProbe::gradient(const Tensor2& x) const
{
    require(x.cols() == weights_.size(), ErrorCode::ShapeMismatch, "linear probe: input width mismatch");
    Tensor2 g(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        std::copy(weights_.begin(), weights_.end(), g.row(i).begin());
    }
    return g;
}

ModelFunction::ModelFunction(model::ModelParams params, std::vector<double> structure)
    : params_(std::move(params)), structure_(std::move(structure))
{
    require(structure_.size() == params_.config.uni_dim, ErrorCode::ShapeMismatch,
            "structure vector has dimension " + std::to_string(structure_.size()) + ", checkpoint expects " +
                std::to_string(params_.config.uni_dim));
}

Tensor2 ModelFunction::structure_rows(std::size_t n) const
{
    Tensor2 u(n, structure_.size());
    for (std::size_t i = 0; i < n; ++i) {
        std::copy(structure_.begin(), structure_.end(), u.row(i).begin());
    }
    return u;
}

std::vector<double> ModelFunction::value(const Tensor2& x) const
{
    return model::forward(params_, x, structure_rows(x.rows()), nd::Mode::Eval);
}

Tensor2 ModelFunction::gradient(const Tensor2& x) const
{
    model::ForwardCache cache;
    model::forward(params_, x, structure_rows(x.rows()), nd::Mode::Eval, nullptr, &cache);
    const std::vector<double> ones(x.rows(), 1.0);
    Tensor2 dx;
    model::backward(params_, cache, ones, &dx, nullptr);
    return dx;
}

Attribution integrated_gradients(const PooledFunction& f, const Tensor2& token_vectors,
                                 std::span<const std::string> tokens, std::size_t steps)
{
    require(steps >= 1, ErrorCode::InvalidArgument, "integrated gradients needs at least one step");
    require(token_vectors.rows() >= 1, ErrorCode::EmptyInput, "integrated gradients needs at least one token");
    require(tokens.size() == token_vectors.rows(), ErrorCode::ShapeMismatch,
            "token count differs from token vector count");
    require(token_vectors.cols() == f.input_dim(), ErrorCode::ShapeMismatch,
            "token vectors have dimension " + std::to_string(token_vectors.cols()) + ", model expects " +
                std::to_string(f.input_dim()));
    require(token_vectors.all_finite(), ErrorCode::NonFinite, "token vectors contain non-finite values");

    const std::size_t n = token_vectors.rows();
    const std::size_t dim = token_vectors.cols();
    std::vector<double> pooled(dim, 0.0);
    nd::add_column_sums(token_vectors, pooled);
    for (auto& p : pooled) {
        p /= static_cast<double>(n);
    }

    Tensor2 path(steps, dim);
    for (std::size_t s = 0; s < steps; ++s) {
        const double alpha = (static_cast<double>(s) + 0.5) / static_cast<double>(steps);
        auto r = path.row(s);
        for (std::size_t d = 0; d < dim; ++d) {
            r[d] = alpha * pooled[d];
        }
    }
    const Tensor2 grads = f.gradient(path);
    std::vector<double> mean_grad(dim, 0.0);
    nd::add_column_sums(grads, mean_grad);
    for (auto& g : mean_grad) {
        g /= static_cast<double>(steps) * static_cast<double>(n);
    }

    Attribution a;
    a.tokens.assign(tokens.begin(), tokens.end());
    a.steps = steps;
    a.scores.assign(n, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
        const auto t = token_vectors.row(k);
        for (std::size_t d = 0; d < dim; ++d) {
            a.scores[k] += t[d] * mean_grad[d];
        }
    }
    Tensor2 ends(2, dim);
    std::copy(pooled.begin(), pooled.end(), ends.row(0).begin());
    const auto values = f.value(ends);
    a.output = values[0];
    a.baseline_output = values[1];
    double total = 0.0;
    for (double s : a.scores) {
        total += s;
    }
    a.completeness_gap = std::abs(total - (a.output - a.baseline_output));
    return a;
}

Attribution normalize_by_star(Attribution a)
{
    const auto it = std::find(a.tokens.begin(), a.tokens.end(), "[*]");
    require(it != a.tokens.end(), ErrorCode::InvalidArgument, "no [*] token to normalize by");
    const double ref = a.scores[static_cast<std::size_t>(it - a.tokens.begin())];
    require(ref != 0.0, ErrorCode::ZeroReference, "the [*] token has a zero attribution score");
    a.normalized_scores.resize(a.scores.size());
    for (std::size_t i = 0; i < a.scores.size(); ++i) {
        a.normalized_scores[i] = a.scores[i] / ref;
    }
    return a;
}

Attribution merge_attribution(const Attribution& a, const psmiles::MergeMap& map)
{
    require(map.raw_count == a.scores.size(), ErrorCode::ShapeMismatch, "merge map does not match token count");
    Attribution out = a;
    out.scores = psmiles::merge_scores(a.scores, map);
    out.tokens.clear();
    for (const auto& g : map.groups) {
        out.tokens.push_back(g.text);
    }
    out.normalized_scores.clear();
    double total = 0.0;
    for (double s : out.scores) {
        total += s;
    }
    out.completeness_gap = std::abs(total - (out.output - out.baseline_output));
    return out;
}

SimilarityMatrix cosine_matrix(const Tensor2& vectors, std::span<const std::string> tokens, double threshold)
{
    require(tokens.size() == vectors.rows(), ErrorCode::ShapeMismatch, "token count differs from vector count");
    require(std::isfinite(threshold), ErrorCode::InvalidArgument, "similarity threshold must be finite");
    require(vectors.all_finite(), ErrorCode::NonFinite, "token vectors contain non-finite values");
    const std::size_t n = vectors.rows();
    SimilarityMatrix out;
    out.tokens.assign(tokens.begin(), tokens.end());
    out.threshold = threshold;
    out.matrix = Tensor2(n, n, std::numeric_limits<double>::quiet_NaN());
    out.defined.assign(n, false);
    std::vector<double> norms(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (double v : vectors.row(i)) {
            s += v * v;
        }
        norms[i] = std::sqrt(s);
        out.defined[i] = norms[i] > 0.0;
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (!out.defined[i]) {
            continue;
        }
        out.matrix(i, i) = 1.0;
        for (std::size_t j = i + 1; j < n; ++j) {
            if (!out.defined[j]) {
                continue;
            }
            const auto a = vectors.row(i);
            const auto b = vectors.row(j);
            double dot = 0.0;
            for (std::size_t d = 0; d < a.size(); ++d) {
                dot += a[d] * b[d];
            }
            const double c = std::clamp(dot / (norms[i] * norms[j]), -1.0, 1.0);
            out.matrix(i, j) = c;
            out.matrix(j, i) = c;
            if (c >= threshold) {
                out.edges.push_back({i, j, c});
            }
        }
    }
    return out;
}

PcaResult pca_reduce(const Tensor2& x, std::size_t k)
{
    const std::size_t n = x.rows();
    const std::size_t d = x.cols();
    require(n >= 2, ErrorCode::InvalidArgument, "PCA needs at least 2 rows");
    require(k >= 1 && k <= std::min(n, d), ErrorCode::InvalidArgument,
            "PCA component count " + std::to_string(k) + " outside [1, " + std::to_string(std::min(n, d)) + "]");
    require(x.all_finite(), ErrorCode::NonFinite, "PCA input contains non-finite values");

    using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    const Eigen::Map<const RowMatrix> raw(x.data().data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    const Eigen::RowVectorXd mean = raw.colwise().mean();
    const Eigen::MatrixXd centered = raw.rowwise() - mean;
    const double denom = static_cast<double>(n - 1);

    Eigen::MatrixXd basis(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(k));
    Eigen::VectorXd eigenvalues(static_cast<Eigen::Index>(k));
    double total_variance = 0.0;
    if (n < d) {
        const Eigen::MatrixXd gram = centered * centered.transpose() / denom;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
        require(es.info() == Eigen::Success, ErrorCode::Numerical, "PCA eigensolver failed");
        total_variance = gram.trace();
        for (std::size_t c = 0; c < k; ++c) {
            const auto src = static_cast<Eigen::Index>(n - 1 - c);
            eigenvalues(static_cast<Eigen::Index>(c)) = std::max(0.0, es.eigenvalues()(src));
            Eigen::VectorXd v = centered.transpose() * es.eigenvectors().col(src);
            // Directions with no variance are completed to an orthonormal basis.
            for (Eigen::Index p = 0; v.norm() <= 1e-12 * std::max(1.0, std::sqrt(total_variance)); ++p) {
                v = Eigen::VectorXd::Unit(static_cast<Eigen::Index>(d), p);
                for (std::size_t q = 0; q < c; ++q) {
                    v -= basis.col(static_cast<Eigen::Index>(q)).dot(v) * basis.col(static_cast<Eigen::Index>(q));
                }
            }
            for (std::size_t q = 0; q < c; ++q) {
                v -= basis.col(static_cast<Eigen::Index>(q)).dot(v) * basis.col(static_cast<Eigen::Index>(q));
            }
            basis.col(static_cast<Eigen::Index>(c)) = v.normalized();
        }
    } else {
        const Eigen::MatrixXd cov = centered.transpose() * centered / denom;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
        require(es.info() == Eigen::Success, ErrorCode::Numerical, "PCA eigensolver failed");
        total_variance = cov.trace();
        for (std::size_t c = 0; c < k; ++c) {
            const auto src = static_cast<Eigen::Index>(d - 1 - c);
            eigenvalues(static_cast<Eigen::Index>(c)) = std::max(0.0, es.eigenvalues()(src));
            basis.col(static_cast<Eigen::Index>(c)) = es.eigenvectors().col(src);
        }
    }
    for (Eigen::Index c = 0; c < basis.cols(); ++c) {
        Eigen::Index arg = 0;
        basis.col(c).cwiseAbs().maxCoeff(&arg);
        if (basis(arg, c) < 0.0) {
            basis.col(c) = -basis.col(c);
        }
    }
    const Eigen::MatrixXd projected = centered * basis;

    PcaResult out;
    out.projected = Tensor2(n, k);
    out.components = Tensor2(k, d);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < k; ++c) {
            out.projected(i, c) = projected(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c));
        }
    }
    for (std::size_t c = 0; c < k; ++c) {
        for (std::size_t j = 0; j < d; ++j) {
            out.components(c, j) = basis(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(c));
        }
        const double ev = eigenvalues(static_cast<Eigen::Index>(c));
        out.explained_variance.push_back(ev);
        out.explained_ratio.push_back(total_variance > 0.0 ? ev / total_variance : 0.0);
    }
    out.mean.assign(mean.data(), mean.data() + mean.size());
    return out;
}

} // namespace polyllmem::attr
