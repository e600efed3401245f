// Copyright (c) 2026, PolyLLMem developers
// SPDX-License-Identifier: Apache-2.0

#include "polyllmem/error.hpp"
#include "polyllmem/trainer.hpp"

#include <Eigen/Dense>

#include <cmath>

namespace polyllmem::train {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const RowMatrix> as_eigen(const nd::Tensor2& x)
{
    return {x.data().data(), static_cast<Eigen::Index>(x.rows()), static_cast<Eigen::Index>(x.cols())};
}

} // namespace

std::vector<double> ridge_fit(const nd::Tensor2& x, std::span<const double> y, double lambda)
{
    require(x.rows() == y.size(), ErrorCode::ShapeMismatch, "ridge: row count differs from target count");
    require(x.rows() > 0 && x.cols() > 0, ErrorCode::EmptyInput, "ridge: empty design matrix");
    require(lambda >= 0.0 && std::isfinite(lambda), ErrorCode::InvalidArgument, "ridge: lambda must be >= 0");
    const auto X = as_eigen(x);
    const Eigen::Map<const Eigen::VectorXd> Y(y.data(), static_cast<Eigen::Index>(y.size()));
    Eigen::VectorXd w;
    if (lambda == 0.0) {
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
        require(qr.rank() == X.cols(), ErrorCode::Singular, "ridge: design matrix is rank deficient with lambda = 0");
        w = qr.solve(Y);
    } else if (X.rows() < X.cols()) {
        Eigen::MatrixXd gram = X * X.transpose();
        gram.diagonal().array() += lambda;
        Eigen::LLT<Eigen::MatrixXd> llt(gram);
        require(llt.info() == Eigen::Success, ErrorCode::Singular, "ridge: Cholesky factorization failed");
        w = X.transpose() * llt.solve(Y);
    } else {
        Eigen::MatrixXd normal = X.transpose() * X;
        normal.diagonal().array() += lambda;
        Eigen::LLT<Eigen::MatrixXd> llt(normal);
        require(llt.info() == Eigen::Success, ErrorCode::Singular, "ridge: Cholesky factorization failed");
        w = llt.solve(X.transpose() * Y);
    }
    require(w.allFinite(), ErrorCode::Numerical, "ridge: solution is not finite");
    return {w.data(), w.data() + w.size()};
}

std::vector<double> ridge_predict(const nd::Tensor2& x, std::span<const double> w)
{
    require(x.cols() == w.size(), ErrorCode::ShapeMismatch, "ridge: weight length differs from feature count");
    const Eigen::Map<const Eigen::VectorXd> W(w.data(), static_cast<Eigen::Index>(w.size()));
    const Eigen::VectorXd p = as_eigen(x) * W;
    return {p.data(), p.data() + p.size()};
}

} // namespace polyllmem::train
