// Copyright (C) 2026 RelightKit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Dense layer primitives with hand-written reverse-mode derivatives. Rows are
// tokens, columns are features.

#include "relightkit/common.hpp"

#include <cmath>
#include <numbers>

namespace rlk::dit {

template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
Mat<Scalar> linear(const Mat<Scalar>& x, const Mat<Scalar>& w, const Mat<Scalar>& b) {
    Mat<Scalar> y = x * w;
    y.rowwise() += b.row(0);
    return y;
}

/// Accumulates dW, db and returns dX.
template <typename Scalar>
Mat<Scalar> linear_backward(const Mat<Scalar>& x, const Mat<Scalar>& w, const Mat<Scalar>& dy, Mat<Scalar>& dw,
                            Mat<Scalar>& db) {
    dw.noalias() += x.transpose() * dy;
    db += dy.colwise().sum();
    return dy * w.transpose();
}

template <typename Scalar>
struct LayerNormCache {
    Mat<Scalar> xhat;
    Vec<Scalar> rstd;
};

template <typename Scalar>
Mat<Scalar> layer_norm(const Mat<Scalar>& x, const Mat<Scalar>& gamma, const Mat<Scalar>& beta,
                       LayerNormCache<Scalar>* cache) {
    constexpr Scalar eps = Scalar(1e-5);
    const Vec<Scalar> mean = x.rowwise().mean();
    Mat<Scalar> xc = x.colwise() - mean;
    const Vec<Scalar> var = xc.array().square().rowwise().mean();
    const Vec<Scalar> rstd = (var.array() + eps).rsqrt();
    Mat<Scalar> xhat = xc.array().colwise() * rstd.array();
    Mat<Scalar> y = xhat.array().rowwise() * gamma.row(0).array();
    y.rowwise() += beta.row(0);
    if (cache) {
        cache->xhat = std::move(xhat);
        cache->rstd = rstd;
    }
    return y;
}

template <typename Scalar>
Mat<Scalar> layer_norm_backward(const Mat<Scalar>& dy, const Mat<Scalar>& gamma, const LayerNormCache<Scalar>& c,
                                Mat<Scalar>& dgamma, Mat<Scalar>& dbeta) {
    dgamma += (dy.array() * c.xhat.array()).colwise().sum().matrix();
    dbeta += dy.colwise().sum();
    const Mat<Scalar> dxhat = dy.array().rowwise() * gamma.row(0).array();
    const Vec<Scalar> mean_d = dxhat.rowwise().mean();
    const Vec<Scalar> mean_dx = (dxhat.array() * c.xhat.array()).rowwise().mean();
    Mat<Scalar> dx = dxhat;
    dx.colwise() -= mean_d;
    dx.array() -= c.xhat.array().colwise() * mean_dx.array();
    dx.array().colwise() *= c.rstd.array();
    return dx;
}

template <typename Scalar>
Scalar gelu(Scalar x) {
    const Scalar a = Scalar(std::sqrt(2.0 / std::numbers::pi));
    return Scalar(0.5) * x * (Scalar(1) + std::tanh(a * (x + Scalar(0.044715) * x * x * x)));
}

template <typename Scalar>
Scalar gelu_grad(Scalar x) {
    const Scalar a = Scalar(std::sqrt(2.0 / std::numbers::pi));
    const Scalar th = std::tanh(a * (x + Scalar(0.044715) * x * x * x));
    return Scalar(0.5) * (Scalar(1) + th) +
           Scalar(0.5) * x * (Scalar(1) - th * th) * a * (Scalar(1) + Scalar(3 * 0.044715) * x * x);
}

template <typename Scalar>
Scalar silu(Scalar x) {
    return x / (Scalar(1) + std::exp(-x));
}

template <typename Scalar>
Scalar silu_grad(Scalar x) {
    const Scalar s = Scalar(1) / (Scalar(1) + std::exp(-x));
    return s * (Scalar(1) + x * (Scalar(1) - s));
}

/// Row-wise softmax, numerically stabilized by the row maximum.
template <typename Scalar>
Mat<Scalar> softmax_rows(const Mat<Scalar>& s) {
    Mat<Scalar> p = s.colwise() - s.rowwise().maxCoeff();
    p = p.array().exp();
    p.array().colwise() /= p.rowwise().sum().array();
    return p;
}

template <typename Scalar>
Mat<Scalar> softmax_rows_backward(const Mat<Scalar>& p, const Mat<Scalar>& dp) {
    const Vec<Scalar> dot = (dp.array() * p.array()).rowwise().sum();
    return p.array() * (dp.array().colwise() - dot.array());
}

/// Sinusoidal features of a flow time t in [0, 1].
template <typename Scalar>
Mat<Scalar> time_features(Scalar t, int count) {
    Mat<Scalar> phi(1, count);
    const int half = count / 2;
    for (int k = 0; k < half; ++k) {
        const double freq = std::exp(-std::log(10000.0) * k / half);
        const Scalar arg = Scalar(1000.0 * freq) * t;
        phi(0, k) = std::sin(arg);
        phi(0, half + k) = std::cos(arg);
    }
    return phi;
}

}  // namespace rlk::dit
