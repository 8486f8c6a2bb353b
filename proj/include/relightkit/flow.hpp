// Copyright (C) 2026 RelightKit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Conditional flow matching on straight paths x_t = (1 - t) x0 + t eps,
// with target velocity u = eps - x0, and the matching Euler sampler that
// integrates from noise (t = 1) to data (t = 0).

#include "relightkit/common.hpp"
#include "relightkit/rng.hpp"

#include <cstdint>

namespace rlk {

template <typename DerivedA, typename DerivedB>
void check_same_shape(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw Error("shape mismatch");
}

template <typename DerivedX, typename DerivedE>
auto make_xt(const Eigen::MatrixBase<DerivedX>& x0, const Eigen::MatrixBase<DerivedE>& eps,
             typename DerivedX::Scalar t) {
    using Scalar = typename DerivedX::Scalar;
    check_same_shape(x0, eps);
    if (!(t >= Scalar(0) && t <= Scalar(1))) throw Error("t must lie in [0, 1]");
    return ((Scalar(1) - t) * x0 + t * eps).eval();
}

template <typename DerivedX, typename DerivedE>
auto target_velocity(const Eigen::MatrixBase<DerivedX>& x0, const Eigen::MatrixBase<DerivedE>& eps) {
    check_same_shape(x0, eps);
    return (eps - x0).eval();
}

/// Mean squared error between a predicted velocity and eps - x0.
template <typename DerivedV, typename DerivedX, typename DerivedE>
typename DerivedV::Scalar flow_loss(const Eigen::MatrixBase<DerivedV>& v, const Eigen::MatrixBase<DerivedX>& x0,
                                    const Eigen::MatrixBase<DerivedE>& eps) {
    check_same_shape(v, x0);
    check_same_shape(x0, eps);
    if (v.size() == 0) throw Error("empty tensors");
    return (v - (eps - x0)).squaredNorm() / typename DerivedV::Scalar(v.size());
}

/// Gradient of flow_loss with respect to the prediction.
template <typename DerivedV, typename DerivedX, typename DerivedE>
auto flow_loss_grad(const Eigen::MatrixBase<DerivedV>& v, const Eigen::MatrixBase<DerivedX>& x0,
                    const Eigen::MatrixBase<DerivedE>& eps) {
    using Scalar = typename DerivedV::Scalar;
    return ((v - (eps - x0)) * (Scalar(2) / Scalar(v.size()))).eval();
}

template <typename Scalar>
Mat<Scalar> standard_normal(Eigen::Index rows, Eigen::Index cols, CounterRng& rng) {
    Mat<Scalar> m(rows, cols);
    for (Eigen::Index c = 0; c < cols; ++c) {
        for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = Scalar(rng.normal());
    }
    return m;
}

/// Time grid used by euler_sample: t_i = 1 - i / steps for i = 0..steps.
inline double euler_time(int i, int steps) { return 1.0 - static_cast<double>(i) / steps; }

/// Integrates x <- x - v(x, t) * dt from t = 1 to t = 0 starting at `noise`.
template <typename Scalar, typename VelocityFn>
Mat<Scalar> euler_integrate(VelocityFn&& velocity, Mat<Scalar> x, int steps) {
    if (steps < 1) throw Error("steps must be >= 1");
    const Scalar dt = Scalar(1) / Scalar(steps);
    for (int i = 0; i < steps; ++i) {
        const Scalar t = Scalar(euler_time(i, steps));
        const Mat<Scalar> v = velocity(static_cast<const Mat<Scalar>&>(x), t);
        check_same_shape(v, x);
        x -= v * dt;
    }
    return x;
}

/// Seeded Euler sampling: starts at eps ~ N(0, 1) of the given shape.
template <typename Scalar, typename VelocityFn>
Mat<Scalar> euler_sample(VelocityFn&& velocity, Eigen::Index rows, Eigen::Index cols, int steps, std::uint64_t seed) {
    if (steps < 1) throw Error("steps must be >= 1");
    CounterRng rng(seed, 0xE0);
    return euler_integrate<Scalar>(std::forward<VelocityFn>(velocity), standard_normal<Scalar>(rows, cols, rng), steps);
}

}  // namespace rlk
