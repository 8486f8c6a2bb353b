// Copyright (C) 2026 RelightKit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <stdexcept>
#include <string>
#include <vector>

namespace rlk {

/// Thrown for every contract violation reported by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

template <typename Scalar>
using Vec3 = Eigen::Matrix<Scalar, 3, 1>;

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using RowMat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Single image channel, indexed (row, col) = (v, u).
template <typename Scalar>
using Plane = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// H x W x 3 image stored as three channel planes.
template <typename Scalar>
struct RgbImage {
    std::array<Plane<Scalar>, 3> channel;

    static RgbImage zeros(int height, int width) {
        RgbImage img;
        for (auto& c : img.channel) c = Plane<Scalar>::Zero(height, width);
        return img;
    }

    static RgbImage constant(int height, int width, const Vec3<Scalar>& rgb) {
        RgbImage img;
        for (int c = 0; c < 3; ++c) img.channel[c] = Plane<Scalar>::Constant(height, width, rgb[c]);
        return img;
    }

    int height() const { return static_cast<int>(channel[0].rows()); }
    int width() const { return static_cast<int>(channel[0].cols()); }

    Vec3<Scalar> at(int v, int u) const { return {channel[0](v, u), channel[1](v, u), channel[2](v, u)}; }

    void set(int v, int u, const Vec3<Scalar>& rgb) {
        for (int c = 0; c < 3; ++c) channel[c](v, u) = rgb[c];
    }

    template <typename Other>
    RgbImage<Other> cast() const {
        RgbImage<Other> out;
        for (int c = 0; c < 3; ++c) out.channel[c] = channel[c].template cast<Other>();
        return out;
    }

    RgbImage& operator+=(const RgbImage& o) {
        for (int c = 0; c < 3; ++c) channel[c] += o.channel[c];
        return *this;
    }

    Scalar max_coeff() const {
        return std::max({channel[0].maxCoeff(), channel[1].maxCoeff(), channel[2].maxCoeff()});
    }

    Scalar min_coeff() const {
        return std::min({channel[0].minCoeff(), channel[1].minCoeff(), channel[2].minCoeff()});
    }

    bool operator==(const RgbImage& o) const {
        for (int c = 0; c < 3; ++c) {
            if (channel[c].rows() != o.channel[c].rows() || channel[c].cols() != o.channel[c].cols()) return false;
            if ((channel[c] != o.channel[c]).any()) return false;
        }
        return true;
    }
};

using Frame = RgbImage<float>;

/// Clip of 4N+1 frames.
struct Video {
    std::vector<Frame> frames;
    double fps = 8.0;

    int frame_count() const { return static_cast<int>(frames.size()); }
    int height() const { return frames.empty() ? 0 : frames.front().height(); }
    int width() const { return frames.empty() ? 0 : frames.front().width(); }

    bool operator==(const Video& o) const { return fps == o.fps && frames == o.frames; }
};

}  // namespace rlk
