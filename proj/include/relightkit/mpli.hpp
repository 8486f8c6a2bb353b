// Copyright (C) 2026 RelightKit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "relightkit/common.hpp"
#include "relightkit/light_model.hpp"

#include <span>
#include <vector>

namespace rlk {

struct MpliScalers {
    double s1 = 1.0;
    double s2 = 0.25;
};

/// Irradiance image on the fronto-parallel plane z = depth.
struct LightImage {
    RgbImage<double> pixels;
    double depth = 1.0;
};

/// K light images on strictly increasing depths.
struct MultiPlaneLightImage {
    std::vector<LightImage> planes;

    int plane_count() const { return static_cast<int>(planes.size()); }
    int height() const { return planes.empty() ? 0 : planes.front().pixels.height(); }
    int width() const { return planes.empty() ? 0 : planes.front().pixels.width(); }
    std::vector<double> depths() const;
};

/// One MPLI per latent group of a 4N+1 frame clip (N+1 entries).
struct MpliSequence {
    std::vector<MultiPlaneLightImage> mplis;
    int frame_count = 0;
};

std::vector<double> default_plane_depths();

/// Sum over lights of I * c / (|q - p|^2 / s1 + s2) at every pixel's plane point q.
LightImage render_light_image(std::span<const PointLight> lights, double depth, const CameraIntrinsics& intrinsics,
                              const MpliScalers& scalers = {});

MultiPlaneLightImage build_mpli(std::span<const PointLight> lights, std::span<const double> depths,
                                const CameraIntrinsics& intrinsics, const MpliScalers& scalers = {});

/// Lights are sampled at each group's representative frame and re-expressed
/// in that frame's camera coordinates.
MpliSequence build_mpli_sequence(const LightingScript& script, std::span<const CameraPose> trajectory,
                                 const CameraIntrinsics& intrinsics, std::span<const double> depths,
                                 const MpliScalers& scalers = {});

/// v -> clamp(v, 0, 1) * 2 - 1.
MultiPlaneLightImage normalize_for_codec(const MultiPlaneLightImage& mpli);

/// Planes side by side in increasing depth order, tone-mapped by clamp(v, 0, 1).
RgbImage<float> visualize_mpli(const MultiPlaneLightImage& mpli);

}  // namespace rlk
