// Copyright (C) 2026 RelightKit Authors
// SPDX-License-Identifier: Apache-2.0

#include "relightkit/mpli.hpp"

#include "relightkit/grouping.hpp"

#include <cmath>

namespace rlk {

std::vector<double> MultiPlaneLightImage::depths() const {
    std::vector<double> d;
    d.reserve(planes.size());
    for (const auto& p : planes) d.push_back(p.depth);
    return d;
}

std::vector<double> default_plane_depths() { return {0.5, 1.5, 3.0, 6.0}; }

LightImage render_light_image(std::span<const PointLight> lights, double depth, const CameraIntrinsics& intrinsics,
                              const MpliScalers& scalers) {
    if (!(depth > 0.0) || !std::isfinite(depth)) throw Error("plane depth must be positive");
    if (!(scalers.s1 > 0.0) || !(scalers.s2 > 0.0)) throw Error("MPLI scalers must be positive");
    for (const auto& l : lights) {
        if (!l.position.allFinite()) throw Error("non-finite light position");
    }

    const int h = intrinsics.height;
    const int w = intrinsics.width;
    LightImage img{RgbImage<double>::zeros(h, w), depth};
    const double inv_s1 = 1.0 / scalers.s1;
    for (const auto& l : lights) {
        const Eigen::Vector3d radiance = l.intensity * l.color;
        for (int v = 0; v < h; ++v) {
            for (int u = 0; u < w; ++u) {
                const double r2 = (intrinsics.unproject(u, v, depth) - l.position).squaredNorm();
                const double falloff = 1.0 / (r2 * inv_s1 + scalers.s2);
                for (int c = 0; c < 3; ++c) img.pixels.channel[c](v, u) += radiance[c] * falloff;
            }
        }
    }
    return img;
}

MultiPlaneLightImage build_mpli(std::span<const PointLight> lights, std::span<const double> depths,
                                const CameraIntrinsics& intrinsics, const MpliScalers& scalers) {
    if (depths.empty()) throw Error("MPLI needs at least one plane");
    for (std::size_t k = 1; k < depths.size(); ++k) {
        if (!(depths[k] > depths[k - 1])) throw Error("plane depths must be strictly increasing");
    }
    MultiPlaneLightImage mpli;
    mpli.planes.reserve(depths.size());
    for (double d : depths) mpli.planes.push_back(render_light_image(lights, d, intrinsics, scalers));
    return mpli;
}

MpliSequence build_mpli_sequence(const LightingScript& script, std::span<const CameraPose> trajectory,
                                 const CameraIntrinsics& intrinsics, std::span<const double> depths,
                                 const MpliScalers& scalers) {
    if (const auto report = validate_script(script); !report.ok()) {
        throw Error("invalid lighting script: " + report.to_string());
    }
    if (static_cast<int>(trajectory.size()) != script.frame_count) {
        throw Error("trajectory length does not match frame_count");
    }
    MpliSequence seq;
    seq.frame_count = script.frame_count;
    const int groups = latent_group_count(script.frame_count);
    for (int g = 0; g < groups; ++g) {
        const int frame = group_sample_frame(g);
        std::vector<PointLight> lights;
        for (const auto& l : sample_script(script, script.frame_time(frame))) {
            lights.push_back(transform_to_camera(l, trajectory.front(), trajectory[frame]));
        }
        seq.mplis.push_back(build_mpli(lights, depths, intrinsics, scalers));
    }
    return seq;
}

MultiPlaneLightImage normalize_for_codec(const MultiPlaneLightImage& mpli) {
    MultiPlaneLightImage out = mpli;
    for (auto& plane : out.planes) {
        for (auto& c : plane.pixels.channel) c = c.max(0.0).min(1.0) * 2.0 - 1.0;
    }
    return out;
}

RgbImage<float> visualize_mpli(const MultiPlaneLightImage& mpli) {
    const int h = mpli.height();
    const int w = mpli.width();
    auto grid = RgbImage<float>::zeros(h, w * mpli.plane_count());
    for (int k = 0; k < mpli.plane_count(); ++k) {
        for (int c = 0; c < 3; ++c) {
            grid.channel[c].block(0, k * w, h, w) =
                mpli.planes[k].pixels.channel[c].max(0.0).min(1.0).cast<float>();
        }
    }
    return grid;
}

}  // namespace rlk
