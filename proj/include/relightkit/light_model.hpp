// Copyright (C) 2026 RelightKit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "relightkit/common.hpp"

#include <span>
#include <string>
#include <vector>

namespace rlk {

/// Point light: position in a stated camera or world frame, linear RGB color
/// in [0,1] and a non-negative scalar intensity.
struct PointLight {
    Eigen::Vector3d position = Eigen::Vector3d::Zero();
    Eigen::Vector3d color = Eigen::Vector3d::Ones();
    double intensity = 0.0;

    bool operator==(const PointLight&) const = default;
};

/// Throws rlk::Error if the light breaks an invariant.
void check_light(const PointLight& light);

struct Keyframe {
    double time = 0.0;
    PointLight light;

    bool operator==(const Keyframe&) const = default;
};

/// Keyframed light, linearly interpolated between keys.
struct LightTrack {
    std::vector<Keyframe> keyframes;

    bool operator==(const LightTrack&) const = default;
};

/// Camera pose. `rotation` maps camera axes into the world frame (columns are
/// the camera x-right, y-down, z-forward axes); `position` is the camera center.
struct CameraPose {
    Eigen::Vector3d position = Eigen::Vector3d::Zero();
    Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
    double timestamp = 0.0;

    static CameraPose identity(double t = 0.0);

    /// Camera at `eye` looking at `target` with world up along -y.
    static CameraPose look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target, double t = 0.0);

    Eigen::Vector3d to_camera(const Eigen::Vector3d& world) const {
        return rotation.transpose() * (world - position);
    }
    Eigen::Vector3d to_world(const Eigen::Vector3d& cam) const { return rotation * cam + position; }

    bool operator==(const CameraPose&) const = default;
};

bool is_rotation(const Eigen::Matrix3d& r, double tol = 1e-6);

/// Pinhole intrinsics; the principal point defaults to the image center.
struct CameraIntrinsics {
    double focal_px = 48.0;
    int width = 48;
    int height = 48;
    double cx = 24.0;
    double cy = 24.0;

    static CameraIntrinsics centered(double focal_px, int width, int height) {
        return {focal_px, width, height, width / 2.0, height / 2.0};
    }

    /// Camera-frame point at depth `d` seen through pixel center (u, v).
    Eigen::Vector3d unproject(int u, int v, double d) const {
        return {(u + 0.5 - cx) * d / focal_px, (v + 0.5 - cy) * d / focal_px, d};
    }

    /// Continuous pixel coordinates (u, v) of a camera-frame point with z > 0.
    Eigen::Vector2d project(const Eigen::Vector3d& p) const {
        return {p.x() * focal_px / p.z() + cx - 0.5, p.y() * focal_px / p.z() + cy - 0.5};
    }
};

/// Added lights for one clip of 4N+1 frames.
struct LightingScript {
    std::vector<LightTrack> tracks;
    int frame_count = 17;
    double fps = 8.0;

    double duration() const { return (frame_count - 1) / fps; }
    double frame_time(int frame) const { return frame / fps; }

    bool operator==(const LightingScript&) const = default;
};

struct Violation {
    std::string path;
    std::string message;
};

struct ValidationReport {
    std::vector<Violation> violations;

    bool ok() const { return violations.empty(); }
    std::string to_string() const;
};

/// Linear interpolation of a track at time t, clamped outside the keyed range.
PointLight sample_track(const LightTrack& track, double t);

/// Re-express a light given in the first-frame camera frame in the frame of
/// `pose_now`. Color and intensity are unchanged.
PointLight transform_to_camera(const PointLight& light, const CameraPose& pose_first, const CameraPose& pose_now);

ValidationReport validate_script(const LightingScript& script);

/// Samples every track of `script` at time t.
std::vector<PointLight> sample_script(const LightingScript& script, double t);

}  // namespace rlk
