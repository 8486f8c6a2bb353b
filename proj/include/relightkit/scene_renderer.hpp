// Copyright (C) 2026 RelightKit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "relightkit/common.hpp"
#include "relightkit/light_model.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace rlk {

/// Keyframed 3-vector, linear between keys and clamped outside.
struct PointTrack {
    std::vector<std::pair<double, Eigen::Vector3d>> keys;

    static PointTrack fixed(const Eigen::Vector3d& p) { return {{{0.0, p}}}; }
    Eigen::Vector3d sample(double t) const;
};

struct Sphere {
    PointTrack center;
    double radius = 1.0;
    Eigen::Vector3d albedo = Eigen::Vector3d::Constant(0.7);
};

/// Horizontal plane y = height (the world y axis points down).
struct GroundPlane {
    double height = 1.0;
    Eigen::Vector3d albedo = Eigen::Vector3d::Constant(0.6);
};

/// Scene in world coordinates. Added lights are authored in the first-frame
/// camera frame and mapped into the world through the first trajectory pose.
struct SceneSpec {
    std::vector<Sphere> spheres;
    std::optional<GroundPlane> ground;
    Eigen::Vector3d ambient = Eigen::Vector3d::Constant(0.1);
    std::vector<LightTrack> base_lights;
};

void check_scene(const SceneSpec& scene);

struct RenderOptions {
    bool include_ambient = true;
    bool clamp = true;
};

struct SurfaceHit {
    double distance = 0.0;
    Eigen::Vector3d point;
    Eigen::Vector3d normal;
    Eigen::Vector3d albedo;
};

/// Nearest intersection of a ray with the scene at time t, if any.
std::optional<SurfaceHit> intersect_scene(const SceneSpec& scene, const Eigen::Vector3d& origin,
                                          const Eigen::Vector3d& dir, double t);

/// True when the segment from `point` to `light` is not blocked by a sphere.
bool light_visible(const SceneSpec& scene, const Eigen::Vector3d& point, const Eigen::Vector3d& normal,
                   const Eigen::Vector3d& light, double t);

/// Lambertian ray cast with hard shadows. `lights` are in world coordinates.
Frame render_frame(const SceneSpec& scene, const CameraPose& pose, std::span<const PointLight> lights, double t,
                   const CameraIntrinsics& intrinsics, const RenderOptions& options = {});

/// Unclamped double-precision variant of render_frame.
RgbImage<double> render_radiance(const SceneSpec& scene, const CameraPose& pose, std::span<const PointLight> lights,
                                 double t, const CameraIntrinsics& intrinsics, bool include_ambient = true);

/// Hit distance per pixel; +inf where the ray escapes.
Plane<double> render_depth(const SceneSpec& scene, const CameraPose& pose, double t,
                           const CameraIntrinsics& intrinsics);

/// Base lights sampled at t (world frame).
std::vector<PointLight> base_lights_at(const SceneSpec& scene, double t);

/// Added lights sampled at t and mapped from first-frame camera to world.
std::vector<PointLight> added_lights_at(const LightingScript& script, const CameraPose& pose_first, double t);

Video render_video(const SceneSpec& scene, std::span<const CameraPose> trajectory, const LightingScript* added,
                   const CameraIntrinsics& intrinsics, double fps);

struct RenderedPair {
    Video source;
    Video target;
    LightingScript script;
    std::vector<CameraPose> trajectory;
    std::uint64_t seed = 0;
};

RenderedPair generate_pair(const SceneSpec& scene, std::span<const CameraPose> trajectory,
                           const LightingScript& script, std::uint64_t seed, const CameraIntrinsics& intrinsics);

}  // namespace rlk
