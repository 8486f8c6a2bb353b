// Copyright (C) 2026 RelightKit Authors
// SPDX-License-Identifier: Apache-2.0

#include "relightkit/scene_renderer.hpp"

#include <cmath>
#include <limits>

namespace rlk {

namespace {

constexpr double kHitEpsilon = 1e-6;

/// Smallest positive root distance of ray/sphere, or +inf.
double ray_sphere(const Eigen::Vector3d& o, const Eigen::Vector3d& d, const Eigen::Vector3d& c, double r) {
    const Eigen::Vector3d oc = o - c;
    const double b = oc.dot(d);
    const double cc = oc.squaredNorm() - r * r;
    const double disc = b * b - cc;
    if (disc < 0.0) return std::numeric_limits<double>::infinity();
    const double sq = std::sqrt(disc);
    double s = -b - sq;
    if (s <= kHitEpsilon) s = -b + sq;
    return s > kHitEpsilon ? s : std::numeric_limits<double>::infinity();
}

Eigen::Vector3d camera_ray(const CameraIntrinsics& k, const CameraPose& pose, int u, int v) {
    return (pose.rotation * k.unproject(u, v, 1.0)).normalized();
}

}  // namespace

Eigen::Vector3d PointTrack::sample(double t) const {
    if (keys.empty()) throw Error("empty point track");
    if (t <= keys.front().first) return keys.front().second;
    if (t >= keys.back().first) return keys.back().second;
    std::size_t i = 1;
    while (keys[i].first < t) ++i;
    const auto& [ta, pa] = keys[i - 1];
    const auto& [tb, pb] = keys[i];
    const double w = (t - ta) / (tb - ta);
    return (1.0 - w) * pa + w * pb;
}

void check_scene(const SceneSpec& scene) {
    if (scene.spheres.empty() && !scene.ground) throw Error("scene needs at least one object");
    auto albedo_ok = [](const Eigen::Vector3d& a) { return (a.array() >= 0.0).all() && (a.array() <= 1.0).all(); };
    for (const auto& s : scene.spheres) {
        if (!(s.radius > 0.0)) throw Error("sphere radius must be positive");
        if (!albedo_ok(s.albedo)) throw Error("sphere albedo outside [0,1]");
        if (s.center.keys.empty()) throw Error("sphere has no center keyframes");
    }
    if (scene.ground && !albedo_ok(scene.ground->albedo)) throw Error("ground albedo outside [0,1]");
    if (!albedo_ok(scene.ambient)) throw Error("ambient outside [0,1]");
}

std::optional<SurfaceHit> intersect_scene(const SceneSpec& scene, const Eigen::Vector3d& origin,
                                          const Eigen::Vector3d& dir, double t) {
    std::optional<SurfaceHit> best;
    double nearest = std::numeric_limits<double>::infinity();
    for (const auto& s : scene.spheres) {
        const Eigen::Vector3d c = s.center.sample(t);
        const double dist = ray_sphere(origin, dir, c, s.radius);
        if (dist < nearest) {
            nearest = dist;
            const Eigen::Vector3d p = origin + dist * dir;
            best = SurfaceHit{dist, p, (p - c) / s.radius, s.albedo};
        }
    }
    if (scene.ground && dir.y() > 0.0 && origin.y() < scene.ground->height) {
        const double dist = (scene.ground->height - origin.y()) / dir.y();
        if (dist > kHitEpsilon && dist < nearest) {
            best = SurfaceHit{dist, origin + dist * dir, Eigen::Vector3d(0.0, -1.0, 0.0), scene.ground->albedo};
        }
    }
    return best;
}

bool light_visible(const SceneSpec& scene, const Eigen::Vector3d& point, const Eigen::Vector3d& normal,
                   const Eigen::Vector3d& light, double t) {
    const Eigen::Vector3d start = point + 1e-6 * normal;
    const Eigen::Vector3d to_light = light - start;
    const double dist = to_light.norm();
    if (dist == 0.0) return true;
    const Eigen::Vector3d dir = to_light / dist;
    for (const auto& s : scene.spheres) {
        if (ray_sphere(start, dir, s.center.sample(t), s.radius) < dist) return false;
    }
    return true;
}

RgbImage<double> render_radiance(const SceneSpec& scene, const CameraPose& pose, std::span<const PointLight> lights,
                                 double t, const CameraIntrinsics& intrinsics, bool include_ambient) {
    const int h = intrinsics.height;
    const int w = intrinsics.width;
    const Eigen::Vector3d ambient = include_ambient ? scene.ambient : Eigen::Vector3d::Zero();
    auto img = RgbImage<double>::zeros(h, w);
    for (int v = 0; v < h; ++v) {
        for (int u = 0; u < w; ++u) {
            const auto hit = intersect_scene(scene, pose.position, camera_ray(intrinsics, pose, u, v), t);
            if (!hit) {
                img.set(v, u, ambient);
                continue;
            }
            Eigen::Vector3d irradiance = ambient;
            for (const auto& l : lights) {
                if (l.intensity == 0.0) continue;
                const Eigen::Vector3d to_light = l.position - hit->point;
                const double r2 = to_light.squaredNorm();
                const double cosine = hit->normal.dot(to_light) / std::sqrt(r2);
                if (cosine <= 0.0) continue;
                if (!light_visible(scene, hit->point, hit->normal, l.position, t)) continue;
                irradiance += (l.intensity * cosine / r2) * l.color;
            }
            img.set(v, u, hit->albedo.cwiseProduct(irradiance));
        }
    }
    return img;
}

Frame render_frame(const SceneSpec& scene, const CameraPose& pose, std::span<const PointLight> lights, double t,
                   const CameraIntrinsics& intrinsics, const RenderOptions& options) {
    auto radiance = render_radiance(scene, pose, lights, t, intrinsics, options.include_ambient);
    if (options.clamp) {
        for (auto& c : radiance.channel) c = c.max(0.0).min(1.0);
    }
    return radiance.cast<float>();
}

Plane<double> render_depth(const SceneSpec& scene, const CameraPose& pose, double t,
                           const CameraIntrinsics& intrinsics) {
    Plane<double> depth(intrinsics.height, intrinsics.width);
    for (int v = 0; v < intrinsics.height; ++v) {
        for (int u = 0; u < intrinsics.width; ++u) {
            const auto hit = intersect_scene(scene, pose.position, camera_ray(intrinsics, pose, u, v), t);
            depth(v, u) = hit ? hit->distance : std::numeric_limits<double>::infinity();
        }
    }
    return depth;
}

std::vector<PointLight> base_lights_at(const SceneSpec& scene, double t) {
    std::vector<PointLight> lights;
    for (const auto& track : scene.base_lights) lights.push_back(sample_track(track, t));
    return lights;
}

std::vector<PointLight> added_lights_at(const LightingScript& script, const CameraPose& pose_first, double t) {
    std::vector<PointLight> lights;
    const CameraPose world = CameraPose::identity();
    for (const auto& track : script.tracks) lights.push_back(transform_to_camera(sample_track(track, t), pose_first, world));
    return lights;
}

Video render_video(const SceneSpec& scene, std::span<const CameraPose> trajectory, const LightingScript* added,
                   const CameraIntrinsics& intrinsics, double fps) {
    check_scene(scene);
    if (trajectory.empty()) throw Error("empty trajectory");
    if (added && static_cast<int>(trajectory.size()) != added->frame_count) {
        throw Error("trajectory length does not match frame_count");
    }
    Video video;
    video.fps = fps;
    video.frames.reserve(trajectory.size());
    for (std::size_t f = 0; f < trajectory.size(); ++f) {
        const double t = f / fps;
        auto lights = base_lights_at(scene, t);
        if (added) {
            for (const auto& l : added_lights_at(*added, trajectory.front(), t)) lights.push_back(l);
        }
        video.frames.push_back(render_frame(scene, trajectory[f], lights, t, intrinsics));
    }
    return video;
}

RenderedPair generate_pair(const SceneSpec& scene, std::span<const CameraPose> trajectory,
                           const LightingScript& script, std::uint64_t seed, const CameraIntrinsics& intrinsics) {
    if (const auto report = validate_script(script); !report.ok()) {
        throw Error("invalid lighting script: " + report.to_string());
    }
    RenderedPair pair;
    pair.source = render_video(scene, trajectory, nullptr, intrinsics, script.fps);
    pair.target = render_video(scene, trajectory, &script, intrinsics, script.fps);
    pair.script = script;
    pair.trajectory.assign(trajectory.begin(), trajectory.end());
    pair.seed = seed;
    return pair;
}

}  // namespace rlk
