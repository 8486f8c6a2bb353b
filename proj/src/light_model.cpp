// Copyright (C) 2026 RelightKit Authors
// SPDX-License-Identifier: Apache-2.0

#include "relightkit/light_model.hpp"

#include <cmath>
#include <sstream>

namespace rlk {

namespace {

bool finite3(const Eigen::Vector3d& v) { return v.allFinite(); }

void check_light_into(const PointLight& l, const std::string& path, std::vector<Violation>& out) {
    if (!finite3(l.position)) out.push_back({path + ".position", "non-finite position"});
    if (!std::isfinite(l.intensity) || l.intensity < 0.0) out.push_back({path + ".intensity", "intensity must be >= 0"});
    for (int c = 0; c < 3; ++c) {
        if (!(l.color[c] >= 0.0 && l.color[c] <= 1.0)) {
            out.push_back({path + ".color[" + std::to_string(c) + "]", "color channel outside [0,1]"});
        }
    }
}

}  // namespace

void check_light(const PointLight& light) {
    std::vector<Violation> v;
    check_light_into(light, "light", v);
    if (!v.empty()) throw Error(v.front().path + ": " + v.front().message);
}

CameraPose CameraPose::identity(double t) { return {Eigen::Vector3d::Zero(), Eigen::Matrix3d::Identity(), t}; }

CameraPose CameraPose::look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target, double t) {
    const Eigen::Vector3d z = (target - eye).normalized();
    Eigen::Vector3d up(0.0, -1.0, 0.0);
    if (std::abs(z.dot(up)) > 0.999) up = Eigen::Vector3d(0.0, 0.0, 1.0);
    const Eigen::Vector3d x = z.cross(up).normalized();
    const Eigen::Vector3d y = z.cross(x);
    CameraPose pose;
    pose.position = eye;
    pose.rotation.col(0) = x;
    pose.rotation.col(1) = y;
    pose.rotation.col(2) = z;
    pose.timestamp = t;
    return pose;
}

bool is_rotation(const Eigen::Matrix3d& r, double tol) {
    if (!r.allFinite()) return false;
    const double ortho_err = (r.transpose() * r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
    return ortho_err <= tol && std::abs(r.determinant() - 1.0) <= tol;
}

std::string ValidationReport::to_string() const {
    std::ostringstream os;
    for (const auto& v : violations) os << v.path << ": " << v.message << "\n";
    return os.str();
}

PointLight sample_track(const LightTrack& track, double t) {
    const auto& keys = track.keyframes;
    if (keys.empty()) throw Error("empty track");
    if (!std::isfinite(t)) throw Error("sample time must be finite");

    PointLight out;
    if (t <= keys.front().time) {
        out = keys.front().light;
    } else if (t >= keys.back().time) {
        out = keys.back().light;
    } else {
        std::size_t i = 1;
        while (keys[i].time < t) ++i;
        const Keyframe& a = keys[i - 1];
        const Keyframe& b = keys[i];
        if (t == b.time) {
            out = b.light;
        } else {
            const double w = (t - a.time) / (b.time - a.time);
            out.position = (1.0 - w) * a.light.position + w * b.light.position;
            out.color = (1.0 - w) * a.light.color + w * b.light.color;
            out.intensity = (1.0 - w) * a.light.intensity + w * b.light.intensity;
        }
    }
    out.color = out.color.cwiseMax(0.0).cwiseMin(1.0);
    out.intensity = std::max(0.0, out.intensity);
    return out;
}

PointLight transform_to_camera(const PointLight& light, const CameraPose& pose_first, const CameraPose& pose_now) {
    if (!is_rotation(pose_first.rotation) || !is_rotation(pose_now.rotation)) {
        throw Error("camera rotation is not orthonormal");
    }
    if (!light.position.allFinite()) throw Error("non-finite light position");
    PointLight out = light;
    out.position = pose_now.to_camera(pose_first.to_world(light.position));
    return out;
}

ValidationReport validate_script(const LightingScript& script) {
    ValidationReport report;
    auto& out = report.violations;
    if (script.frame_count % 4 != 1) out.push_back({"frame_count", "frame_count mod 4 != 1"});
    if (script.frame_count < 5) out.push_back({"frame_count", "frame_count must be >= 5"});
    if (!(std::isfinite(script.fps) && script.fps > 0.0)) out.push_back({"fps", "fps must be positive"});

    const double end = script.fps > 0.0 ? script.duration() : 0.0;
    for (std::size_t i = 0; i < script.tracks.size(); ++i) {
        const std::string tp = "tracks[" + std::to_string(i) + "]";
        const auto& keys = script.tracks[i].keyframes;
        if (keys.empty()) {
            out.push_back({tp + ".keyframes", "empty track"});
            continue;
        }
        for (std::size_t k = 0; k < keys.size(); ++k) {
            const std::string kp = tp + ".keyframes[" + std::to_string(k) + "]";
            if (k > 0 && !(keys[k].time > keys[k - 1].time)) {
                out.push_back({kp + ".t", "non-increasing keyframe times"});
            }
            if (!std::isfinite(keys[k].time) || keys[k].time < 0.0 || keys[k].time > end + 1e-9) {
                out.push_back({kp + ".t", "keyframe time outside clip"});
            }
            check_light_into(keys[k].light, kp, out);
        }
    }
    return report;
}

std::vector<PointLight> sample_script(const LightingScript& script, double t) {
    std::vector<PointLight> lights;
    lights.reserve(script.tracks.size());
    for (const auto& track : script.tracks) lights.push_back(sample_track(track, t));
    return lights;
}

}  // namespace rlk
