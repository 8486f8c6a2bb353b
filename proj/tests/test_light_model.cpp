// Copyright (C) 2026 RelightKit Authors
// SPDX-License-Identifier: Apache-2.0

#include "relightkit/light_model.hpp"
#include "relightkit/rng.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace rlk;

namespace {

PointLight light(Eigen::Vector3d p, Eigen::Vector3d c, double i) { return PointLight{p, c, i}; }

bool has_violation(const ValidationReport& r, const std::string& msg) {
    for (const auto& v : r.violations) {
        if (v.message == msg) return true;
    }
    return false;
}

LightingScript one_light_script(int frames = 17) {
    LightingScript s;
    s.frame_count = frames;
    s.fps = 8.0;
    s.tracks.push_back({{{0.0, light({0, 0, 2}, {1, 1, 1}, 5)}}});
    return s;
}

CameraPose yaw_pose(double degrees, Eigen::Vector3d position = Eigen::Vector3d::Zero()) {
    CameraPose p;
    p.position = position;
    p.rotation = Eigen::AngleAxisd(degrees * std::numbers::pi / 180.0, Eigen::Vector3d::UnitY()).toRotationMatrix();
    return p;
}

}  // namespace

TEST_SUITE("light_model") {
    TEST_CASE("single keyframe extrapolates as a constant") {
        const PointLight l = light({0, 0, 2}, {1, 1, 1}, 5);
        const LightTrack track{{{0.0, l}}};
        CHECK(sample_track(track, 10.0) == l);
        CHECK(sample_track(track, -3.0) == l);
    }

    TEST_CASE("midpoint interpolates intensity") {
        const LightTrack track{{{0.0, light({0, 0, 2}, {1, 1, 1}, 0)}, {2.0, light({0, 0, 2}, {1, 1, 1}, 8)}}};
        const PointLight m = sample_track(track, 1.0);
        CHECK(m.intensity == doctest::Approx(4.0));
        CHECK(m.position == Eigen::Vector3d(0, 0, 2));
        CHECK(m.color == Eigen::Vector3d(1, 1, 1));
    }

    TEST_CASE("position and color interpolate linearly") {
        const PointLight a = light({-1, -1, 2}, {1, 0, 0}, 5);
        const PointLight b = light({1, 1, 2}, {0, 1, 0}, 5);
        const LightTrack track{{{0.0, a}, {4.0, b}}};
        const PointLight m = sample_track(track, 2.0);
        // Independent lerp with weight w = (t - t0) / (t1 - t0).
        const double w = (2.0 - 0.0) / (4.0 - 0.0);
        for (int i = 0; i < 3; ++i) {
            CHECK(m.position[i] == doctest::Approx(a.position[i] + w * (b.position[i] - a.position[i])));
            CHECK(m.color[i] == doctest::Approx(a.color[i] + w * (b.color[i] - a.color[i])));
        }
        CHECK(m.position.isApprox(Eigen::Vector3d(0, 0, 2)));
        CHECK(m.color.isApprox(Eigen::Vector3d(0.5, 0.5, 0)));
    }

    TEST_CASE("sampling is exact at keyframe times") {
        CounterRng rng(11, 0);
        for (int trial = 0; trial < 50; ++trial) {
            LightTrack track;
            double t = rng.uniform(0.0, 0.5);
            const int n = 1 + static_cast<int>(rng.below(5));
            for (int k = 0; k < n; ++k) {
                track.keyframes.push_back(
                    {t, light({rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(0.5, 4)},
                              {rng.uniform(), rng.uniform(), rng.uniform()}, rng.uniform(0, 10))});
                t += rng.uniform(0.1, 1.0);
            }
            for (const auto& kf : track.keyframes) {
                const PointLight s = sample_track(track, kf.time);
                CHECK((s.position - kf.light.position).cwiseAbs().maxCoeff() <= 1e-9);
                CHECK((s.color - kf.light.color).cwiseAbs().maxCoeff() <= 1e-9);
                CHECK(std::abs(s.intensity - kf.light.intensity) <= 1e-9);
            }
        }
    }

    TEST_CASE("empty track is an error") {
        CHECK_THROWS_WITH_AS(sample_track(LightTrack{}, 0.0), "empty track", Error);
    }

    TEST_CASE("identity transform leaves the light unchanged") {
        const PointLight l = light({0.3, -0.2, 2}, {1, 0.5, 0.2}, 3);
        const CameraPose p = yaw_pose(20, {0.1, 0.2, 0.3});
        const PointLight out = transform_to_camera(l, p, p);
        CHECK((out.position - l.position).norm() <= 1e-12);
        CHECK(out.color == l.color);
        CHECK(out.intensity == l.intensity);
    }

    TEST_CASE("pure camera translation shifts the light") {
        CameraPose moved;
        moved.position = {1, 0, 0};
        const PointLight out = transform_to_camera(light({0, 0, 2}, {1, 1, 1}, 1), CameraPose::identity(), moved);
        CHECK(out.position.isApprox(Eigen::Vector3d(-1, 0, 2)));
    }

    TEST_CASE("yawed camera preserves distance") {
        const PointLight out = transform_to_camera(light({0, 0, 2}, {1, 1, 1}, 1), CameraPose::identity(), yaw_pose(90));
        CHECK(out.position.norm() == doctest::Approx(2.0).epsilon(1e-12));
    }

    TEST_CASE("rotation about the camera center preserves distance") {
        CounterRng rng(5, 1);
        for (int i = 0; i < 20; ++i) {
            const Eigen::Vector3d c(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
            CameraPose first = yaw_pose(rng.uniform(-30, 30), c);
            CameraPose now = first;
            now.rotation = first.rotation * Eigen::AngleAxisd(rng.uniform(-3, 3), Eigen::Vector3d(1, 2, 3).normalized())
                                                .toRotationMatrix();
            const PointLight l = light({rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(0.5, 4)}, {1, 1, 1}, 1);
            CHECK(transform_to_camera(l, first, now).position.norm() == doctest::Approx(l.position.norm()));
        }
    }

    TEST_CASE("transform round trip") {
        CounterRng rng(9, 2);
        for (int i = 0; i < 20; ++i) {
            const CameraPose a = yaw_pose(rng.uniform(-90, 90), {rng.uniform(-1, 1), 0, rng.uniform(-1, 1)});
            const CameraPose b = CameraPose::look_at({rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)},
                                                     {rng.uniform(-1, 1), rng.uniform(-1, 1), 4.0});
            const PointLight l = light({rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(0.5, 4)}, {1, 1, 1}, 1);
            const PointLight back = transform_to_camera(transform_to_camera(l, a, b), b, a);
            CHECK((back.position - l.position).norm() <= 1e-9);
        }
    }

    TEST_CASE("non-orthonormal rotation is rejected") {
        CameraPose bad;
        bad.rotation(0, 0) = 1.5;
        CHECK_THROWS_AS(transform_to_camera(light({0, 0, 2}, {1, 1, 1}, 1), bad, CameraPose::identity()), Error);
        CHECK_FALSE(is_rotation(bad.rotation));
        Eigen::Matrix3d reflection = Eigen::Matrix3d::Identity();
        reflection(2, 2) = -1;
        CHECK_FALSE(is_rotation(reflection));
    }

    TEST_CASE("look_at produces a rotation looking at the target") {
        const CameraPose p = CameraPose::look_at({0.2, -0.1, 0}, {1, 0.5, 4});
        CHECK(is_rotation(p.rotation));
        const Eigen::Vector3d cam = p.to_camera({1, 0.5, 4});
        CHECK(std::abs(cam.x()) <= 1e-12);
        CHECK(std::abs(cam.y()) <= 1e-12);
        CHECK(cam.z() > 0);
    }

    TEST_CASE("intrinsics project and unproject are inverse") {
        const auto k = CameraIntrinsics::centered(48, 48, 32);
        const Eigen::Vector3d q = k.unproject(7, 20, 2.5);
        const Eigen::Vector2d uv = k.project(q);
        CHECK(uv.x() == doctest::Approx(7.0));
        CHECK(uv.y() == doctest::Approx(20.0));
    }

    TEST_CASE("well-formed script validates") { CHECK(validate_script(one_light_script()).ok()); }

    TEST_CASE("frame_count 16 is reported") {
        const auto r = validate_script(one_light_script(16));
        CHECK(has_violation(r, "frame_count mod 4 != 1"));
        CHECK(r.violations.front().path == "frame_count");
    }

    TEST_CASE("too-short clip is reported") {
        CHECK(has_violation(validate_script(one_light_script(1)), "frame_count must be >= 5"));
    }

    TEST_CASE("repeated keyframe time is reported") {
        LightingScript s = one_light_script();
        s.tracks[0].keyframes = {{1.0, light({0, 0, 2}, {1, 1, 1}, 1)}, {1.0, light({0, 0, 2}, {1, 1, 1}, 2)}};
        CHECK(has_violation(validate_script(s), "non-increasing keyframe times"));
    }

    TEST_CASE("keyframe beyond the clip is reported") {
        LightingScript s = one_light_script();
        s.tracks[0].keyframes.push_back({s.duration() + 0.5, light({0, 0, 2}, {1, 1, 1}, 1)});
        CHECK(has_violation(validate_script(s), "keyframe time outside clip"));
    }

    TEST_CASE("light invariants are reported with paths") {
        LightingScript s = one_light_script();
        s.tracks[0].keyframes[0].light.color = {1.2, 0.5, 0.5};
        s.tracks[0].keyframes[0].light.intensity = -1;
        const auto r = validate_script(s);
        CHECK(has_violation(r, "color channel outside [0,1]"));
        CHECK(has_violation(r, "intensity must be >= 0"));
        CHECK(r.violations.size() == 2);
        CHECK_FALSE(r.to_string().empty());
    }

    TEST_CASE("interpolated colors stay within [0,1]") {
        const LightTrack track{{{0.0, light({0, 0, 1}, {0, 1, 0}, 0)}, {1.0, light({0, 0, 1}, {1, 0, 1}, 3)}}};
        for (double t = -1.0; t <= 2.0; t += 0.05) {
            const PointLight l = sample_track(track, t);
            CHECK(l.color.minCoeff() >= 0.0);
            CHECK(l.color.maxCoeff() <= 1.0);
            CHECK(l.intensity >= 0.0);
        }
    }
}
