// Copyright (C) 2026 RelightKit Authors
// SPDX-License-Identifier: Apache-2.0

#include "relightkit/dataset.hpp"

#include "relightkit/grouping.hpp"
#include "relightkit/io.hpp"
#include "relightkit/rng.hpp"

#include <cstdio>

namespace rlk {

namespace {

// Stream ids keep the scene, trajectory and script draws independent.
constexpr std::uint64_t kSceneStream = 0x5C3E0000;
constexpr std::uint64_t kTrajectoryStream = 0x7EA30000;
constexpr std::uint64_t kScriptStream = 0x5C819000;

double draw(CounterRng& rng, const Range& r) { return rng.uniform(r.lo, r.hi); }

Eigen::Vector3d draw3(CounterRng& rng, double lo, double hi) {
    const double x = rng.uniform(lo, hi);
    const double y = rng.uniform(lo, hi);
    const double z = rng.uniform(lo, hi);
    return {x, y, z};
}

nlohmann::json range_json(const Range& r) { return nlohmann::json::array({r.lo, r.hi}); }

Range range_from(const nlohmann::json& j, const Range& fallback) {
    if (j.is_null()) return fallback;
    if (!j.is_array() || j.size() != 2) throw Error("range must be [lo, hi]");
    return {j[0].get<double>(), j[1].get<double>()};
}

std::string pair_dir_name(int id) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%06d", id);
    return buf;
}

bool in_range(double v, const Range& r) { return v >= r.lo && v <= r.hi; }

}  // namespace

void DatasetConfig::validate() const {
    if (scenes < 1 || trajectories_per_scene < 1) throw Error("dataset needs at least one scene and trajectory");
    if (width < 1 || height < 1 || focal_px <= 0.0) throw Error("bad resolution or focal length");
    if (frame_count < 5 || !valid_frame_count(frame_count)) throw Error("frame_count must be 4N+1 with N >= 1");
    if (!(fps > 0.0)) throw Error("fps must be positive");
    if (held_out_scenes < 0 || held_out_scenes > scenes) throw Error("held_out_scenes out of range");
    for (const Range* r : {&light_x, &light_y, &light_z, &intensity, &color}) {
        if (!(r->lo <= r->hi)) throw Error("range lower bound exceeds upper bound");
    }
    if (intensity.lo < 0.0 || color.lo < 0.0 || color.hi > 1.0) throw Error("light ranges break light invariants");
    if (!(behind_camera_depth < 0.0)) throw Error("behind_camera_depth must be negative");
}

nlohmann::json dataset_config_to_json(const DatasetConfig& c) {
    return {{"scenes", c.scenes},
            {"trajectories_per_scene", c.trajectories_per_scene},
            {"width", c.width},
            {"height", c.height},
            {"frame_count", c.frame_count},
            {"fps", c.fps},
            {"focal_px", c.focal_px},
            {"held_out_scenes", c.held_out_scenes},
            {"light_x", range_json(c.light_x)},
            {"light_y", range_json(c.light_y)},
            {"light_z", range_json(c.light_z)},
            {"intensity", range_json(c.intensity)},
            {"color", range_json(c.color)},
            {"behind_camera_depth", c.behind_camera_depth}};
}

DatasetConfig dataset_config_from_json(const nlohmann::json& j, DatasetConfig c) {
    c.scenes = j.value("scenes", c.scenes);
    c.trajectories_per_scene = j.value("trajectories_per_scene", c.trajectories_per_scene);
    c.width = j.value("width", c.width);
    c.height = j.value("height", c.height);
    c.frame_count = j.value("frame_count", c.frame_count);
    c.fps = j.value("fps", c.fps);
    c.focal_px = j.value("focal_px", c.focal_px);
    c.held_out_scenes = j.value("held_out_scenes", c.held_out_scenes);
    c.light_x = range_from(j.value("light_x", nlohmann::json()), c.light_x);
    c.light_y = range_from(j.value("light_y", nlohmann::json()), c.light_y);
    c.light_z = range_from(j.value("light_z", nlohmann::json()), c.light_z);
    c.intensity = range_from(j.value("intensity", nlohmann::json()), c.intensity);
    c.color = range_from(j.value("color", nlohmann::json()), c.color);
    c.behind_camera_depth = j.value("behind_camera_depth", c.behind_camera_depth);
    c.validate();
    return c;
}

std::vector<PairPlan> plan_dataset(const DatasetConfig& config, std::uint64_t seed) {
    config.validate();
    std::vector<PairPlan> plans;
    plans.reserve(static_cast<std::size_t>(config.pair_count()));
    const int first_held_out = config.scenes - config.held_out_scenes;
    for (int s = 0; s < config.scenes; ++s) {
        for (int tr = 0; tr < config.trajectories_per_scene; ++tr) {
            for (int b = 1; b <= DatasetConfig::kBatches; ++b) {
                PairPlan p;
                p.id = static_cast<int>(plans.size());
                p.scene = s;
                p.trajectory = tr;
                p.batch = b;
                p.seed = splitmix64(seed ^ splitmix64(0xDA7A000000ull + static_cast<std::uint64_t>(p.id)));
                p.held_out = s >= first_held_out;
                plans.push_back(p);
            }
        }
    }
    return plans;
}

SceneSpec make_scene(const DatasetConfig& config, std::uint64_t seed, int scene) {
    CounterRng rng(seed, kSceneStream + static_cast<std::uint64_t>(scene));
    const double duration = (config.frame_count - 1) / config.fps;
    SceneSpec spec;
    const double ground_y = 1.0;
    spec.ground = GroundPlane{ground_y, draw3(rng, 0.35, 0.75)};

    const int background = 1 + static_cast<int>(rng.below(2));
    for (int i = 0; i < background; ++i) {
        Sphere s;
        s.radius = rng.uniform(0.8, 1.4);
        const double x = rng.uniform(-2.5, 2.5);
        const double z = rng.uniform(5.5, 7.5);
        s.center = PointTrack::fixed({x, ground_y - s.radius, z});
        s.albedo = draw3(rng, 0.3, 0.9);
        spec.spheres.push_back(std::move(s));
    }

    const int dynamic = 1 + static_cast<int>(rng.below(2));
    for (int i = 0; i < dynamic; ++i) {
        Sphere s;
        s.radius = rng.uniform(0.35, 0.6);
        const double x = rng.uniform(-1.0, 1.0);
        const double z = rng.uniform(3.0, 4.2);
        const Eigen::Vector3d start(x, ground_y - s.radius, z);
        const double dx = rng.uniform(-0.8, 0.8);
        const double dz = rng.uniform(-0.6, 0.6);
        const Eigen::Vector3d end = start + Eigen::Vector3d(dx, 0.0, dz);
        s.center.keys = {{0.0, start}, {duration, end}};
        s.albedo = draw3(rng, 0.3, 0.9);
        spec.spheres.push_back(std::move(s));
    }

    const double amb = rng.uniform(0.05, 0.15);
    spec.ambient = amb * draw3(rng, 0.8, 1.0);

    PointLight base;
    const double bx = rng.uniform(-2.0, 2.0);
    const double by = rng.uniform(-3.0, -2.0);
    const double bz = rng.uniform(1.0, 4.0);
    base.position = {bx, by, bz};
    base.color = draw3(rng, 0.8, 1.0);
    base.intensity = rng.uniform(3.0, 8.0);
    spec.base_lights.push_back(LightTrack{{{0.0, base}}});
    return spec;
}

std::vector<CameraPose> make_trajectory(const DatasetConfig& config, std::uint64_t seed, int scene, int trajectory,
                                        const SceneSpec& spec) {
    CounterRng rng(seed, kTrajectoryStream + static_cast<std::uint64_t>(scene) * 64 + trajectory);
    const Eigen::Vector3d start(rng.uniform(-0.4, 0.4), rng.uniform(-0.3, 0.1), rng.uniform(-0.3, 0.3));
    const Eigen::Vector3d delta(rng.uniform(-0.5, 0.5), rng.uniform(-0.1, 0.1), rng.uniform(-0.3, 0.3));
    const double duration = (config.frame_count - 1) / config.fps;

    // Dynamic objects are the spheres that move; fall back to all spheres.
    std::vector<const Sphere*> focus;
    for (const auto& s : spec.spheres) {
        if (s.center.keys.size() > 1) focus.push_back(&s);
    }
    if (focus.empty()) {
        for (const auto& s : spec.spheres) focus.push_back(&s);
    }

    std::vector<CameraPose> poses;
    for (int f = 0; f < config.frame_count; ++f) {
        const double t = f / config.fps;
        const double w = duration > 0.0 ? t / duration : 0.0;
        Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
        for (const Sphere* s : focus) centroid += s->center.sample(t);
        centroid /= static_cast<double>(focus.size());
        poses.push_back(CameraPose::look_at(start + w * delta, centroid, t));
    }
    return poses;
}

VaryingParameter varying_parameter(const PairPlan& plan) {
    CounterRng rng(plan.seed, 0xBA7C3);
    return static_cast<VaryingParameter>(rng.below(4));
}

LightingScript make_script(const DatasetConfig& config, const PairPlan& plan) {
    CounterRng rng(plan.seed, kScriptStream);
    LightingScript script;
    script.frame_count = config.frame_count;
    script.fps = config.fps;

    PointLight light;
    const double x = draw(rng, config.light_x);
    const double y = draw(rng, config.light_y);
    const double z = draw(rng, config.light_z);
    light.position = {x, y, plan.batch == 1 ? config.behind_camera_depth : z};
    const double r = draw(rng, config.color);
    const double g = draw(rng, config.color);
    const double b = draw(rng, config.color);
    light.color = {r, g, b};
    light.intensity = draw(rng, config.intensity);

    LightTrack track;
    track.keyframes.push_back({0.0, light});
    if (plan.batch == 3) {
        PointLight end = light;
        switch (varying_parameter(plan)) {
            case VaryingParameter::position_2d: {
                const double nx = draw(rng, config.light_x);
                const double ny = draw(rng, config.light_y);
                end.position.x() = nx;
                end.position.y() = ny;
                break;
            }
            case VaryingParameter::depth:
                end.position.z() = draw(rng, config.light_z);
                break;
            case VaryingParameter::color: {
                const double nr = draw(rng, config.color);
                const double ng = draw(rng, config.color);
                const double nb = draw(rng, config.color);
                end.color = {nr, ng, nb};
                break;
            }
            case VaryingParameter::intensity:
                end.intensity = draw(rng, config.intensity);
                break;
        }
        track.keyframes.push_back({script.duration(), end});
    }
    script.tracks.push_back(std::move(track));
    return script;
}

RenderedPair render_planned_pair(const DatasetConfig& config, std::uint64_t seed, const PairPlan& plan) {
    const SceneSpec scene = make_scene(config, seed, plan.scene);
    const auto trajectory = make_trajectory(config, seed, plan.scene, plan.trajectory, scene);
    return generate_pair(scene, trajectory, make_script(config, plan), plan.seed, config.intrinsics());
}

std::vector<const DatasetEntry*> Dataset::split(bool held_out) const {
    std::vector<const DatasetEntry*> out;
    for (const auto& e : entries) {
        if (e.plan.held_out == held_out) out.push_back(&e);
    }
    return out;
}

Dataset build_dataset(const DatasetConfig& config, std::uint64_t seed) {
    Dataset ds{config, seed, {}};
    for (const auto& plan : plan_dataset(config, seed)) {
        ds.entries.push_back({plan, render_planned_pair(config, seed, plan)});
    }
    return ds;
}

nlohmann::json dataset_manifest(const Dataset& dataset) {
    nlohmann::json pairs = nlohmann::json::array();
    for (const auto& e : dataset.entries) {
        const std::string dir = "pairs/" + pair_dir_name(e.plan.id);
        std::size_t keyframes = 0;
        for (const auto& t : e.pair.script.tracks) keyframes += t.keyframes.size();
        pairs.push_back({{"id", e.plan.id},
                         {"scene", e.plan.scene},
                         {"trajectory", e.plan.trajectory},
                         {"batch", e.plan.batch},
                         {"seed", e.plan.seed},
                         {"split", e.plan.held_out ? "held_out" : "train"},
                         {"light_count", e.pair.script.tracks.size()},
                         {"keyframe_count", keyframes},
                         {"source", dir + "/source.rltk"},
                         {"target", dir + "/target.rltk"},
                         {"script", dir + "/script.json"},
                         {"trajectory_path", dir + "/trajectory.json"}});
    }
    return {{"format", "relightkit-dataset"},
            {"version", 1},
            {"seed", dataset.seed},
            {"config", dataset_config_to_json(dataset.config)},
            {"pair_count", dataset.entries.size()},
            {"pairs", std::move(pairs)}};
}

Dataset generate_dataset(const DatasetConfig& config, std::uint64_t seed, const std::filesystem::path& out_dir) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec || !std::filesystem::is_directory(out_dir)) throw Error("cannot create dataset directory " + out_dir.string());

    Dataset ds = build_dataset(config, seed);
    for (int s = 0; s < config.scenes; ++s) {
        // Scenes are regenerated from (config, seed); the file records the index only.
        write_json(out_dir / "scenes" / (std::to_string(s) + ".json"), {{"scene", s}, {"seed", seed}});
    }
    for (const auto& e : ds.entries) {
        const auto dir = out_dir / "pairs" / pair_dir_name(e.plan.id);
        write_rltk(dir / "source.rltk", video_to_tensor(e.pair.source));
        write_rltk(dir / "target.rltk", video_to_tensor(e.pair.target));
        write_json(dir / "script.json", script_to_json(e.pair.script));
        write_json(dir / "trajectory.json", trajectory_to_json(e.pair.trajectory));
    }
    write_json(out_dir / "manifest.json", dataset_manifest(ds));
    return ds;
}

Dataset load_dataset(const std::filesystem::path& dir) {
    const auto manifest = read_json(dir / "manifest.json");
    if (manifest.value("format", "") != "relightkit-dataset") throw Error("not a relightkit dataset: " + dir.string());
    Dataset ds;
    ds.config = dataset_config_from_json(manifest.at("config"));
    ds.seed = manifest.at("seed").get<std::uint64_t>();
    for (const auto& jp : manifest.at("pairs")) {
        DatasetEntry e;
        e.plan.id = jp.at("id").get<int>();
        e.plan.scene = jp.at("scene").get<int>();
        e.plan.trajectory = jp.at("trajectory").get<int>();
        e.plan.batch = jp.at("batch").get<int>();
        e.plan.seed = jp.at("seed").get<std::uint64_t>();
        e.plan.held_out = jp.at("split").get<std::string>() == "held_out";
        e.pair.seed = e.plan.seed;
        e.pair.source = tensor_to_video(read_rltk(dir / jp.at("source").get<std::string>()), ds.config.fps);
        e.pair.target = tensor_to_video(read_rltk(dir / jp.at("target").get<std::string>()), ds.config.fps);
        e.pair.script = script_from_json(read_json(dir / jp.at("script").get<std::string>()));
        e.pair.trajectory = trajectory_from_json(read_json(dir / jp.at("trajectory_path").get<std::string>()));
        ds.entries.push_back(std::move(e));
    }
    return ds;
}

std::string check_batch_rule(const DatasetConfig& config, const PairPlan& plan, const LightingScript& script) {
    if (script.tracks.size() != 1) return "expected exactly one added light";
    const auto& keys = script.tracks.front().keyframes;
    const PointLight& first = keys.front().light;
    auto lateral_ok = [&](const PointLight& l) {
        return in_range(l.position.x(), config.light_x) && in_range(l.position.y(), config.light_y);
    };
    switch (plan.batch) {
        case 1:
            if (keys.size() != 1) return "batch 1 light must be fixed (one keyframe)";
            if (!(first.position.z() < 0.0)) return "batch 1 light must sit behind the camera (z < 0)";
            if (first.position.z() != config.behind_camera_depth) return "batch 1 light depth must be the fixed depth";
            if (!lateral_ok(first)) return "batch 1 lateral position outside range";
            return {};
        case 2:
            if (keys.size() != 1) return "batch 2 light must be fixed (one keyframe)";
            if (!lateral_ok(first) || !in_range(first.position.z(), config.light_z)) return "batch 2 position outside range";
            if (!in_range(first.intensity, config.intensity)) return "batch 2 intensity outside range";
            return {};
        case 3: {
            if (keys.size() < 2) return "batch 3 light must have at least two keyframes";
            for (std::size_t k = 1; k < keys.size(); ++k) {
                const PointLight& a = keys[k - 1].light;
                const PointLight& b = keys[k].light;
                const bool xy = a.position.head<2>() != b.position.head<2>();
                const bool z = a.position.z() != b.position.z();
                const bool color = a.color != b.color;
                const bool inten = a.intensity != b.intensity;
                if (int(xy) + int(z) + int(color) + int(inten) != 1) {
                    return "batch 3 keyframes must differ in exactly one parameter";
                }
            }
            return {};
        }
        default:
            return "unknown batch";
    }
}

}  // namespace rlk
