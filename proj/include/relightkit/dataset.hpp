// Copyright (C) 2026 RelightKit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "relightkit/scene_renderer.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace rlk {

struct Range {
    double lo = 0.0;
    double hi = 1.0;
};

/// Paired-relighting dataset layout and randomization ranges. Light ranges
/// are in first-frame camera coordinates (x right, y down, z forward).
struct DatasetConfig {
    int scenes = 60;
    int trajectories_per_scene = 4;
    int width = 48;
    int height = 48;
    int frame_count = 17;
    double fps = 8.0;
    double focal_px = 48.0;
    int held_out_scenes = 5;

    Range light_x{-1.8, 1.8};
    Range light_y{-1.6, 0.6};
    Range light_z{0.8, 5.5};
    Range intensity{3.0, 14.0};
    Range color{0.15, 1.0};
    /// Batch 1 places the light at this fixed depth, slightly behind the camera.
    double behind_camera_depth = -0.5;

    static constexpr int kBatches = 3;

    int pair_count() const { return scenes * trajectories_per_scene * kBatches; }
    CameraIntrinsics intrinsics() const { return CameraIntrinsics::centered(focal_px, width, height); }
    void validate() const;
};

nlohmann::json dataset_config_to_json(const DatasetConfig& c);
DatasetConfig dataset_config_from_json(const nlohmann::json& j, DatasetConfig base = {});

/// Which variable a batch-3 script animates.
enum class VaryingParameter { position_2d, depth, color, intensity };

struct PairPlan {
    int id = 0;
    int scene = 0;
    int trajectory = 0;
    int batch = 1;  ///< 1, 2 or 3
    std::uint64_t seed = 0;
    bool held_out = false;
};

/// Enumerates every pair without rendering.
std::vector<PairPlan> plan_dataset(const DatasetConfig& config, std::uint64_t seed);

SceneSpec make_scene(const DatasetConfig& config, std::uint64_t seed, int scene);
std::vector<CameraPose> make_trajectory(const DatasetConfig& config, std::uint64_t seed, int scene, int trajectory,
                                        const SceneSpec& spec);
LightingScript make_script(const DatasetConfig& config, const PairPlan& plan);
/// Parameter animated by a batch-3 plan.
VaryingParameter varying_parameter(const PairPlan& plan);

RenderedPair render_planned_pair(const DatasetConfig& config, std::uint64_t seed, const PairPlan& plan);

struct DatasetEntry {
    PairPlan plan;
    RenderedPair pair;
};

struct Dataset {
    DatasetConfig config;
    std::uint64_t seed = 0;
    std::vector<DatasetEntry> entries;

    std::vector<const DatasetEntry*> split(bool held_out) const;
};

/// Renders every planned pair in memory.
Dataset build_dataset(const DatasetConfig& config, std::uint64_t seed);

nlohmann::json dataset_manifest(const Dataset& dataset);

/// Writes manifest.json, scenes/, and pairs/<id>/{source,target}.rltk,
/// script.json, trajectory.json.
Dataset generate_dataset(const DatasetConfig& config, std::uint64_t seed, const std::filesystem::path& out_dir);

Dataset load_dataset(const std::filesystem::path& dir);

/// Checks the batch rules of one script; returns an empty string when it conforms.
std::string check_batch_rule(const DatasetConfig& config, const PairPlan& plan, const LightingScript& script);

}  // namespace rlk
