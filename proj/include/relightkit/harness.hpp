// Copyright (C) 2026 RelightKit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "relightkit/dataset.hpp"
#include "relightkit/latent_codec.hpp"
#include "relightkit/mpli.hpp"
#include "relightkit/training.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace rlk {

struct TrainConfig {
    int steps = 0;
    int batch = 4;
    int log_every = 50;
    OptimizerConfig optimizer;
};

struct HarnessConfig {
    DatasetConfig dataset;
    /// Architecture; latent dims and group count are overwritten from the dataset.
    dit::DitConfig model;
    int spatial_factor = 4;
    std::vector<double> depths = default_plane_depths();
    MpliScalers scalers;
    TrainConfig pretrain{.steps = 5000};
    TrainConfig finetune{.steps = 5000};
    int sample_steps = 4;
    /// Fraction of training pairs used for finetuning; the subset is drawn by seed.
    double data_fraction = 1.0;
    std::uint64_t seed = 0;
    /// Worker cap for evaluation; 0 uses RELIGHTKIT_THREADS or the machine.
    int threads = 0;

    LatentShape latent_shape() const { return {spatial_factor, dataset.height, dataset.width}; }
    /// Model config with latent dims filled in.
    dit::DitConfig model_config() const;
    void validate() const;
};

nlohmann::json harness_config_to_json(const HarnessConfig& c);
/// Overlays fields present in `j` onto `base`.
HarnessConfig harness_config_from_json(const nlohmann::json& j, HarnessConfig base = {});
/// FNV-1a over the canonical JSON dump.
std::string config_hash(const HarnessConfig& c);

int resolve_threads(int requested);
/// Runs fn(i) for i in [0, n) on up to `threads` workers. Each index must
/// write only its own output slot.
void parallel_for(int n, int threads, const std::function<void(int)>& fn);

// ---------------------------------------------------------------------------
// Metrics

struct Psnr {
    double db = 0.0;
    bool infinite = false;

    double value() const { return infinite ? std::numeric_limits<double>::infinity() : db; }
};

Psnr psnr(const Video& a, const Video& b);
nlohmann::json psnr_json(const Psnr& p);

double luminance(const Eigen::Vector3d& rgb);
double mean_luminance(const Video& v);
/// Mean RGB of a - b over all frames and pixels.
Eigen::Vector3d mean_delta(const Video& a, const Video& b);
/// Hue angle in degrees of an RGB vector; nullopt when it carries no chroma.
std::optional<double> hue_degrees(const Eigen::Vector3d& rgb);
double hue_distance(double a, double b);
/// Pixel-space centroid (x, y) of the positive luminance gain of a over b,
/// relative to the image center; nullopt when there is no gain.
std::optional<Eigen::Vector2d> gain_centroid(const Video& a, const Video& b);
bool strictly_increasing(const std::vector<double>& v);

// ---------------------------------------------------------------------------
// Training

/// Patch matrices for one pair; the light is omitted when `with_light` is false.
TrainingSample make_training_sample(const RenderedPair& pair, const HarnessConfig& config, bool with_light);

std::vector<TrainingSample> make_training_samples(const Dataset& dataset, const HarnessConfig& config, bool with_light);

/// Seeded subset holding ceil(fraction * n) indices in ascending order.
std::vector<int> subset_indices(int n, double fraction, std::uint64_t seed);

struct TrainLog {
    std::vector<std::int64_t> steps;
    std::vector<double> losses;
    double final_loss = 0.0;  ///< mean loss over the last log window

    nlohmann::json to_json() const;
};

using ProgressFn = std::function<void(std::int64_t step, double loss)>;

ModelCheckpoint pretrain_base(std::span<const TrainingSample> samples, const HarnessConfig& config,
                              std::uint64_t seed, TrainLog* log = nullptr, const ProgressFn& progress = {});

ModelCheckpoint finetune_relight(const ModelCheckpoint& base, std::span<const TrainingSample> samples,
                                 const HarnessConfig& config, dit::AdapterInit init, std::uint64_t seed,
                                 TrainLog* log = nullptr, const ProgressFn& progress = {});

// ---------------------------------------------------------------------------
// Relighting

struct RelightRequest {
    const Video* source = nullptr;
    const LightingScript* script = nullptr;
    std::span<const CameraPose> trajectory;
    /// Ground truth, consulted only by the oracle stub.
    const Video* oracle = nullptr;
    std::uint64_t seed = 0;
};

using Relighter = std::function<Video(const RelightRequest&)>;

/// Patch matrix of the encoded MPLI sequence for a script.
Mat<float> light_patches(const LightingScript& script, std::span<const CameraPose> trajectory,
                         const HarnessConfig& config);

Video relight_with_model(const ModelCheckpoint& ckpt, const HarnessConfig& config, const RelightRequest& request);
Relighter model_relighter(const ModelCheckpoint& ckpt, const HarnessConfig& config);
/// Replays the codec image of the oracle target.
Relighter oracle_relighter();
Relighter copy_source_relighter();

// ---------------------------------------------------------------------------
// Evaluation

struct ControllabilitySummary {
    int pairs = 0;
    double mean_psnr = 0.0;
    double mean_baseline_psnr = 0.0;
    int infinite_psnr = 0;
    int ladder_scenes = 0;
    int ladder_pass = 0;
    int colors = 0;
    int color_pass = 0;
    int position_pass = 0;
    int position_total = 0;
    int depth_pass = 0;
    int depth_total = 0;
    int temporal_pass = 0;
    int temporal_total = 0;

    double psnr_gain() const { return mean_psnr - mean_baseline_psnr; }
    nlohmann::json to_json() const;
};

struct EvalReport {
    std::string config_hash;
    std::uint64_t seed = 0;
    std::string model;
    nlohmann::json records = nlohmann::json::array();
    ControllabilitySummary summary;

    nlohmann::json to_json() const;
};

/// Light script helpers used by the suites (first-frame camera coordinates).
LightingScript fixed_light_script(const DatasetConfig& config, const std::vector<PointLight>& lights);

struct EvalOptions {
    bool held_out_pairs = true;
    bool suites = true;
    /// Directory for PPM contact sheets; empty disables them.
    std::filesystem::path sheets_dir;
};

EvalReport evaluate_controllability(const Relighter& relighter, const std::string& model_name, const Dataset& dataset,
                                    const HarnessConfig& config, const EvalOptions& options = {});

/// Checks that every manifest pair carries one light; throws otherwise.
void require_single_light_manifest(const nlohmann::json& manifest);

struct MultiLightReport {
    nlohmann::json records = nlohmann::json::array();
    double mean_two_light_psnr = 0.0;
    double mean_single_light_psnr = 0.0;
    double superposition_max_error = 0.0;

    nlohmann::json to_json() const;
};

MultiLightReport ablate_multilight(const Relighter& relighter, const nlohmann::json& training_manifest,
                                   const Dataset& dataset, const HarnessConfig& config);

struct InitAblationReport {
    TrainLog copy_log;
    TrainLog zero_log;
    ControllabilitySummary copy;
    ControllabilitySummary zero;

    nlohmann::json to_json() const;
};

InitAblationReport ablate_init(const ModelCheckpoint& base, std::span<const TrainingSample> samples,
                               const Dataset& dataset, const HarnessConfig& config);

/// Contact sheet: source, generated, oracle and MPLI panels of one frame.
RgbImage<float> contact_sheet(const Video& source, const Video& generated, const Video& oracle,
                              const MultiPlaneLightImage& mpli, int frame);

}  // namespace rlk
