// Copyright (C) 2026 RelightKit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "relightkit/dit.hpp"
#include "relightkit/flow.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>

namespace rlk {

enum class TrainMode { pretrain, finetune };

struct OptimizerConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double grad_clip = 1.0;  ///< global L2 norm; <= 0 disables
    /// Flow times are drawn as t = u^(1/time_power), u ~ U(0, 1].
    double time_power = 2.0;
    /// Plain gradient descent instead of Adam (used by tests).
    bool plain_sgd = false;
};

/// Model parameters plus everything needed to continue training
/// deterministically.
struct ModelCheckpoint {
    dit::Dit<float> model;
    TrainMode mode = TrainMode::pretrain;
    std::map<std::string, bool> trainable;
    OptimizerConfig optimizer;
    dit::DitParams<float> adam_m;
    dit::DitParams<float> adam_v;
    std::int64_t step = 0;
    std::uint64_t seed = 0;

    const dit::DitConfig& config() const { return model.config(); }
    const dit::DitParams<float>& params() const { return model.params(); }
};

/// One training example as patch matrices (tokens x patch_dim). `light` is
/// empty for base pretraining.
struct TrainingSample {
    Mat<float> source;
    Mat<float> target;
    Mat<float> light;
};

struct StepResult {
    double loss = 0.0;
    double grad_norm = 0.0;
};

ModelCheckpoint make_pretrain_checkpoint(const dit::DitConfig& config, std::uint64_t seed,
                                         const OptimizerConfig& optimizer = {});

/// Attaches the adapter and freezes everything outside 3D attention, LoRA and
/// the adapter. Optimizer state and step counter restart.
ModelCheckpoint make_finetune_checkpoint(const ModelCheckpoint& base, dit::AdapterInit init, std::uint64_t seed,
                                         const OptimizerConfig& optimizer = {});

/// Flow time for a uniform draw, per OptimizerConfig::time_power.
double draw_flow_time(CounterRng& rng, double time_power);

/// One optimizer step on the unfrozen parameters. Noise and flow times are
/// drawn from (checkpoint.seed, checkpoint.step).
StepResult train_step(ModelCheckpoint& ckpt, std::span<const TrainingSample* const> batch);

/// Same step with caller-supplied flow times and noise, one per sample.
StepResult train_step(ModelCheckpoint& ckpt, std::span<const TrainingSample* const> batch,
                      std::span<const float> times, std::span<const Mat<float>> noises);

/// Mean flow loss and its parameter gradient for a fixed set of (t, eps)
/// draws; used by train_step and by gradient checks.
template <typename Scalar>
Scalar loss_and_grad(const dit::Dit<Scalar>& model, std::span<const TrainingSample* const> batch,
                     std::span<const Scalar> times, std::span<const Mat<Scalar>> noises, dit::DitParams<Scalar>* grads);

/// Velocity field of a checkpoint bound to fixed conditioning.
Mat<float> predict_velocity(const ModelCheckpoint& ckpt, const Mat<float>& source, const Mat<float>* light,
                            const Mat<float>& noisy, float t);

/// Euler sampling of the target patch matrix conditioned on source and light.
Mat<float> sample_target(const ModelCheckpoint& ckpt, const Mat<float>& source, const Mat<float>* light, int steps,
                         std::uint64_t seed);

void save_checkpoint(const ModelCheckpoint& ckpt, const std::filesystem::path& dir);
ModelCheckpoint load_checkpoint(const std::filesystem::path& dir);

nlohmann::json config_to_json(const dit::DitConfig& c);
/// Overlays fields present in `j` onto `base`.
dit::DitConfig config_from_json(const nlohmann::json& j, dit::DitConfig base = {});
nlohmann::json optimizer_to_json(const OptimizerConfig& o);
OptimizerConfig optimizer_from_json(const nlohmann::json& j, OptimizerConfig base = {});

// ---------------------------------------------------------------------------

template <typename Scalar>
Scalar loss_and_grad(const dit::Dit<Scalar>& model, std::span<const TrainingSample* const> batch,
                     std::span<const Scalar> times, std::span<const Mat<Scalar>> noises, dit::DitParams<Scalar>* grads) {
    if (batch.empty()) throw Error("empty batch");
    Scalar total = 0;
    const Scalar inv_b = Scalar(1) / Scalar(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const TrainingSample& s = *batch[i];
        const Mat<Scalar> source = s.source.template cast<Scalar>();
        const Mat<Scalar> x0 = s.target.template cast<Scalar>();
        const Mat<Scalar> light = s.light.template cast<Scalar>();
        const Mat<Scalar>* light_ptr = s.light.size() > 0 ? &light : nullptr;
        const Mat<Scalar> xt = make_xt(x0, noises[i], times[i]);
        dit::ForwardCache<Scalar> cache;
        const Mat<Scalar> v = model.forward(source, xt, light_ptr, times[i], grads ? &cache : nullptr);
        total += flow_loss(v, x0, noises[i]) * inv_b;
        if (grads) model.backward(cache, flow_loss_grad(v, x0, noises[i]) * inv_b, *grads);
    }
    return total;
}

}  // namespace rlk
