// Copyright (C) 2026 RelightKit Authors
// SPDX-License-Identifier: Apache-2.0

#include "relightkit/training.hpp"

#include "relightkit/io.hpp"

#include <cmath>
#include <sstream>

namespace rlk {

namespace {

std::map<std::string, bool> trainable_mask(const dit::DitParams<float>& params, TrainMode mode) {
    std::map<std::string, bool> mask;
    dit::for_each_param(
        [&](const std::string& name, const Mat<float>&) {
            const dit::ParamRole role = dit::param_role(name);
            mask[name] = mode == TrainMode::pretrain
                             ? role == dit::ParamRole::base || role == dit::ParamRole::attention
                             : role != dit::ParamRole::base;
        },
        params);
    return mask;
}

Tensor matrix_to_tensor(const Mat<float>& m) {
    Tensor t{{m.rows(), m.cols()}, {}};
    t.data.resize(static_cast<std::size_t>(m.size()));
    const RowMat<float> rm = m;
    std::copy(rm.data(), rm.data() + rm.size(), t.data.begin());
    return t;
}

Mat<float> tensor_to_matrix(const Tensor& t) {
    if (t.shape.size() != 2) throw Error("checkpoint tensor must be 2-D");
    RowMat<float> rm(t.shape[0], t.shape[1]);
    std::copy(t.data.begin(), t.data.end(), rm.data());
    return rm;
}

const char* mode_name(TrainMode m) { return m == TrainMode::pretrain ? "pretrain" : "finetune"; }

}  // namespace

nlohmann::json config_to_json(const dit::DitConfig& c) {
    return {{"latent_channels", c.latent_channels},
            {"latent_height", c.latent_height},
            {"latent_width", c.latent_width},
            {"groups", c.groups},
            {"patch", c.patch},
            {"width", c.width},
            {"heads", c.heads},
            {"blocks", c.blocks},
            {"mlp_ratio", c.mlp_ratio},
            {"lora_rank", c.lora_rank},
            {"lora_alpha", c.lora_alpha},
            {"time_features", c.time_features},
            {"t_floor", c.t_floor},
            {"adapter_init", c.adapter_init == dit::AdapterInit::copy ? "copy" : "zero"}};
}

nlohmann::json optimizer_to_json(const OptimizerConfig& o) {
    return {{"lr", o.lr},
            {"beta1", o.beta1},
            {"beta2", o.beta2},
            {"eps", o.eps},
            {"grad_clip", o.grad_clip},
            {"time_power", o.time_power},
            {"plain_sgd", o.plain_sgd}};
}

OptimizerConfig optimizer_from_json(const nlohmann::json& j, OptimizerConfig o) {
    o.lr = j.value("lr", o.lr);
    o.beta1 = j.value("beta1", o.beta1);
    o.beta2 = j.value("beta2", o.beta2);
    o.eps = j.value("eps", o.eps);
    o.grad_clip = j.value("grad_clip", o.grad_clip);
    o.time_power = j.value("time_power", o.time_power);
    o.plain_sgd = j.value("plain_sgd", o.plain_sgd);
    if (!(o.lr > 0.0) || !(o.time_power > 0.0)) throw Error("optimizer lr and time_power must be positive");
    return o;
}

dit::DitConfig config_from_json(const nlohmann::json& j, dit::DitConfig c) {
    c.latent_channels = j.value("latent_channels", c.latent_channels);
    c.latent_height = j.value("latent_height", c.latent_height);
    c.latent_width = j.value("latent_width", c.latent_width);
    c.groups = j.value("groups", c.groups);
    c.patch = j.value("patch", c.patch);
    c.width = j.value("width", c.width);
    c.heads = j.value("heads", c.heads);
    c.blocks = j.value("blocks", c.blocks);
    c.mlp_ratio = j.value("mlp_ratio", c.mlp_ratio);
    c.lora_rank = j.value("lora_rank", c.lora_rank);
    c.lora_alpha = j.value("lora_alpha", c.lora_alpha);
    c.time_features = j.value("time_features", c.time_features);
    c.t_floor = j.value("t_floor", c.t_floor);
    const std::string init = j.value("adapter_init", std::string("copy"));
    if (init != "copy" && init != "zero") throw Error("adapter_init must be copy or zero");
    c.adapter_init = init == "copy" ? dit::AdapterInit::copy : dit::AdapterInit::zero;
    c.validate();
    return c;
}

ModelCheckpoint make_pretrain_checkpoint(const dit::DitConfig& config, std::uint64_t seed,
                                         const OptimizerConfig& optimizer) {
    dit::Dit<float> model(config, dit::init_base_params<float>(config, seed));
    ModelCheckpoint ckpt{.model = std::move(model)};
    ckpt.mode = TrainMode::pretrain;
    ckpt.trainable = trainable_mask(ckpt.params(), ckpt.mode);
    ckpt.optimizer = optimizer;
    ckpt.adam_m = dit::zeros_like(ckpt.params());
    ckpt.adam_v = dit::zeros_like(ckpt.params());
    ckpt.seed = seed;
    return ckpt;
}

ModelCheckpoint make_finetune_checkpoint(const ModelCheckpoint& base, dit::AdapterInit init, std::uint64_t seed,
                                         const OptimizerConfig& optimizer) {
    if (base.params().has_adapter()) throw Error("base checkpoint already carries an adapter");
    dit::DitConfig config = base.config();
    config.adapter_init = init;
    dit::DitParams<float> params = base.params();
    dit::init_lia(params, init);
    ModelCheckpoint ckpt{.model = dit::Dit<float>(config, std::move(params))};
    ckpt.mode = TrainMode::finetune;
    ckpt.trainable = trainable_mask(ckpt.params(), ckpt.mode);
    ckpt.optimizer = optimizer;
    ckpt.adam_m = dit::zeros_like(ckpt.params());
    ckpt.adam_v = dit::zeros_like(ckpt.params());
    ckpt.seed = seed;
    return ckpt;
}

double draw_flow_time(CounterRng& rng, double time_power) {
    const double u = 1.0 - rng.uniform();
    return std::pow(u, 1.0 / time_power);
}

StepResult train_step(ModelCheckpoint& ckpt, std::span<const TrainingSample* const> batch) {
    const auto& cfg = ckpt.config();

    CounterRng rng = CounterRng(ckpt.seed, 0x7A11).fork(static_cast<std::uint64_t>(ckpt.step));
    std::vector<float> times;
    std::vector<Mat<float>> noises;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        times.push_back(static_cast<float>(draw_flow_time(rng, ckpt.optimizer.time_power)));
        noises.push_back(standard_normal<float>(cfg.tokens(), cfg.patch_dim(), rng));
    }
    return train_step(ckpt, batch, times, noises);
}

StepResult train_step(ModelCheckpoint& ckpt, std::span<const TrainingSample* const> batch,
                      std::span<const float> times, std::span<const Mat<float>> noises) {
    if (batch.empty()) throw Error("empty batch");
    if (times.size() != batch.size() || noises.size() != batch.size()) {
        throw Error("train_step: one flow time and one noise draw per sample");
    }
    for (const TrainingSample* s : batch) {
        const bool has_light = s->light.size() > 0;
        if (ckpt.mode == TrainMode::finetune && !has_light) throw Error("finetuning requires light latents");
        if (ckpt.mode == TrainMode::pretrain && has_light) throw Error("base pretraining takes no light latents");
    }

    dit::DitParams<float> grads = dit::zeros_like(ckpt.params());
    const float loss = loss_and_grad<float>(ckpt.model, batch, times, noises, &grads);
    if (!std::isfinite(loss)) {
        std::ostringstream os;
        os << "non-finite loss " << loss << " at step " << ckpt.step << " (t =";
        for (float t : times) os << " " << t;
        os << ")";
        throw Error(os.str());
    }

    double sq = 0.0;
    dit::for_each_param(
        [&](const std::string& name, const Mat<float>& g) {
            if (ckpt.trainable.at(name)) sq += g.cast<double>().squaredNorm();
        },
        grads);
    const double norm = std::sqrt(sq);
    if (!std::isfinite(norm)) throw Error("non-finite gradient norm at step " + std::to_string(ckpt.step));
    const auto& opt = ckpt.optimizer;
    const float clip = (opt.grad_clip > 0.0 && norm > opt.grad_clip) ? static_cast<float>(opt.grad_clip / norm) : 1.0f;

    const std::int64_t step = ckpt.step + 1;
    const float lr = static_cast<float>(opt.lr);
    const float b1 = static_cast<float>(opt.beta1);
    const float b2 = static_cast<float>(opt.beta2);
    const float bc1 = static_cast<float>(1.0 - std::pow(opt.beta1, static_cast<double>(step)));
    const float bc2 = static_cast<float>(1.0 - std::pow(opt.beta2, static_cast<double>(step)));
    const float eps = static_cast<float>(opt.eps);
    dit::for_each_param(
        [&](const std::string& name, Mat<float>& p, Mat<float>& g, Mat<float>& m, Mat<float>& v) {
            if (!ckpt.trainable.at(name)) return;
            g *= clip;
            if (opt.plain_sgd) {
                p -= lr * g;
                return;
            }
            m = b1 * m + (1.0f - b1) * g;
            v = b2 * v + (1.0f - b2) * g.cwiseAbs2();
            p.array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + eps);
        },
        ckpt.model.params(), grads, ckpt.adam_m, ckpt.adam_v);
    ckpt.step = step;
    return {static_cast<double>(loss), norm};
}

Mat<float> predict_velocity(const ModelCheckpoint& ckpt, const Mat<float>& source, const Mat<float>* light,
                            const Mat<float>& noisy, float t) {
    return ckpt.model.forward(source, noisy, light, t);
}

Mat<float> sample_target(const ModelCheckpoint& ckpt, const Mat<float>& source, const Mat<float>* light, int steps,
                         std::uint64_t seed) {
    const auto& cfg = ckpt.config();
    return euler_sample<float>(
        [&](const Mat<float>& x, float t) { return ckpt.model.forward(source, x, light, t); }, cfg.tokens(),
        cfg.patch_dim(), steps, seed);
}

void save_checkpoint(const ModelCheckpoint& ckpt, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    nlohmann::json tensors = nlohmann::json::array();
    nlohmann::json frozen = nlohmann::json::object();
    dit::for_each_param(
        [&](const std::string& name, const Mat<float>& p, const Mat<float>& m, const Mat<float>& v) {
            write_rltk(dir / "params" / (name + ".rltk"), matrix_to_tensor(p));
            write_rltk(dir / "adam_m" / (name + ".rltk"), matrix_to_tensor(m));
            write_rltk(dir / "adam_v" / (name + ".rltk"), matrix_to_tensor(v));
            tensors.push_back(name);
            frozen[name] = !ckpt.trainable.at(name);
        },
        ckpt.params(), ckpt.adam_m, ckpt.adam_v);
    nlohmann::json manifest = {
        {"format", "relightkit-checkpoint"},
        {"version", 1},
        {"config", config_to_json(ckpt.config())},
        {"mode", mode_name(ckpt.mode)},
        {"step", ckpt.step},
        {"seed", ckpt.seed},
        {"has_adapter", ckpt.params().has_adapter()},
        {"blocks", ckpt.params().blocks.size()},
        {"tensors", tensors},
        {"frozen", frozen},
        {"optimizer", optimizer_to_json(ckpt.optimizer)}};
    write_json(dir / "checkpoint.json", manifest);
}

ModelCheckpoint load_checkpoint(const std::filesystem::path& dir) {
    const nlohmann::json j = read_json(dir / "checkpoint.json");
    if (j.value("format", "") != "relightkit-checkpoint") throw Error("not a relightkit checkpoint: " + dir.string());
    const dit::DitConfig config = config_from_json(j.at("config"));

    dit::DitParams<float> params;
    params.blocks.resize(j.at("blocks").get<std::size_t>());
    if (j.at("has_adapter").get<bool>()) params.lia_w.resize(1, 1);
    dit::DitParams<float> m = params;
    dit::DitParams<float> v = params;
    std::map<std::string, bool> trainable;
    const auto& frozen = j.at("frozen");
    dit::for_each_param(
        [&](const std::string& name, Mat<float>& p, Mat<float>& pm, Mat<float>& pv) {
            p = tensor_to_matrix(read_rltk(dir / "params" / (name + ".rltk")));
            pm = tensor_to_matrix(read_rltk(dir / "adam_m" / (name + ".rltk")));
            pv = tensor_to_matrix(read_rltk(dir / "adam_v" / (name + ".rltk")));
            trainable[name] = !frozen.at(name).get<bool>();
        },
        params, m, v);

    ModelCheckpoint ckpt{.model = dit::Dit<float>(config, std::move(params))};
    ckpt.mode = j.at("mode").get<std::string>() == "pretrain" ? TrainMode::pretrain : TrainMode::finetune;
    ckpt.trainable = std::move(trainable);
    ckpt.adam_m = std::move(m);
    ckpt.adam_v = std::move(v);
    ckpt.step = j.at("step").get<std::int64_t>();
    ckpt.seed = j.at("seed").get<std::uint64_t>();
    ckpt.optimizer = optimizer_from_json(j.at("optimizer"));
    return ckpt;
}

}  // namespace rlk
