// Copyright (C) 2026 RelightKit Authors
// SPDX-License-Identifier: Apache-2.0

#include "relightkit/harness.hpp"

#include "relightkit/grouping.hpp"
#include "relightkit/io.hpp"
#include "relightkit/rng.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <map>
#include <mutex>
#include <numbers>
#include <thread>

namespace rlk {

namespace {

nlohmann::json train_config_to_json(const TrainConfig& t) {
    return {{"steps", t.steps}, {"batch", t.batch}, {"log_every", t.log_every},
            {"optimizer", optimizer_to_json(t.optimizer)}};
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig t) {
    t.steps = j.value("steps", t.steps);
    t.batch = j.value("batch", t.batch);
    t.log_every = j.value("log_every", t.log_every);
    if (j.contains("optimizer")) t.optimizer = optimizer_from_json(j.at("optimizer"), t.optimizer);
    return t;
}

nlohmann::json maybe_number(double v) {
    return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}

nlohmann::json vec_json(const Eigen::Vector3d& v) { return nlohmann::json::array({v.x(), v.y(), v.z()}); }

std::vector<double> frame_luminance(const Video& v) {
    std::vector<double> out;
    for (const auto& f : v.frames) {
        const double lum = 0.2126 * f.channel[0].cast<double>().mean() + 0.7152 * f.channel[1].cast<double>().mean() +
                           0.0722 * f.channel[2].cast<double>().mean();
        out.push_back(lum);
    }
    return out;
}

Video clamp_unit(Video v) {
    for (auto& f : v.frames) {
        for (auto& c : f.channel) c = c.max(0.0f).min(1.0f);
    }
    return v;
}

Video frame_range(const Video& v, int first, int count) {
    Video out;
    out.fps = v.fps;
    out.frames.assign(v.frames.begin() + first, v.frames.begin() + first + count);
    return out;
}

PointLight make_light(const Eigen::Vector3d& pos, const Eigen::Vector3d& color, double intensity) {
    return PointLight{pos, color, intensity};
}

int sign_of(double v) { return (v > 0.0) - (v < 0.0); }

std::vector<int> held_out_scene_ids(const DatasetConfig& c) {
    std::vector<int> out;
    for (int s = c.scenes - c.held_out_scenes; s < c.scenes; ++s) out.push_back(s);
    return out;
}

const Eigen::Vector3d kWhite(1.0, 1.0, 1.0);
const Eigen::Vector3d kRed(1.0, 0.15, 0.15);
const Eigen::Vector3d kGreen(0.15, 1.0, 0.15);
const Eigen::Vector3d kBlue(0.15, 0.15, 1.0);

// Suite light placements in first-frame camera coordinates.
const Eigen::Vector3d kCenter(0.0, -0.6, 2.0);
const Eigen::Vector3d kTopLeft(-1.4, -1.4, 2.0);
const Eigen::Vector3d kBottomRight(1.4, 0.4, 2.0);
constexpr double kLadderIntensity = 3.5;
constexpr double kSuiteIntensity = 10.0;
constexpr double kDepths[] = {1.0, 2.0, 3.5, 5.0};
constexpr int kEdgeFrames = 4;

struct Job {
    std::string id;
    std::string suite;
    int scene = -1;
    int pair = -1;
    const Video* source = nullptr;
    const Video* oracle = nullptr;
    LightingScript script;
    std::vector<CameraPose> trajectory;
    std::uint64_t seed = 0;
    Video generated;
};

/// Rendered inputs of one held-out scene along trajectory 0.
struct SceneView {
    int scene = 0;
    SceneSpec spec;
    std::vector<CameraPose> trajectory;
    Video source;
    std::vector<Video> oracles;  // one per suite job, owned here
};

std::uint64_t job_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    return splitmix64(seed ^ splitmix64((a << 32) ^ b ^ 0xE7A1ull));
}

void run_jobs(std::vector<Job>& jobs, const Relighter& relighter, int threads) {
    parallel_for(static_cast<int>(jobs.size()), threads, [&](int i) {
        Job& j = jobs[static_cast<std::size_t>(i)];
        RelightRequest req{j.source, &j.script, j.trajectory, j.oracle, j.seed};
        j.generated = clamp_unit(relighter(req));
    });
}

nlohmann::json base_record(const Job& j) {
    nlohmann::json r = {{"id", j.id}, {"suite", j.suite}, {"scene", j.scene}};
    if (j.pair >= 0) r["pair"] = j.pair;
    r["light"] = script_to_json(j.script);
    r["psnr"] = psnr_json(psnr(j.generated, *j.oracle));
    r["luminance"] = frame_luminance(j.generated);
    return r;
}

void write_sheet(const std::filesystem::path& dir, const Job& j, const HarnessConfig& config) {
    const int mid = j.source->frame_count() / 2;
    const auto seq = build_mpli_sequence(j.script, j.trajectory, config.dataset.intrinsics(), config.depths,
                                         config.scalers);
    const int g = std::min(static_cast<int>(seq.mplis.size()) - 1, (mid + kPaddingFrames) / kFramesPerGroup);
    write_ppm(dir / (j.id + ".ppm"), contact_sheet(*j.source, j.generated, *j.oracle, seq.mplis[g], mid));
}

}  // namespace

// ---------------------------------------------------------------------------

dit::DitConfig HarnessConfig::model_config() const {
    dit::DitConfig m = model;
    const LatentShape shape = latent_shape();
    m.latent_channels = shape.channels();
    m.latent_height = shape.latent_height();
    m.latent_width = shape.latent_width();
    m.groups = latent_group_count(dataset.frame_count);
    return m;
}

void HarnessConfig::validate() const {
    dataset.validate();
    if (spatial_factor < 1 || dataset.height % spatial_factor != 0 || dataset.width % spatial_factor != 0) {
        throw Error("spatial_factor must divide the frame size");
    }
    model_config().validate();
    if (depths.empty()) throw Error("at least one MPLI plane is required");
    for (std::size_t i = 0; i < depths.size(); ++i) {
        if (!(depths[i] > 0.0) || (i > 0 && !(depths[i] > depths[i - 1]))) {
            throw Error("plane depths must be positive and increasing");
        }
    }
    if (depths.size() != 1 && depths.size() != static_cast<std::size_t>(kFramesPerGroup)) {
        throw Error("the codec accepts 1 or 4 MPLI planes");
    }
    for (const TrainConfig* t : {&pretrain, &finetune}) {
        if (t->steps < 0 || t->batch < 1 || t->log_every < 1) throw Error("bad training schedule");
    }
    if (sample_steps < 1) throw Error("sample_steps must be >= 1");
    if (!(data_fraction > 0.0 && data_fraction <= 1.0)) throw Error("data_fraction must be in (0, 1]");
}

nlohmann::json harness_config_to_json(const HarnessConfig& c) {
    return {{"dataset", dataset_config_to_json(c.dataset)},
            {"model", config_to_json(c.model_config())},
            {"spatial_factor", c.spatial_factor},
            {"depths", c.depths},
            {"scalers", {{"s1", c.scalers.s1}, {"s2", c.scalers.s2}}},
            {"pretrain", train_config_to_json(c.pretrain)},
            {"finetune", train_config_to_json(c.finetune)},
            {"sample_steps", c.sample_steps},
            {"data_fraction", c.data_fraction},
            {"seed", c.seed}};
}

HarnessConfig harness_config_from_json(const nlohmann::json& j, HarnessConfig c) {
    if (!j.is_object()) throw Error("config must be a JSON object");
    if (j.contains("dataset")) c.dataset = dataset_config_from_json(j.at("dataset"), c.dataset);
    if (j.contains("model")) c.model = config_from_json(j.at("model"), c.model);
    c.spatial_factor = j.value("spatial_factor", c.spatial_factor);
    if (j.contains("depths")) c.depths = j.at("depths").get<std::vector<double>>();
    if (j.contains("scalers")) {
        c.scalers.s1 = j.at("scalers").value("s1", c.scalers.s1);
        c.scalers.s2 = j.at("scalers").value("s2", c.scalers.s2);
    }
    if (j.contains("pretrain")) c.pretrain = train_config_from_json(j.at("pretrain"), c.pretrain);
    if (j.contains("finetune")) c.finetune = train_config_from_json(j.at("finetune"), c.finetune);
    c.sample_steps = j.value("sample_steps", c.sample_steps);
    c.data_fraction = j.value("data_fraction", c.data_fraction);
    c.seed = j.value("seed", c.seed);
    c.validate();
    return c;
}

std::string config_hash(const HarnessConfig& c) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char ch : harness_config_to_json(c).dump()) {
        h ^= ch;
        h *= 0x100000001b3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

int resolve_threads(int requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("RELIGHTKIT_THREADS")) {
        const int n = std::atoi(env);
        if (n > 0) return n;
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
    const int workers = std::min(n, resolve_threads(threads));
    if (workers <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::mutex mu;
    int failed_index = n;
    std::exception_ptr failure;
    auto work = [&] {
        for (int i = next++; i < n; i = next++) {
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(mu);
                if (i < failed_index) {
                    failed_index = i;
                    failure = std::current_exception();
                }
            }
        }
    };
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

// ---------------------------------------------------------------------------
// Metrics

Psnr psnr(const Video& a, const Video& b) {
    if (a.frame_count() != b.frame_count() || a.height() != b.height() || a.width() != b.width()) {
        throw Error("psnr: shape mismatch");
    }
    double sq = 0.0;
    std::size_t count = 0;
    for (int f = 0; f < a.frame_count(); ++f) {
        for (int c = 0; c < 3; ++c) {
            const auto& x = a.frames[f].channel[c];
            const auto& y = b.frames[f].channel[c];
            if (x.minCoeff() < 0.0f || x.maxCoeff() > 1.0f || y.minCoeff() < 0.0f || y.maxCoeff() > 1.0f) {
                throw Error("psnr: values outside [0, 1]");
            }
            sq += (x.cast<double>() - y.cast<double>()).square().sum();
            count += static_cast<std::size_t>(x.size());
        }
    }
    if (count == 0) throw Error("psnr: empty video");
    const double mse = sq / static_cast<double>(count);
    if (mse == 0.0) return {0.0, true};
    return {10.0 * std::log10(1.0 / mse), false};
}

nlohmann::json psnr_json(const Psnr& p) {
    return {{"db", p.infinite ? nlohmann::json(nullptr) : nlohmann::json(p.db)}, {"infinite", p.infinite}};
}

double luminance(const Eigen::Vector3d& rgb) { return 0.2126 * rgb.x() + 0.7152 * rgb.y() + 0.0722 * rgb.z(); }

double mean_luminance(const Video& v) {
    const auto series = frame_luminance(v);
    double s = 0.0;
    for (double x : series) s += x;
    return series.empty() ? 0.0 : s / static_cast<double>(series.size());
}

Eigen::Vector3d mean_delta(const Video& a, const Video& b) {
    if (a.frame_count() != b.frame_count() || a.frame_count() == 0) throw Error("mean_delta: shape mismatch");
    Eigen::Vector3d sum = Eigen::Vector3d::Zero();
    for (int f = 0; f < a.frame_count(); ++f) {
        for (int c = 0; c < 3; ++c) {
            sum[c] += (a.frames[f].channel[c].cast<double>() - b.frames[f].channel[c].cast<double>()).mean();
        }
    }
    return sum / static_cast<double>(a.frame_count());
}

std::optional<double> hue_degrees(const Eigen::Vector3d& rgb) {
    if (rgb.maxCoeff() - rgb.minCoeff() < 1e-9) return std::nullopt;
    const double deg =
        std::atan2(std::sqrt(3.0) * (rgb.y() - rgb.z()), 2.0 * rgb.x() - rgb.y() - rgb.z()) * 180.0 / std::numbers::pi;
    return deg < 0.0 ? deg + 360.0 : deg;
}

double hue_distance(double a, double b) {
    const double d = std::fmod(std::abs(a - b), 360.0);
    return std::min(d, 360.0 - d);
}

std::optional<Eigen::Vector2d> gain_centroid(const Video& a, const Video& b) {
    if (a.frame_count() != b.frame_count() || a.frame_count() == 0) throw Error("gain_centroid: shape mismatch");
    const int h = a.height();
    const int w = a.width();
    Eigen::ArrayXXd gain = Eigen::ArrayXXd::Zero(h, w);
    for (int f = 0; f < a.frame_count(); ++f) {
        Eigen::ArrayXXd d = Eigen::ArrayXXd::Zero(h, w);
        const double weights[3] = {0.2126, 0.7152, 0.0722};
        for (int c = 0; c < 3; ++c) {
            d += weights[c] * (a.frames[f].channel[c].cast<double>() - b.frames[f].channel[c].cast<double>());
        }
        gain += d.max(0.0);
    }
    const double total = gain.sum();
    if (!(total > 1e-12)) return std::nullopt;
    double sx = 0.0;
    double sy = 0.0;
    for (int v = 0; v < h; ++v) {
        for (int u = 0; u < w; ++u) {
            sx += gain(v, u) * (u + 0.5 - 0.5 * w);
            sy += gain(v, u) * (v + 0.5 - 0.5 * h);
        }
    }
    return Eigen::Vector2d(sx / total, sy / total);
}

bool strictly_increasing(const std::vector<double>& v) {
    for (std::size_t i = 1; i < v.size(); ++i) {
        if (!(v[i] > v[i - 1])) return false;
    }
    return true;
}

// ---------------------------------------------------------------------------
// Training

TrainingSample make_training_sample(const RenderedPair& pair, const HarnessConfig& config, bool with_light) {
    const dit::DitConfig cfg = config.model_config();
    TrainingSample s;
    s.source = dit::patch_matrix<float>(encode_video(pair.source, config.spatial_factor).groups, cfg);
    s.target = dit::patch_matrix<float>(encode_video(pair.target, config.spatial_factor).groups, cfg);
    if (with_light) s.light = light_patches(pair.script, pair.trajectory, config);
    return s;
}

std::vector<TrainingSample> make_training_samples(const Dataset& dataset, const HarnessConfig& config,
                                                  bool with_light) {
    const auto train = dataset.split(false);
    std::vector<TrainingSample> out(train.size());
    parallel_for(static_cast<int>(train.size()), config.threads, [&](int i) {
        out[static_cast<std::size_t>(i)] = make_training_sample(train[static_cast<std::size_t>(i)]->pair, config,
                                                                with_light);
    });
    return out;
}

std::vector<int> subset_indices(int n, double fraction, std::uint64_t seed) {
    if (n < 0 || !(fraction > 0.0 && fraction <= 1.0)) throw Error("bad subset request");
    std::vector<int> idx(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
    CounterRng rng(seed, 0x5AB5E7);
    for (int i = n - 1; i > 0; --i) {
        const auto j = static_cast<int>(rng.below(static_cast<std::uint64_t>(i) + 1));
        std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
    }
    const auto k = static_cast<std::size_t>(std::min<double>(n, std::ceil(fraction * n)));
    idx.resize(k);
    std::sort(idx.begin(), idx.end());
    return idx;
}

nlohmann::json TrainLog::to_json() const {
    return {{"steps", steps}, {"losses", losses}, {"final_loss", final_loss}};
}

namespace {

void run_training(ModelCheckpoint& ckpt, std::span<const TrainingSample> samples, const TrainConfig& tc,
                  TrainLog* log, const ProgressFn& progress) {
    if (tc.steps > 0 && samples.empty()) throw Error("training set is empty");
    CounterRng picker(ckpt.seed, 0xBA7C4);
    std::vector<const TrainingSample*> batch(static_cast<std::size_t>(tc.batch));
    double window = 0.0;
    int window_count = 0;
    double last_window = 0.0;
    for (int i = 0; i < tc.steps; ++i) {
        CounterRng rng = picker.fork(static_cast<std::uint64_t>(ckpt.step));
        for (auto& b : batch) b = &samples[rng.below(samples.size())];
        const StepResult r = train_step(ckpt, batch);
        window += r.loss;
        ++window_count;
        if (window_count == tc.log_every || i + 1 == tc.steps) {
            last_window = window / window_count;
            if (log) {
                log->steps.push_back(ckpt.step);
                log->losses.push_back(last_window);
            }
            if (progress) progress(ckpt.step, last_window);
            window = 0.0;
            window_count = 0;
        }
    }
    if (log) log->final_loss = last_window;
}

}  // namespace

ModelCheckpoint pretrain_base(std::span<const TrainingSample> samples, const HarnessConfig& config,
                              std::uint64_t seed, TrainLog* log, const ProgressFn& progress) {
    config.validate();
    if (samples.empty()) throw Error("pretraining dataset is empty");
    ModelCheckpoint ckpt = make_pretrain_checkpoint(config.model_config(), seed, config.pretrain.optimizer);
    run_training(ckpt, samples, config.pretrain, log, progress);
    return ckpt;
}

ModelCheckpoint finetune_relight(const ModelCheckpoint& base, std::span<const TrainingSample> samples,
                                 const HarnessConfig& config, dit::AdapterInit init, std::uint64_t seed,
                                 TrainLog* log, const ProgressFn& progress) {
    config.validate();
    if (samples.empty()) throw Error("finetune dataset is empty");
    dit::DitConfig expected = config.model_config();
    expected.adapter_init = base.config().adapter_init;
    if (config_to_json(expected) != config_to_json(base.config())) {
        throw Error("base checkpoint does not match the harness model config");
    }
    ModelCheckpoint ckpt = make_finetune_checkpoint(base, init, seed, config.finetune.optimizer);
    if (config.data_fraction < 1.0) {
        std::vector<TrainingSample> subset;
        for (int i : subset_indices(static_cast<int>(samples.size()), config.data_fraction, config.seed)) {
            subset.push_back(samples[static_cast<std::size_t>(i)]);
        }
        run_training(ckpt, subset, config.finetune, log, progress);
    } else {
        run_training(ckpt, samples, config.finetune, log, progress);
    }
    return ckpt;
}

// ---------------------------------------------------------------------------
// Relighting

Mat<float> light_patches(const LightingScript& script, std::span<const CameraPose> trajectory,
                         const HarnessConfig& config) {
    const auto seq =
        build_mpli_sequence(script, trajectory, config.dataset.intrinsics(), config.depths, config.scalers);
    return dit::patch_matrix<float>(encode_mpli_sequence(seq, config.spatial_factor), config.model_config());
}

Video relight_with_model(const ModelCheckpoint& ckpt, const HarnessConfig& config, const RelightRequest& request) {
    if (!request.source || !request.script) throw Error("relight request needs a source and a script");
    const dit::DitConfig& cfg = ckpt.config();
    const LatentVideo src = encode_video(*request.source, config.spatial_factor);
    const Mat<float> source = dit::patch_matrix<float>(src.groups, cfg);
    Mat<float> light;
    if (ckpt.params().has_adapter()) light = light_patches(*request.script, request.trajectory, config);
    const Mat<float> x0 =
        sample_target(ckpt, source, ckpt.params().has_adapter() ? &light : nullptr, config.sample_steps, request.seed);
    LatentVideo out{dit::latent_from_patches(x0, cfg), src.shape, src.frame_count};
    return clamp_unit(decode_video(out, request.source->fps));
}

Relighter model_relighter(const ModelCheckpoint& ckpt, const HarnessConfig& config) {
    return [&ckpt, config](const RelightRequest& r) { return relight_with_model(ckpt, config, r); };
}

Relighter oracle_relighter() {
    return [](const RelightRequest& r) {
        if (!r.oracle) throw Error("oracle stub needs a ground-truth video");
        return decode_video(encode_video(*r.oracle), r.oracle->fps);
    };
}

Relighter copy_source_relighter() {
    return [](const RelightRequest& r) {
        if (!r.source) throw Error("relight request needs a source");
        return *r.source;
    };
}

// ---------------------------------------------------------------------------
// Evaluation

nlohmann::json ControllabilitySummary::to_json() const {
    return {{"pairs", pairs},
            {"mean_psnr", maybe_number(mean_psnr)},
            {"mean_baseline_psnr", maybe_number(mean_baseline_psnr)},
            {"psnr_gain", maybe_number(psnr_gain())},
            {"infinite_psnr", infinite_psnr},
            {"ladder", {{"pass", ladder_pass}, {"total", ladder_scenes}}},
            {"color", {{"pass", color_pass}, {"total", colors}}},
            {"position", {{"pass", position_pass}, {"total", position_total}}},
            {"depth", {{"pass", depth_pass}, {"total", depth_total}}},
            {"temporal", {{"pass", temporal_pass}, {"total", temporal_total}}}};
}

nlohmann::json EvalReport::to_json() const {
    return {{"config_hash", config_hash}, {"seed", seed}, {"model", model}, {"summary", summary.to_json()},
            {"records", records}};
}

LightingScript fixed_light_script(const DatasetConfig& config, const std::vector<PointLight>& lights) {
    LightingScript s;
    s.frame_count = config.frame_count;
    s.fps = config.fps;
    for (const auto& l : lights) s.tracks.push_back(LightTrack{{{0.0, l}}});
    return s;
}

namespace {

SceneView render_scene_view(const Dataset& dataset, int scene) {
    const auto& c = dataset.config;
    SceneView view;
    view.scene = scene;
    view.spec = make_scene(c, dataset.seed, scene);
    view.trajectory = make_trajectory(c, dataset.seed, scene, 0, view.spec);
    view.source = render_video(view.spec, view.trajectory, nullptr, c.intrinsics(), c.fps);
    return view;
}

LightingScript temporal_script(const DatasetConfig& config) {
    LightingScript s = fixed_light_script(config, {make_light(kTopLeft, kRed, kSuiteIntensity)});
    s.tracks[0].keyframes.push_back({s.duration(), make_light(kBottomRight, kGreen, kSuiteIntensity)});
    return s;
}

struct SuitePlan {
    std::string suite;
    std::string name;
    LightingScript script;
};

std::vector<SuitePlan> suite_plans(const DatasetConfig& c) {
    std::vector<SuitePlan> plans;
    const double ladder[] = {0.0, kLadderIntensity, 2.0 * kLadderIntensity, 4.0 * kLadderIntensity};
    for (int i = 0; i < 4; ++i) {
        plans.push_back({"intensity", "I" + std::to_string(i),
                         fixed_light_script(c, {make_light(kCenter, kWhite, ladder[i])})});
    }
    const std::pair<const char*, Eigen::Vector3d> colors[] = {
        {"white", kWhite}, {"red", kRed}, {"green", kGreen}, {"blue", kBlue}};
    for (const auto& [name, rgb] : colors) {
        plans.push_back({"color", name, fixed_light_script(c, {make_light(kCenter, rgb, kSuiteIntensity)})});
    }
    const std::pair<const char*, Eigen::Vector3d> places[] = {
        {"top_left", kTopLeft}, {"center", kCenter}, {"bottom_right", kBottomRight}};
    for (const auto& [name, pos] : places) {
        plans.push_back({"position", name, fixed_light_script(c, {make_light(pos, kWhite, kSuiteIntensity)})});
    }
    for (int i = 0; i < 4; ++i) {
        const Eigen::Vector3d pos(0.5, -0.8, kDepths[i]);
        plans.push_back({"depth", "z" + std::to_string(i), fixed_light_script(c, {make_light(pos, kWhite, kSuiteIntensity)})});
    }
    plans.push_back({"temporal", "tl_to_br", temporal_script(c)});
    return plans;
}

}  // namespace

EvalReport evaluate_controllability(const Relighter& relighter, const std::string& model_name, const Dataset& dataset,
                                    const HarnessConfig& config, const EvalOptions& options) {
    const auto& dc = dataset.config;
    EvalReport report;
    report.config_hash = rlk::config_hash(config);
    report.seed = config.seed;
    report.model = model_name;
    if (!options.sheets_dir.empty()) std::filesystem::create_directories(options.sheets_dir);

    std::vector<Job> jobs;
    // Held-out pairs.
    std::size_t pair_jobs = 0;
    if (options.held_out_pairs) {
        for (const DatasetEntry* e : dataset.split(true)) {
            Job j;
            j.id = "pair_" + std::to_string(e->plan.id);
            j.suite = "held_out_pair";
            j.scene = e->plan.scene;
            j.pair = e->plan.id;
            j.source = &e->pair.source;
            j.oracle = &e->pair.target;
            j.script = e->pair.script;
            j.trajectory = e->pair.trajectory;
            j.seed = job_seed(config.seed, 1, static_cast<std::uint64_t>(e->plan.id));
            jobs.push_back(std::move(j));
        }
        pair_jobs = jobs.size();
    }

    // Suites along trajectory 0 of every held-out scene.
    const auto plans = suite_plans(dc);
    std::vector<SceneView> views;
    if (options.suites) {
        const auto scenes = held_out_scene_ids(dc);
        views.resize(scenes.size());
        parallel_for(static_cast<int>(scenes.size()), config.threads, [&](int i) {
            SceneView& v = views[static_cast<std::size_t>(i)];
            v = render_scene_view(dataset, scenes[static_cast<std::size_t>(i)]);
            for (const auto& p : plans) {
                v.oracles.push_back(render_video(v.spec, v.trajectory, &p.script, dc.intrinsics(), dc.fps));
            }
        });
        for (const SceneView& v : views) {
            for (std::size_t k = 0; k < plans.size(); ++k) {
                Job j;
                j.id = "scene" + std::to_string(v.scene) + "_" + plans[k].suite + "_" + plans[k].name;
                j.suite = plans[k].suite;
                j.scene = v.scene;
                j.source = &v.source;
                j.oracle = &v.oracles[k];
                j.script = plans[k].script;
                j.trajectory = v.trajectory;
                // One seed per scene so suite members share their noise.
                j.seed = job_seed(config.seed, 2, static_cast<std::uint64_t>(v.scene));
                jobs.push_back(std::move(j));
            }
        }
    }

    run_jobs(jobs, relighter, config.threads);

    ControllabilitySummary& s = report.summary;
    double psnr_sum = 0.0;
    double base_sum = 0.0;
    for (std::size_t i = 0; i < pair_jobs; ++i) {
        const Job& j = jobs[i];
        nlohmann::json r = base_record(j);
        const Psnr p = psnr(j.generated, *j.oracle);
        const Psnr b = psnr(*j.source, *j.oracle);
        r["baseline_psnr"] = psnr_json(b);
        psnr_sum += p.value();
        base_sum += b.value();
        s.infinite_psnr += p.infinite ? 1 : 0;
        report.records.push_back(std::move(r));
    }
    s.pairs = static_cast<int>(pair_jobs);
    if (pair_jobs > 0) {
        s.mean_psnr = psnr_sum / static_cast<double>(pair_jobs);
        s.mean_baseline_psnr = base_sum / static_cast<double>(pair_jobs);
    }

    // Per-color deltas summed over scenes.
    std::map<std::string, Eigen::Vector3d> color_gen;
    std::map<std::string, Eigen::Vector3d> color_oracle;
    const std::map<std::string, Eigen::Vector3d> color_rgb = {
        {"white", kWhite}, {"red", kRed}, {"green", kGreen}, {"blue", kBlue}};

    std::size_t cursor = pair_jobs;
    for (const SceneView& v : views) {
        std::map<std::string, const Job*> by_name;
        for (std::size_t k = 0; k < plans.size(); ++k) {
            const Job& j = jobs[cursor + k];
            by_name[plans[k].suite + "/" + plans[k].name] = &j;
        }
        auto gain = [&](const Job& j) { return mean_luminance(j.generated) - mean_luminance(*j.source); };
        auto oracle_gain = [&](const Job& j) { return mean_luminance(*j.oracle) - mean_luminance(*j.source); };

        // Intensity ladder.
        std::vector<double> ladder;
        std::vector<double> ladder_oracle;
        for (int i = 0; i < 4; ++i) {
            const Job& j = *by_name["intensity/I" + std::to_string(i)];
            ladder.push_back(mean_luminance(j.generated));
            ladder_oracle.push_back(mean_luminance(*j.oracle));
        }
        const bool ladder_ok = strictly_increasing(ladder);
        ++s.ladder_scenes;
        s.ladder_pass += ladder_ok ? 1 : 0;

        // Color.
        nlohmann::json color_rec = nlohmann::json::object();
        for (const auto& [name, rgb] : color_rgb) {
            const Job& j = *by_name["color/" + name];
            const Eigen::Vector3d d = mean_delta(j.generated, *j.source);
            const Eigen::Vector3d od = mean_delta(*j.oracle, *j.source);
            color_gen[name] = color_gen.count(name) ? Eigen::Vector3d(color_gen[name] + d) : d;
            color_oracle[name] = color_oracle.count(name) ? Eigen::Vector3d(color_oracle[name] + od) : od;
            const auto h = hue_degrees(d);
            color_rec[name] = {{"delta", vec_json(d)}, {"hue", h ? nlohmann::json(*h) : nlohmann::json(nullptr)}};
        }

        // Position: centroid displacement relative to the centered light.
        const auto c_center = gain_centroid(by_name["position/center"]->generated, v.source);
        nlohmann::json pos_rec = nlohmann::json::object();
        for (const auto& [name, pos] : {std::pair{"top_left", kTopLeft}, std::pair{"bottom_right", kBottomRight}}) {
            const auto c = gain_centroid(by_name[std::string("position/") + name]->generated, v.source);
            bool ok = false;
            if (c && c_center) {
                const Eigen::Vector2d disp = *c - *c_center;
                const Eigen::Vector3d light_disp = pos - kCenter;
                ok = disp.dot(light_disp.head<2>()) > 0.0;
                pos_rec[name] = {{"displacement", {disp.x(), disp.y()}}, {"pass", ok}};
            } else {
                pos_rec[name] = {{"displacement", nullptr}, {"pass", false}};
            }
            ++s.position_total;
            s.position_pass += ok ? 1 : 0;
        }

        // Depth: generated gain ordering must match the oracle ordering.
        std::vector<double> depth_gain;
        std::vector<double> depth_oracle;
        for (int i = 0; i < 4; ++i) {
            const Job& j = *by_name["depth/z" + std::to_string(i)];
            depth_gain.push_back(gain(j));
            depth_oracle.push_back(oracle_gain(j));
        }
        bool depth_ok = true;
        for (int a = 0; a < 4; ++a) {
            for (int b = a + 1; b < 4; ++b) {
                depth_ok = depth_ok && sign_of(depth_gain[a] - depth_gain[b]) == sign_of(depth_oracle[a] - depth_oracle[b]);
            }
        }
        ++s.depth_total;
        s.depth_pass += depth_ok ? 1 : 0;

        // Temporal: the gain moves right and shifts from red to green.
        const Job& tj = *by_name["temporal/tl_to_br"];
        const int fc = tj.generated.frame_count();
        const int edge = std::min(kEdgeFrames, fc / 2);
        const Video gen_first = frame_range(tj.generated, 0, edge);
        const Video gen_last = frame_range(tj.generated, fc - edge, edge);
        const Video src_first = frame_range(v.source, 0, edge);
        const Video src_last = frame_range(v.source, fc - edge, edge);
        const auto cf = gain_centroid(gen_first, src_first);
        const auto cl = gain_centroid(gen_last, src_last);
        const Eigen::Vector3d df = mean_delta(gen_first, src_first);
        const Eigen::Vector3d dl = mean_delta(gen_last, src_last);
        const bool moves_right = cf && cl && cl->x() > cf->x();
        const bool shifts_hue = (df.x() - df.y()) > (dl.x() - dl.y());
        const bool temporal_ok = moves_right && shifts_hue;
        ++s.temporal_total;
        s.temporal_pass += temporal_ok ? 1 : 0;

        for (std::size_t k = 0; k < plans.size(); ++k) {
            const Job& j = jobs[cursor + k];
            nlohmann::json r = base_record(j);
            r["luminance_gain"] = gain(j);
            r["oracle_luminance_gain"] = oracle_gain(j);
            if (plans[k].suite == "intensity") {
                r["flags"] = {{"ladder_monotone", ladder_ok}};
                r["ladder"] = ladder;
                r["oracle_ladder"] = ladder_oracle;
            } else if (plans[k].suite == "color") {
                r["hue"] = color_rec[plans[k].name];
            } else if (plans[k].suite == "position" && pos_rec.contains(plans[k].name)) {
                r["flags"] = {{"centroid_sign", pos_rec[plans[k].name]["pass"]}};
                r["displacement"] = pos_rec[plans[k].name]["displacement"];
            } else if (plans[k].suite == "depth") {
                r["flags"] = {{"order_matches_oracle", depth_ok}};
            } else if (plans[k].suite == "temporal") {
                r["flags"] = {{"moves_right", moves_right}, {"red_to_green", shifts_hue}};
            }
            report.records.push_back(std::move(r));
            if (!options.sheets_dir.empty()) write_sheet(options.sheets_dir, j, config);
        }
        cursor += plans.size();
    }
    if (!options.sheets_dir.empty()) {
        for (std::size_t i = 0; i < pair_jobs; ++i) write_sheet(options.sheets_dir, jobs[i], config);
    }

    if (!views.empty()) {
        nlohmann::json color_summary = nlohmann::json::object();
        for (const auto& [name, rgb] : color_rgb) {
            const auto h = hue_degrees(color_gen[name]);
            // White carries no hue; its reference is the oracle response.
            const auto ref = name == "white" ? hue_degrees(color_oracle[name]) : hue_degrees(rgb);
            const bool ok = h && ref && hue_distance(*h, *ref) <= 45.0;
            ++s.colors;
            s.color_pass += ok ? 1 : 0;
            color_summary[name] = {{"hue", h ? nlohmann::json(*h) : nlohmann::json(nullptr)},
                                   {"reference_hue", ref ? nlohmann::json(*ref) : nlohmann::json(nullptr)},
                                   {"error", h && ref ? nlohmann::json(hue_distance(*h, *ref)) : nlohmann::json(nullptr)},
                                   {"pass", ok}};
        }
        report.records.push_back({{"id", "color_summary"}, {"suite", "color"}, {"colors", color_summary}});
    }
    return report;
}

void require_single_light_manifest(const nlohmann::json& manifest) {
    if (!manifest.contains("pairs") || !manifest.at("pairs").is_array()) throw Error("manifest has no pair list");
    for (const auto& p : manifest.at("pairs")) {
        if (p.value("split", "train") != "train") continue;
        if (p.at("light_count").get<int>() != 1) {
            throw Error("training pair " + std::to_string(p.at("id").get<int>()) + " has " +
                        std::to_string(p.at("light_count").get<int>()) + " lights; expected single-light data");
        }
    }
}

nlohmann::json MultiLightReport::to_json() const {
    return {{"records", records},
            {"mean_two_light_psnr", maybe_number(mean_two_light_psnr)},
            {"mean_single_light_psnr", maybe_number(mean_single_light_psnr)},
            {"psnr_gap", maybe_number(mean_single_light_psnr - mean_two_light_psnr)},
            {"superposition_max_error", superposition_max_error}};
}

MultiLightReport ablate_multilight(const Relighter& relighter, const nlohmann::json& training_manifest,
                                   const Dataset& dataset, const HarnessConfig& config) {
    require_single_light_manifest(training_manifest);
    const auto& dc = dataset.config;
    MultiLightReport report;

    // Two co-located half-intensity lights against one full light.
    const PointLight full = make_light(kCenter, kWhite, kSuiteIntensity);
    const PointLight half = make_light(kCenter, kWhite, kSuiteIntensity / 2.0);
    const std::vector<PointLight> one{full};
    const std::vector<PointLight> two{half, half};
    const auto m1 = build_mpli(one, config.depths, dc.intrinsics(), config.scalers);
    const auto m2 = build_mpli(two, config.depths, dc.intrinsics(), config.scalers);
    for (int k = 0; k < m1.plane_count(); ++k) {
        for (int c = 0; c < 3; ++c) {
            report.superposition_max_error =
                std::max(report.superposition_max_error,
                         (m1.planes[k].pixels.channel[c] - m2.planes[k].pixels.channel[c]).abs().maxCoeff());
        }
    }

    const PointLight blue = make_light({-1.0, -0.8, 2.0}, kBlue, 12.0);
    const PointLight green = make_light({1.0, -0.8, 2.0}, kGreen, 5.0);
    const std::pair<const char*, std::vector<PointLight>> configs[] = {
        {"blue_green", {blue, green}}, {"blue", {blue}}, {"green", {green}}};

    const auto scenes = held_out_scene_ids(dc);
    std::vector<SceneView> views(scenes.size());
    parallel_for(static_cast<int>(scenes.size()), config.threads, [&](int i) {
        SceneView& v = views[static_cast<std::size_t>(i)];
        v = render_scene_view(dataset, scenes[static_cast<std::size_t>(i)]);
        for (const auto& [name, lights] : configs) {
            const auto script = fixed_light_script(dc, lights);
            v.oracles.push_back(render_video(v.spec, v.trajectory, &script, dc.intrinsics(), dc.fps));
        }
    });

    std::vector<Job> jobs;
    for (const SceneView& v : views) {
        for (std::size_t k = 0; k < std::size(configs); ++k) {
            Job j;
            j.id = "scene" + std::to_string(v.scene) + "_multilight_" + configs[k].first;
            j.suite = "multilight";
            j.scene = v.scene;
            j.source = &v.source;
            j.oracle = &v.oracles[k];
            j.script = fixed_light_script(dc, configs[k].second);
            j.trajectory = v.trajectory;
            j.seed = job_seed(config.seed, 3, static_cast<std::uint64_t>(v.scene));
            jobs.push_back(std::move(j));
        }
    }
    run_jobs(jobs, relighter, config.threads);

    double two_sum = 0.0;
    double single_sum = 0.0;
    int two_n = 0;
    int single_n = 0;
    for (const Job& j : jobs) {
        nlohmann::json r = base_record(j);
        const Psnr p = psnr(j.generated, *j.oracle);
        const bool two_light = j.script.tracks.size() == 2;
        if (two_light) {
            two_sum += p.value();
            ++two_n;
            // Per-light hue response on the half of the frame each light faces.
            const int w = j.generated.width();
            auto half_delta = [&](int u0, int u1) {
                Eigen::Vector3d d = Eigen::Vector3d::Zero();
                for (int f = 0; f < j.generated.frame_count(); ++f) {
                    for (int c = 0; c < 3; ++c) {
                        d[c] += (j.generated.frames[f].channel[c].middleCols(u0, u1 - u0).cast<double>() -
                                 j.source->frames[f].channel[c].middleCols(u0, u1 - u0).cast<double>())
                                    .mean();
                    }
                }
                return d;
            };
            const auto hl = hue_degrees(half_delta(0, w / 2));
            const auto hr = hue_degrees(half_delta(w / 2, w));
            r["hue_left"] = hl ? nlohmann::json(*hl) : nlohmann::json(nullptr);
            r["hue_right"] = hr ? nlohmann::json(*hr) : nlohmann::json(nullptr);
            r["hue_error_blue"] = hl ? nlohmann::json(hue_distance(*hl, *hue_degrees(kBlue))) : nlohmann::json(nullptr);
            r["hue_error_green"] =
                hr ? nlohmann::json(hue_distance(*hr, *hue_degrees(kGreen))) : nlohmann::json(nullptr);
        } else {
            single_sum += p.value();
            ++single_n;
        }
        report.records.push_back(std::move(r));
    }
    report.mean_two_light_psnr = two_n ? two_sum / two_n : 0.0;
    report.mean_single_light_psnr = single_n ? single_sum / single_n : 0.0;
    return report;
}

nlohmann::json InitAblationReport::to_json() const {
    return {{"copy", {{"final_loss", copy_log.final_loss}, {"loss_curve", copy_log.to_json()}, {"eval", copy.to_json()}}},
            {"zero", {{"final_loss", zero_log.final_loss}, {"loss_curve", zero_log.to_json()}, {"eval", zero.to_json()}}},
            {"copy_lower_loss", copy_log.final_loss < zero_log.final_loss},
            {"copy_higher_psnr", copy.mean_psnr > zero.mean_psnr}};
}

InitAblationReport ablate_init(const ModelCheckpoint& base, std::span<const TrainingSample> samples,
                               const Dataset& dataset, const HarnessConfig& config) {
    InitAblationReport report;
    const ModelCheckpoint copy =
        finetune_relight(base, samples, config, dit::AdapterInit::copy, config.seed, &report.copy_log);
    const ModelCheckpoint zero =
        finetune_relight(base, samples, config, dit::AdapterInit::zero, config.seed, &report.zero_log);
    report.copy = evaluate_controllability(model_relighter(copy, config), "copy", dataset, config).summary;
    report.zero = evaluate_controllability(model_relighter(zero, config), "zero", dataset, config).summary;
    return report;
}

RgbImage<float> contact_sheet(const Video& source, const Video& generated, const Video& oracle,
                              const MultiPlaneLightImage& mpli, int frame) {
    const int h = source.height();
    const int w = source.width();
    const RgbImage<float> planes = visualize_mpli(mpli);
    if (planes.height() != h) throw Error("contact sheet: MPLI size does not match the video");
    RgbImage<float> sheet = RgbImage<float>::zeros(h, 3 * w + planes.width());
    const Video* panels[] = {&source, &generated, &oracle};
    for (int p = 0; p < 3; ++p) {
        for (int c = 0; c < 3; ++c) {
            sheet.channel[c].middleCols(p * w, w) = panels[p]->frames.at(frame).channel[c].max(0.0f).min(1.0f);
        }
    }
    for (int c = 0; c < 3; ++c) sheet.channel[c].rightCols(planes.width()) = planes.channel[c];
    return sheet;
}

}  // namespace rlk
