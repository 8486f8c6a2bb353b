// Copyright (C) 2026 RelightKit Authors
// SPDX-License-Identifier: Apache-2.0

#include "relightkit/cli.hpp"

#include "relightkit/harness.hpp"
#include "relightkit/io.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <optional>
#include <ostream>

namespace rlk {

namespace {

namespace fs = std::filesystem;

/// Grouping metadata stored next to a latent tensor; K = 0 marks a video latent.
nlohmann::json latent_sidecar(const LatentVideo& lv, int planes) {
    return {{"spatial_factor", lv.shape.spatial_factor},
            {"frame_count", lv.frame_count},
            {"groups", lv.group_count()},
            {"K", planes}};
}

struct UsageError : Error {
    using Error::Error;
};

struct Common {
    std::optional<std::uint64_t> seed;
    std::string config;
    std::string out;
    int threads = 0;
};

void add_common(CLI::App* sub, Common& c, const std::string& default_out) {
    c.out = default_out;
    sub->add_option("--seed", c.seed, "Random seed");
    sub->add_option("--config", c.config, "JSON config file (flags override its fields)")->check(CLI::ExistingFile);
    sub->add_option("--out", c.out, "Output directory")->capture_default_str();
    sub->add_option("--threads", c.threads, "Worker cap (default: RELIGHTKIT_THREADS or all cores)")
        ->check(CLI::PositiveNumber);
}

/// Config precedence: flags, then --config, then `fallback` (a stored run
/// config), then defaults.
HarnessConfig load_config(const Common& c, const fs::path& fallback = {}) {
    HarnessConfig cfg;
    if (!c.config.empty()) {
        cfg = harness_config_from_json(read_json(c.config));
    } else if (!fallback.empty() && fs::exists(fallback)) {
        cfg = harness_config_from_json(read_json(fallback));
    }
    if (c.seed) cfg.seed = *c.seed;
    cfg.threads = c.threads;
    cfg.validate();
    return cfg;
}

LightingScript load_script(const fs::path& path) {
    LightingScript script = script_from_json(read_json(path));
    const ValidationReport report = validate_script(script);
    if (!report.ok()) throw UsageError(path.string() + ": " + report.to_string());
    return script;
}

std::vector<CameraPose> load_trajectory(const std::string& path, const LightingScript& script) {
    if (!path.empty()) return trajectory_from_json(read_json(path));
    std::vector<CameraPose> poses;
    for (int f = 0; f < script.frame_count; ++f) poses.push_back(CameraPose::identity(script.frame_time(f)));
    return poses;
}

CameraIntrinsics intrinsics_for(const HarnessConfig& cfg) { return cfg.dataset.intrinsics(); }

void write_run_config(const fs::path& dir, const HarnessConfig& cfg) {
    write_json(dir / "harness_config.json", harness_config_to_json(cfg));
}

class Timer {
public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

ProgressFn progress_printer(std::ostream& err, const char* stage) {
    return [&err, stage](std::int64_t step, double loss) {
        err << stage << " step " << step << " loss " << loss << "\n";
    };
}

std::string shape_string(const std::vector<std::int64_t>& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? ", " : "") + std::to_string(shape[i]);
    return s + "]";
}

dit::AdapterInit parse_init(const std::string& s) {
    if (s == "copy") return dit::AdapterInit::copy;
    if (s == "zero") return dit::AdapterInit::zero;
    throw UsageError("--init must be copy or zero");
}

struct Evaluation {
    Dataset dataset;
    nlohmann::json manifest;
};

Evaluation load_eval_dataset(const std::string& dir) {
    if (dir.empty()) throw UsageError("--dataset is required");
    return {load_dataset(dir), read_json(fs::path(dir) / "manifest.json")};
}

void check_dataset_matches(const HarnessConfig& cfg, const Dataset& ds) {
    if (dataset_config_to_json(cfg.dataset) != dataset_config_to_json(ds.config)) {
        throw UsageError("dataset layout differs from the run config; pass a matching --config");
    }
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"relightkit: multi-plane light image relighting toolkit"};
    app.name("relightkit");
    app.require_subcommand(1);

    // gen-dataset
    Common gen_c;
    auto* gen = app.add_subcommand("gen-dataset", "Render the paired relighting dataset");
    add_common(gen, gen_c, "dataset");
    std::optional<int> gen_scenes;
    gen->add_option("--scenes", gen_scenes, "Scene count")->check(CLI::PositiveNumber);
    bool gen_plan_only = false;
    gen->add_flag("--plan-only", gen_plan_only, "Write only the planned manifest (no rendering)");

    // render-mpli
    Common rm_c;
    auto* rm = app.add_subcommand("render-mpli", "Render the MPLI sequence of a lighting script");
    add_common(rm, rm_c, "mpli");
    std::string rm_script;
    std::string rm_traj;
    rm->add_option("script", rm_script, "script.json")->required()->check(CLI::ExistingFile);
    rm->add_option("--trajectory", rm_traj, "trajectory.json (default: static camera)")->check(CLI::ExistingFile);

    // viz-mpli
    Common vz_c;
    auto* vz = app.add_subcommand("viz-mpli", "Write an MPLI tensor as a PPM strip");
    add_common(vz, vz_c, "mpli_viz");
    std::string vz_file;
    vz->add_option("mpli", vz_file, "mpli.rltk with shape [K, H, W, 3]")->required()->check(CLI::ExistingFile);

    // pretrain
    Common pt_c;
    auto* pt = app.add_subcommand("pretrain", "Train the base model on source-to-target generation");
    add_common(pt, pt_c, "checkpoints/base");
    std::string pt_data;
    std::optional<int> pt_steps;
    pt->add_option("--dataset", pt_data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
    pt->add_option("--steps", pt_steps, "Optimizer steps")->check(CLI::NonNegativeNumber);

    // finetune
    Common ft_c;
    auto* ft = app.add_subcommand("finetune", "Attach the light adapter and finetune");
    add_common(ft, ft_c, "checkpoints/relight");
    std::string ft_data;
    std::string ft_base;
    std::string ft_init = "copy";
    std::optional<int> ft_steps;
    std::optional<double> ft_fraction;
    ft->add_option("--dataset", ft_data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
    ft->add_option("--base", ft_base, "Base checkpoint directory")->required()->check(CLI::ExistingDirectory);
    ft->add_option("--init", ft_init, "Adapter init: copy or zero")->capture_default_str();
    ft->add_option("--steps", ft_steps, "Optimizer steps")->check(CLI::NonNegativeNumber);
    ft->add_option("--data-fraction", ft_fraction, "Fraction of training pairs")->check(CLI::Range(0.0, 1.0));

    // relight
    Common rl_c;
    auto* rl = app.add_subcommand("relight", "Relight a source video with a lighting script");
    add_common(rl, rl_c, "relit");
    std::string rl_source;
    std::string rl_script;
    std::string rl_traj;
    std::string rl_model;
    std::string rl_oracle;
    std::optional<int> rl_steps;
    rl->add_option("source", rl_source, "source.rltk [F, H, W, 3]")->required()->check(CLI::ExistingFile);
    rl->add_option("script", rl_script, "script.json")->required()->check(CLI::ExistingFile);
    rl->add_option("--trajectory", rl_traj, "trajectory.json (default: static camera)")->check(CLI::ExistingFile);
    auto* rl_model_opt = rl->add_option("--model", rl_model, "Finetuned checkpoint directory")
                             ->check(CLI::ExistingDirectory);
    rl->add_option("--oracle-target", rl_oracle, "Sample with the oracle velocity field of this target video")
        ->check(CLI::ExistingFile)
        ->excludes(rl_model_opt);
    rl->add_option("--steps", rl_steps, "Euler steps")->check(CLI::PositiveNumber);

    // eval
    Common ev_c;
    auto* ev = app.add_subcommand("eval", "Run the controllability evaluation");
    add_common(ev, ev_c, "eval");
    std::string ev_data;
    std::string ev_model;
    std::string ev_stub;
    bool ev_sheets = false;
    bool ev_timings = false;
    ev->add_option("--dataset", ev_data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
    auto* ev_model_opt = ev->add_option("--model", ev_model, "Checkpoint directory")->check(CLI::ExistingDirectory);
    ev->add_option("--stub", ev_stub, "Reference model: oracle or copy")
        ->check(CLI::IsMember({"oracle", "copy"}))
        ->excludes(ev_model_opt);
    ev->add_flag("--sheets", ev_sheets, "Write PPM contact sheets");
    ev->add_flag("--timings", ev_timings, "Also write timings.json");

    // ablate
    Common ab_c;
    auto* ab = app.add_subcommand("ablate", "Run an ablation");
    add_common(ab, ab_c, "ablation");
    std::string ab_kind;
    std::string ab_data;
    std::string ab_base;
    std::string ab_model;
    std::optional<int> ab_steps;
    ab->add_option("kind", ab_kind, "multilight, init, k1 or third-data")
        ->required()
        ->check(CLI::IsMember({"multilight", "init", "k1", "third-data"}));
    ab->add_option("--dataset", ab_data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
    ab->add_option("--base", ab_base, "Base checkpoint (init, k1, third-data)")->check(CLI::ExistingDirectory);
    ab->add_option("--model", ab_model, "Finetuned checkpoint (multilight)")->check(CLI::ExistingDirectory);
    ab->add_option("--steps", ab_steps, "Finetune steps")->check(CLI::NonNegativeNumber);

    // inspect
    Common in_c;
    auto* in = app.add_subcommand("inspect", "Print the header of an RLTK tensor file");
    add_common(in, in_c, ".");
    std::string in_file;
    in->add_option("file", in_file, "file.rltk")->required()->check(CLI::ExistingFile);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << app.help();
        return kExitUsage;
    }

    try {
        if (*gen) {
            HarnessConfig cfg = load_config(gen_c);
            if (gen_scenes) {
                cfg.dataset.scenes = *gen_scenes;
                cfg.dataset.held_out_scenes = std::min(cfg.dataset.held_out_scenes, *gen_scenes);
            }
            cfg.validate();
            if (gen_plan_only) {
                const auto plans = plan_dataset(cfg.dataset, cfg.seed);
                nlohmann::json pairs = nlohmann::json::array();
                for (const auto& p : plans) {
                    pairs.push_back({{"id", p.id}, {"scene", p.scene}, {"trajectory", p.trajectory},
                                     {"batch", p.batch}, {"seed", p.seed},
                                     {"split", p.held_out ? "held_out" : "train"}});
                }
                write_json(fs::path(gen_c.out) / "plan.json",
                           {{"seed", cfg.seed}, {"config", dataset_config_to_json(cfg.dataset)},
                            {"pair_count", plans.size()}, {"pairs", pairs}});
                out << "planned " << plans.size() << " pairs\n";
                return kExitOk;
            }
            const Dataset ds = generate_dataset(cfg.dataset, cfg.seed, gen_c.out);
            write_run_config(gen_c.out, cfg);
            out << "wrote " << ds.entries.size() << " pairs to " << gen_c.out << "\n";
            return kExitOk;
        }

        if (*rm) {
            const HarnessConfig cfg = load_config(rm_c);
            const LightingScript script = load_script(rm_script);
            const auto traj = load_trajectory(rm_traj, script);
            CameraIntrinsics intr = intrinsics_for(cfg);
            const MpliSequence seq = build_mpli_sequence(script, traj, intr, cfg.depths, cfg.scalers);
            const fs::path dir = rm_c.out;
            for (std::size_t g = 0; g < seq.mplis.size(); ++g) {
                write_rltk(dir / ("mpli_" + std::to_string(g) + ".rltk"), mpli_to_tensor(seq.mplis[g]));
            }
            std::vector<LightLatent> lat = encode_mpli_sequence(seq, cfg.spatial_factor);
            LatentVideo lv{{}, lat.front().shape, script.frame_count};
            for (auto& l : lat) lv.groups.push_back(std::move(l.group));
            write_rltk(dir / "light_latent.rltk", latent_to_tensor(lv));
            write_json(dir / "light_latent.json", latent_sidecar(lv, static_cast<int>(cfg.depths.size())));
            out << "wrote " << seq.mplis.size() << " MPLIs with " << cfg.depths.size() << " planes to " << rm_c.out
                << "\n";
            return kExitOk;
        }

        if (*vz) {
            const HarnessConfig cfg = load_config(vz_c);
            const Tensor t = read_rltk(vz_file);
            if (t.shape.size() != 4 || t.shape[3] != 3) throw UsageError("expected an MPLI tensor [K, H, W, 3]");
            std::vector<double> depths = cfg.depths;
            if (static_cast<std::int64_t>(depths.size()) != t.shape[0]) {
                depths.clear();
                for (std::int64_t k = 0; k < t.shape[0]; ++k) depths.push_back(static_cast<double>(k + 1));
            }
            const auto mpli = tensor_to_mpli(t, depths);
            const fs::path path = fs::path(vz_c.out) / (fs::path(vz_file).stem().string() + ".ppm");
            write_ppm(path, visualize_mpli(mpli));
            out << "wrote " << path.string() << "\n";
            return kExitOk;
        }

        if (*pt) {
            HarnessConfig cfg = load_config(pt_c, fs::path(pt_data) / "harness_config.json");
            if (pt_steps) cfg.pretrain.steps = *pt_steps;
            const Dataset ds = load_dataset(pt_data);
            check_dataset_matches(cfg, ds);
            const auto samples = make_training_samples(ds, cfg, false);
            TrainLog log;
            const Timer timer;
            const ModelCheckpoint ckpt = pretrain_base(samples, cfg, cfg.seed, &log, progress_printer(err, "pretrain"));
            save_checkpoint(ckpt, pt_c.out);
            write_run_config(pt_c.out, cfg);
            write_json(fs::path(pt_c.out) / "train_log.json", log.to_json());
            err << "pretrain took " << timer.seconds() << " s\n";
            out << "saved base checkpoint at step " << ckpt.step << " to " << pt_c.out << "\n";
            return kExitOk;
        }

        if (*ft) {
            HarnessConfig cfg = load_config(ft_c, fs::path(ft_base) / "harness_config.json");
            if (ft_steps) cfg.finetune.steps = *ft_steps;
            if (ft_fraction) cfg.data_fraction = *ft_fraction;
            cfg.validate();
            const dit::AdapterInit init = parse_init(ft_init);
            const Dataset ds = load_dataset(ft_data);
            check_dataset_matches(cfg, ds);
            const ModelCheckpoint base = load_checkpoint(ft_base);
            const auto samples = make_training_samples(ds, cfg, true);
            TrainLog log;
            const Timer timer;
            const ModelCheckpoint ckpt =
                finetune_relight(base, samples, cfg, init, cfg.seed, &log, progress_printer(err, "finetune"));
            save_checkpoint(ckpt, ft_c.out);
            write_run_config(ft_c.out, cfg);
            write_json(fs::path(ft_c.out) / "train_log.json", log.to_json());
            err << "finetune took " << timer.seconds() << " s\n";
            out << "saved finetuned checkpoint at step " << ckpt.step << " to " << ft_c.out << "\n";
            return kExitOk;
        }

        if (*rl) {
            const fs::path stored = rl_model.empty() ? fs::path() : fs::path(rl_model) / "harness_config.json";
            HarnessConfig cfg = load_config(rl_c, stored);
            if (rl_steps) cfg.sample_steps = *rl_steps;
            const LightingScript script = load_script(rl_script);
            const auto traj = load_trajectory(rl_traj, script);
            const Video source = tensor_to_video(read_rltk(rl_source), script.fps);
            if (source.frame_count() != script.frame_count) {
                throw UsageError("script frame_count does not match the source video");
            }
            const std::uint64_t seed = cfg.seed;
            LatentVideo relit;
            if (!rl_oracle.empty()) {
                // Teacher-forced constant field eps - x0, integrated in double.
                const Video target = tensor_to_video(read_rltk(rl_oracle), script.fps);
                const LatentVideo tl = encode_video(target, cfg.spatial_factor);
                dit::DitConfig dc = cfg.model_config();
                dc.latent_height = tl.shape.latent_height();
                dc.latent_width = tl.shape.latent_width();
                dc.groups = tl.group_count();
                const Mat<double> x0 = dit::patch_matrix<double>(tl.groups, dc);
                std::optional<Mat<double>> eps;
                const Mat<double> x = euler_sample<double>(
                    [&](const Mat<double>& xt, double t) -> Mat<double> {
                        if (!eps) {
                            if (t != 1.0) throw Error("oracle field expects the first call at t = 1");
                            eps = xt;
                        }
                        return *eps - x0;
                    },
                    static_cast<int>(x0.rows()), static_cast<int>(x0.cols()), cfg.sample_steps, seed);
                relit = LatentVideo{dit::latent_from_patches(x, dc), tl.shape, tl.frame_count};
            } else {
                if (rl_model.empty()) throw UsageError("relight needs --model or --oracle-target");
                const ModelCheckpoint ckpt = load_checkpoint(rl_model);
                const LatentVideo src = encode_video(source, cfg.spatial_factor);
                const Mat<float> sp = dit::patch_matrix<float>(src.groups, ckpt.config());
                Mat<float> light;
                if (ckpt.params().has_adapter()) light = light_patches(script, traj, cfg);
                const Mat<float> x =
                    sample_target(ckpt, sp, ckpt.params().has_adapter() ? &light : nullptr, cfg.sample_steps, seed);
                relit = LatentVideo{dit::latent_from_patches(x, ckpt.config()), src.shape, src.frame_count};
            }
            const fs::path dir = rl_c.out;
            write_rltk(dir / "relit_latent.rltk", latent_to_tensor(relit));
            write_json(dir / "relit_latent.json", latent_sidecar(relit, 0));
            write_rltk(dir / "relit.rltk", video_to_tensor(decode_video(relit, script.fps)));
            out << "wrote " << (dir / "relit.rltk").string() << "\n";
            return kExitOk;
        }

        if (*ev) {
            const fs::path stored = ev_model.empty() ? fs::path(ev_data) / "harness_config.json"
                                                     : fs::path(ev_model) / "harness_config.json";
            const HarnessConfig cfg = load_config(ev_c, stored);
            const Evaluation e = load_eval_dataset(ev_data);
            check_dataset_matches(cfg, e.dataset);
            std::optional<ModelCheckpoint> ckpt;
            Relighter relighter;
            std::string name;
            if (ev_stub == "oracle") {
                relighter = oracle_relighter();
                name = "oracle_stub";
            } else if (ev_stub == "copy") {
                relighter = copy_source_relighter();
                name = "copy_source_stub";
            } else {
                if (ev_model.empty()) throw UsageError("eval needs --model or --stub");
                ckpt = load_checkpoint(ev_model);
                relighter = model_relighter(*ckpt, cfg);
                name = fs::path(ev_model).filename().string();
            }
            EvalOptions opts;
            if (ev_sheets) opts.sheets_dir = fs::path(ev_c.out) / "sheets";
            const Timer timer;
            const EvalReport report = evaluate_controllability(relighter, name, e.dataset, cfg, opts);
            write_json(fs::path(ev_c.out) / "report.json", report.to_json());
            if (ev_timings) write_json(fs::path(ev_c.out) / "timings.json", {{"eval_seconds", timer.seconds()}});
            out << report.summary.to_json().dump(2) << "\n";
            return kExitOk;
        }

        if (*ab) {
            const fs::path stored = !ab_model.empty()  ? fs::path(ab_model) / "harness_config.json"
                                    : !ab_base.empty() ? fs::path(ab_base) / "harness_config.json"
                                                       : fs::path(ab_data) / "harness_config.json";
            HarnessConfig cfg = load_config(ab_c, stored);
            if (ab_steps) cfg.finetune.steps = *ab_steps;
            const Evaluation e = load_eval_dataset(ab_data);
            check_dataset_matches(cfg, e.dataset);
            const fs::path dir = ab_c.out;
            if (ab_kind == "multilight") {
                if (ab_model.empty()) throw UsageError("ablate multilight needs --model");
                const ModelCheckpoint ckpt = load_checkpoint(ab_model);
                const MultiLightReport r = ablate_multilight(model_relighter(ckpt, cfg), e.manifest, e.dataset, cfg);
                write_json(dir / "multilight.json", r.to_json());
                out << "two-light PSNR " << r.mean_two_light_psnr << " dB, single-light PSNR "
                    << r.mean_single_light_psnr << " dB\n";
                return kExitOk;
            }
            if (ab_base.empty()) throw UsageError("ablate " + ab_kind + " needs --base");
            const ModelCheckpoint base = load_checkpoint(ab_base);
            if (ab_kind == "init") {
                const auto samples = make_training_samples(e.dataset, cfg, true);
                const InitAblationReport r = ablate_init(base, samples, e.dataset, cfg);
                write_json(dir / "init_ablation.json", r.to_json());
                out << "copy-init final loss " << r.copy_log.final_loss << ", zero-init final loss "
                    << r.zero_log.final_loss << "\n";
                return kExitOk;
            }
            if (ab_kind == "k1") {
                cfg.depths = {3.0};
            } else {
                cfg.data_fraction = 1.0 / 3.0;
            }
            const auto samples = make_training_samples(e.dataset, cfg, true);
            TrainLog log;
            const ModelCheckpoint ckpt = finetune_relight(base, samples, cfg, dit::AdapterInit::copy, cfg.seed, &log,
                                                          progress_printer(err, ab_kind.c_str()));
            const EvalReport report = evaluate_controllability(model_relighter(ckpt, cfg), ab_kind, e.dataset, cfg);
            write_json(dir / (ab_kind + ".json"),
                       {{"kind", ab_kind},
                        {"config", harness_config_to_json(cfg)},
                        {"train_log", log.to_json()},
                        {"report", report.to_json()}});
            out << report.summary.to_json().dump(2) << "\n";
            return kExitOk;
        }

        if (*in) {
            const Tensor t = read_rltk(in_file);
            out << "dtype: f32\nshape: " << shape_string(t.shape) << "\nelements: " << t.element_count() << "\n";
            if (!t.data.empty()) {
                const auto [lo, hi] = std::minmax_element(t.data.begin(), t.data.end());
                double sum = 0.0;
                for (float v : t.data) sum += v;
                out << "min: " << *lo << "\nmax: " << *hi << "\nmean: " << sum / static_cast<double>(t.data.size())
                    << "\n";
            }
            return kExitOk;
        }
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    err << app.help();
    return kExitUsage;
}

}  // namespace rlk
