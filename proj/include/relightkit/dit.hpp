// Copyright (C) 2026 RelightKit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "relightkit/common.hpp"
#include "relightkit/dit_layers.hpp"
#include "relightkit/latent_codec.hpp"
#include "relightkit/rng.hpp"

#include <string>
#include <vector>

namespace rlk::dit {

enum class AdapterInit { copy, zero };

struct DitConfig {
    int latent_channels = 192;
    int latent_height = 12;
    int latent_width = 12;
    int groups = 5;
    int patch = 2;
    int width = 64;
    int heads = 4;
    int blocks = 2;
    int mlp_ratio = 4;
    int lora_rank = 4;
    double lora_alpha = 4.0;
    int time_features = 32;
    /// Lower bound of the velocity denominator max(t, t_floor).
    double t_floor = 0.02;
    AdapterInit adapter_init = AdapterInit::copy;

    int patch_dim() const { return latent_channels * patch * patch; }
    int patches_y() const { return latent_height / patch; }
    int patches_x() const { return latent_width / patch; }
    int tokens_per_group() const { return patches_y() * patches_x(); }
    int tokens() const { return groups * tokens_per_group(); }
    int head_dim() const { return width / heads; }

    void validate() const;
    static DitConfig for_latent(const LatentShape& shape, int groups);
};

inline void DitConfig::validate() const {
    if (latent_channels < 1 || latent_height < 1 || latent_width < 1 || groups < 1) throw Error("bad latent dims");
    if (patch < 1 || latent_height % patch != 0 || latent_width % patch != 0) {
        throw Error("patch size must divide latent spatial dims");
    }
    if (width < 1 || heads < 1 || width % heads != 0) throw Error("width must be divisible by heads");
    if (blocks < 1 || mlp_ratio < 1) throw Error("bad block config");
    if (lora_rank < 1) throw Error("LoRA rank must be >= 1");
    if (time_features < 2 || time_features % 2 != 0) throw Error("time_features must be even");
    if (!(t_floor > 0.0 && t_floor <= 1.0)) throw Error("t_floor must be in (0, 1]");
}

inline DitConfig DitConfig::for_latent(const LatentShape& shape, int groups) {
    DitConfig c;
    c.latent_channels = shape.channels();
    c.latent_height = shape.latent_height();
    c.latent_width = shape.latent_width();
    c.groups = groups;
    return c;
}

// ---------------------------------------------------------------------------
// Patch rearrangement. Token order is group-major then patch row, patch col;
// the patch vector index is (c * p + py) * p + px.

template <typename Scalar>
Mat<Scalar> patch_matrix(const std::vector<LatentGroup>& groups, const DitConfig& cfg) {
    const int p = cfg.patch;
    const int lw = cfg.latent_width;
    Mat<Scalar> m(cfg.groups * cfg.tokens_per_group(), cfg.patch_dim());
    if (static_cast<int>(groups.size()) != cfg.groups) throw Error("latent group count does not match config");
    for (int g = 0; g < cfg.groups; ++g) {
        const auto& lat = groups[g];
        if (lat.rows() != cfg.latent_channels || lat.cols() != cfg.latent_height * lw) {
            throw Error("latent group shape does not match config");
        }
        for (int py = 0; py < cfg.patches_y(); ++py) {
            for (int px = 0; px < cfg.patches_x(); ++px) {
                const int tok = (g * cfg.patches_y() + py) * cfg.patches_x() + px;
                for (int c = 0; c < cfg.latent_channels; ++c) {
                    for (int dy = 0; dy < p; ++dy) {
                        for (int dx = 0; dx < p; ++dx) {
                            m(tok, (c * p + dy) * p + dx) = Scalar(lat(c, (py * p + dy) * lw + px * p + dx));
                        }
                    }
                }
            }
        }
    }
    return m;
}

template <typename Scalar>
std::vector<LatentGroup> latent_from_patches(const Mat<Scalar>& m, const DitConfig& cfg) {
    const int p = cfg.patch;
    const int lw = cfg.latent_width;
    if (m.rows() != cfg.tokens() || m.cols() != cfg.patch_dim()) throw Error("patch matrix shape mismatch");
    std::vector<LatentGroup> groups(cfg.groups, LatentGroup(cfg.latent_channels, cfg.latent_height * lw));
    for (int g = 0; g < cfg.groups; ++g) {
        for (int py = 0; py < cfg.patches_y(); ++py) {
            for (int px = 0; px < cfg.patches_x(); ++px) {
                const int tok = (g * cfg.patches_y() + py) * cfg.patches_x() + px;
                for (int c = 0; c < cfg.latent_channels; ++c) {
                    for (int dy = 0; dy < p; ++dy) {
                        for (int dx = 0; dx < p; ++dx) {
                            groups[g](c, (py * p + dy) * lw + px * p + dx) =
                                static_cast<float>(m(tok, (c * p + dy) * p + dx));
                        }
                    }
                }
            }
        }
    }
    return groups;
}

template <typename Scalar>
Mat<Scalar> patch_matrix(const std::vector<LightLatent>& lights, const DitConfig& cfg) {
    std::vector<LatentGroup> groups;
    groups.reserve(lights.size());
    for (const auto& l : lights) groups.push_back(l.group);
    return patch_matrix<Scalar>(groups, cfg);
}

// ---------------------------------------------------------------------------
// Parameters

template <typename Scalar>
struct BlockParams {
    Mat<Scalar> ln1_g, ln1_b;
    Mat<Scalar> qkv_w, qkv_b;
    Mat<Scalar> attn_w, attn_b;
    Mat<Scalar> lora_a, lora_b;
    Mat<Scalar> ln2_g, ln2_b;
    Mat<Scalar> mlp_w1, mlp_b1, mlp_w2, mlp_b2;
};

template <typename Scalar>
struct DitParams {
    Mat<Scalar> patch_w, patch_b;
    Mat<Scalar> pos_emb;     ///< tokens x width, shared by both streams
    Mat<Scalar> stream_emb;  ///< 2 x width: source, target
    Mat<Scalar> null_emb;    ///< stands in for the text embedding
    Mat<Scalar> time_w1, time_b1, time_w2, time_b2;
    std::vector<BlockParams<Scalar>> blocks;
    Mat<Scalar> final_g, final_b;
    Mat<Scalar> out_w, out_b;
    Mat<Scalar> out_gain;  ///< 1 x 2: gains on the noisy input and on the source skip
    // Light Image Adapter; empty until attached.
    Mat<Scalar> lia_w, lia_b;
    Mat<Scalar> lia_gain;  ///< 1 x 1 injection gain

    bool has_adapter() const { return lia_w.size() > 0; }
};

/// Calls f(name, p0.field, ps.field...) for every tensor, in a fixed order.
template <typename F, typename P0, typename... Ps>
void for_each_param(F&& f, P0& p0, Ps&... ps) {
    f("patch_w", p0.patch_w, ps.patch_w...);
    f("patch_b", p0.patch_b, ps.patch_b...);
    f("pos_emb", p0.pos_emb, ps.pos_emb...);
    f("stream_emb", p0.stream_emb, ps.stream_emb...);
    f("null_emb", p0.null_emb, ps.null_emb...);
    f("time_w1", p0.time_w1, ps.time_w1...);
    f("time_b1", p0.time_b1, ps.time_b1...);
    f("time_w2", p0.time_w2, ps.time_w2...);
    f("time_b2", p0.time_b2, ps.time_b2...);
    for (std::size_t i = 0; i < p0.blocks.size(); ++i) {
        const std::string pre = "blocks." + std::to_string(i) + ".";
        f(pre + "ln1_g", p0.blocks[i].ln1_g, ps.blocks[i].ln1_g...);
        f(pre + "ln1_b", p0.blocks[i].ln1_b, ps.blocks[i].ln1_b...);
        f(pre + "qkv_w", p0.blocks[i].qkv_w, ps.blocks[i].qkv_w...);
        f(pre + "qkv_b", p0.blocks[i].qkv_b, ps.blocks[i].qkv_b...);
        f(pre + "attn_w", p0.blocks[i].attn_w, ps.blocks[i].attn_w...);
        f(pre + "attn_b", p0.blocks[i].attn_b, ps.blocks[i].attn_b...);
        f(pre + "lora_a", p0.blocks[i].lora_a, ps.blocks[i].lora_a...);
        f(pre + "lora_b", p0.blocks[i].lora_b, ps.blocks[i].lora_b...);
        f(pre + "ln2_g", p0.blocks[i].ln2_g, ps.blocks[i].ln2_g...);
        f(pre + "ln2_b", p0.blocks[i].ln2_b, ps.blocks[i].ln2_b...);
        f(pre + "mlp_w1", p0.blocks[i].mlp_w1, ps.blocks[i].mlp_w1...);
        f(pre + "mlp_b1", p0.blocks[i].mlp_b1, ps.blocks[i].mlp_b1...);
        f(pre + "mlp_w2", p0.blocks[i].mlp_w2, ps.blocks[i].mlp_w2...);
        f(pre + "mlp_b2", p0.blocks[i].mlp_b2, ps.blocks[i].mlp_b2...);
    }
    f("final_g", p0.final_g, ps.final_g...);
    f("final_b", p0.final_b, ps.final_b...);
    f("out_w", p0.out_w, ps.out_w...);
    f("out_b", p0.out_b, ps.out_b...);
    f("out_gain", p0.out_gain, ps.out_gain...);
    if (p0.has_adapter()) {
        f("lia_w", p0.lia_w, ps.lia_w...);
        f("lia_b", p0.lia_b, ps.lia_b...);
        f("lia_gain", p0.lia_gain, ps.lia_gain...);
    }
}

enum class ParamRole { base, attention, lora, adapter };

inline ParamRole param_role(const std::string& name) {
    auto ends_with = [&](const char* suffix) {
        const std::string s(suffix);
        return name.size() >= s.size() && name.compare(name.size() - s.size(), s.size(), s) == 0;
    };
    if (name.rfind("lia_", 0) == 0) return ParamRole::adapter;
    if (ends_with(".lora_a") || ends_with(".lora_b")) return ParamRole::lora;
    if (ends_with(".qkv_w") || ends_with(".qkv_b") || ends_with(".attn_w") || ends_with(".attn_b")) {
        return ParamRole::attention;
    }
    return ParamRole::base;
}

template <typename Scalar>
DitParams<Scalar> zeros_like(const DitParams<Scalar>& p) {
    DitParams<Scalar> z = p;
    for_each_param([](const std::string&, Mat<Scalar>& m) { m.setZero(); }, z);
    return z;
}

template <typename To, typename From>
DitParams<To> cast_params(const DitParams<From>& p) {
    DitParams<To> out;
    out.blocks.resize(p.blocks.size());
    if (p.has_adapter()) {
        out.lia_w.resize(1, 1);  // marks the adapter present for the visitor
    }
    for_each_param([](const std::string&, Mat<To>& dst, const Mat<From>& src) { dst = src.template cast<To>(); }, out,
                   p);
    return out;
}

namespace detail {

template <typename Scalar>
Mat<Scalar> gaussian(int rows, int cols, double stddev, CounterRng& rng) {
    Mat<Scalar> m(rows, cols);
    for (int c = 0; c < cols; ++c) {
        for (int r = 0; r < rows; ++r) m(r, c) = Scalar(stddev * rng.normal());
    }
    return m;
}

/// rows x cols matrix with orthonormal columns (rows >= cols) or rows.
template <typename Scalar>
Mat<Scalar> semi_orthogonal(int rows, int cols, CounterRng& rng) {
    const bool tall = rows >= cols;
    const Mat<double> g = gaussian<double>(tall ? rows : cols, tall ? cols : rows, 1.0, rng);
    Eigen::HouseholderQR<Mat<double>> qr(g);
    Mat<double> q = qr.householderQ() * Mat<double>::Identity(g.rows(), g.cols());
    // Fix column signs so the factorization is unique.
    const Mat<double> r = qr.matrixQR().topRows(g.cols()).template triangularView<Eigen::Upper>();
    for (int c = 0; c < q.cols(); ++c) {
        if (r(c, c) < 0) q.col(c) *= -1.0;
    }
    return (tall ? q : Mat<double>(q.transpose())).template cast<Scalar>();
}

}  // namespace detail

/// Fresh base model parameters (no adapter).
template <typename Scalar>
DitParams<Scalar> init_base_params(const DitConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    CounterRng rng(seed, 0xD17);
    const int d = cfg.width;
    const int pd = cfg.patch_dim();
    const int hidden = cfg.mlp_ratio * d;
    auto zeros = [](int r, int c) { return Mat<Scalar>::Zero(r, c).eval(); };
    auto ones = [](int r, int c) { return Mat<Scalar>::Ones(r, c).eval(); };

    DitParams<Scalar> p;
    p.patch_w = detail::semi_orthogonal<Scalar>(pd, d, rng);
    p.patch_b = zeros(1, d);
    p.pos_emb = detail::gaussian<Scalar>(cfg.tokens(), d, 1.0, rng);
    p.stream_emb = detail::gaussian<Scalar>(2, d, 1.0, rng);
    p.null_emb = zeros(1, d);
    p.time_w1 = detail::gaussian<Scalar>(cfg.time_features, d, 1.0 / std::sqrt(cfg.time_features), rng);
    p.time_b1 = zeros(1, d);
    p.time_w2 = detail::gaussian<Scalar>(d, d, 1.0 / std::sqrt(d), rng);
    p.time_b2 = zeros(1, d);
    for (int b = 0; b < cfg.blocks; ++b) {
        BlockParams<Scalar> bp;
        bp.ln1_g = ones(1, d);
        bp.ln1_b = zeros(1, d);
        bp.qkv_w = detail::gaussian<Scalar>(d, 3 * d, 1.0 / std::sqrt(d), rng);
        bp.qkv_b = zeros(1, 3 * d);
        bp.attn_w = detail::gaussian<Scalar>(d, d, 1.0 / std::sqrt(d), rng);
        bp.attn_b = zeros(1, d);
        bp.lora_a = detail::gaussian<Scalar>(d, cfg.lora_rank, 1.0 / std::sqrt(d), rng);
        bp.lora_b = zeros(cfg.lora_rank, d);
        bp.ln2_g = ones(1, d);
        bp.ln2_b = zeros(1, d);
        bp.mlp_w1 = detail::gaussian<Scalar>(d, hidden, 1.0 / std::sqrt(d), rng);
        bp.mlp_b1 = zeros(1, hidden);
        bp.mlp_w2 = detail::gaussian<Scalar>(hidden, d, 1.0 / std::sqrt(hidden), rng);
        bp.mlp_b2 = zeros(1, d);
        p.blocks.push_back(std::move(bp));
    }
    p.final_g = ones(1, d);
    p.final_b = zeros(1, d);
    p.out_w = zeros(d, pd);
    p.out_b = zeros(1, pd);
    p.out_gain = ones(1, 2);
    return p;
}

/// Light Image Adapter parameters: a copy of the patchify projection or zeros.
/// The injection gain always starts at zero.
template <typename Scalar>
void init_lia(DitParams<Scalar>& p, AdapterInit mode) {
    if (p.patch_w.size() == 0) throw Error("patchify parameters missing");
    if (mode == AdapterInit::copy) {
        p.lia_w = p.patch_w;
        p.lia_b = p.patch_b;
    } else {
        p.lia_w = Mat<Scalar>::Zero(p.patch_w.rows(), p.patch_w.cols());
        p.lia_b = Mat<Scalar>::Zero(p.patch_b.rows(), p.patch_b.cols());
    }
    p.lia_gain = Mat<Scalar>::Zero(1, 1);
}

// ---------------------------------------------------------------------------
// Forward / backward

template <typename Scalar>
struct BlockCache {
    Mat<Scalar> x_in;  ///< residual stream entering the block, after injection
    LayerNormCache<Scalar> ln1;
    Mat<Scalar> a;
    Mat<Scalar> qkv;
    std::vector<Mat<Scalar>> probs;
    Mat<Scalar> ctx;
    Mat<Scalar> lora_mid;
    Mat<Scalar> x_mid;
    LayerNormCache<Scalar> ln2;
    Mat<Scalar> b;
    Mat<Scalar> pre;
    Mat<Scalar> act;
};

template <typename Scalar>
struct ForwardCache {
    const Mat<Scalar>* source = nullptr;
    const Mat<Scalar>* noisy = nullptr;
    const Mat<Scalar>* light = nullptr;
    Scalar tau = 1;
    Mat<Scalar> phi, z1, z1_act;
    Mat<Scalar> light_tok;
    std::vector<BlockCache<Scalar>> blocks;
    LayerNormCache<Scalar> lnf;
    Mat<Scalar> y;
};

/// Toy Diffusion Transformer over the joint (source, noisy target) token
/// sequence. The network predicts a clean estimate x0 = g_s * source + R and
/// reports the velocity v = (g_x * x_t - x0) / max(t, t_floor).
template <typename Scalar>
class Dit {
public:
    Dit(DitConfig config, DitParams<Scalar> params) : config_(std::move(config)), params_(std::move(params)) {
        config_.validate();
    }

    const DitConfig& config() const { return config_; }
    const DitParams<Scalar>& params() const { return params_; }
    DitParams<Scalar>& params() { return params_; }

    /// All inputs are patch matrices (tokens x patch_dim). `light` may be null,
    /// which skips the adapter entirely.
    Mat<Scalar> forward(const Mat<Scalar>& source, const Mat<Scalar>& noisy, const Mat<Scalar>* light, Scalar t,
                        ForwardCache<Scalar>* cache = nullptr) const;

    /// Accumulates parameter gradients of <dv, v> into `grads`.
    void backward(const ForwardCache<Scalar>& cache, const Mat<Scalar>& dv, DitParams<Scalar>& grads) const;

    /// Adapter projection of a light patch matrix.
    Mat<Scalar> light_tokens(const Mat<Scalar>& light) const { return linear(light, params_.lia_w, params_.lia_b); }

    Mat<Scalar> patchify(const Mat<Scalar>& patches) const { return linear(patches, params_.patch_w, params_.patch_b); }

private:
    void check_inputs(const Mat<Scalar>& m) const {
        if (m.rows() != config_.tokens() || m.cols() != config_.patch_dim()) {
            throw Error("input patch matrix does not match the model's token layout");
        }
    }

    DitConfig config_;
    DitParams<Scalar> params_;
};

template <typename Scalar>
Mat<Scalar> Dit<Scalar>::forward(const Mat<Scalar>& source, const Mat<Scalar>& noisy, const Mat<Scalar>* light,
                                 Scalar t, ForwardCache<Scalar>* cache) const {
    check_inputs(source);
    check_inputs(noisy);
    if (light) {
        check_inputs(*light);
        if (!params_.has_adapter()) throw Error("light tokens given but the model has no adapter");
    }
    const auto& p = params_;
    const int n = config_.tokens();
    const int d = config_.width;
    const int dh = config_.head_dim();
    const Scalar tau = std::max(t, Scalar(config_.t_floor));
    const Scalar lora_scale = Scalar(config_.lora_alpha / config_.lora_rank);
    const Scalar attn_scale = Scalar(1.0 / std::sqrt(double(dh)));

    // Timestep embedding.
    Mat<Scalar> phi = time_features(t, config_.time_features);
    Mat<Scalar> z1 = linear(phi, p.time_w1, p.time_b1);
    Mat<Scalar> z1_act = z1.unaryExpr([](Scalar x) { return silu(x); });
    const Mat<Scalar> temb = linear(z1_act, p.time_w2, p.time_b2);

    Mat<Scalar> h(2 * n, d);
    h.topRows(n) = patchify(source) + p.pos_emb;
    h.bottomRows(n) = patchify(noisy) + p.pos_emb;
    h.topRows(n).rowwise() += p.stream_emb.row(0);
    h.bottomRows(n).rowwise() += p.stream_emb.row(1);
    h.rowwise() += temb.row(0) + p.null_emb.row(0);

    Mat<Scalar> light_tok;
    Mat<Scalar> injection;
    if (light) {
        light_tok = light_tokens(*light);
        injection = p.lia_gain(0, 0) * light_tok;
    }

    std::vector<BlockCache<Scalar>> block_caches;
    if (cache) block_caches.resize(p.blocks.size());

    for (std::size_t bi = 0; bi < p.blocks.size(); ++bi) {
        const auto& bp = p.blocks[bi];
        BlockCache<Scalar> local;
        BlockCache<Scalar>& bc = cache ? block_caches[bi] : local;

        if (light) h.bottomRows(n) += injection;
        if (cache) bc.x_in = h;

        bc.a = layer_norm(h, bp.ln1_g, bp.ln1_b, cache ? &bc.ln1 : nullptr);
        bc.qkv = linear(bc.a, bp.qkv_w, bp.qkv_b);
        bc.ctx.resize(2 * n, d);
        if (cache) bc.probs.resize(config_.heads);
        for (int hd = 0; hd < config_.heads; ++hd) {
            const auto q = bc.qkv.middleCols(hd * dh, dh);
            const auto k = bc.qkv.middleCols(d + hd * dh, dh);
            const auto v = bc.qkv.middleCols(2 * d + hd * dh, dh);
            Mat<Scalar> scores = (q * k.transpose()) * attn_scale;
            Mat<Scalar> probs = softmax_rows(scores);
            bc.ctx.middleCols(hd * dh, dh).noalias() = probs * v;
            if (cache) bc.probs[hd] = std::move(probs);
        }
        bc.lora_mid = bc.ctx * bp.lora_a;
        Mat<Scalar> attn_out = linear(bc.ctx, bp.attn_w, bp.attn_b);
        attn_out.noalias() += (bc.lora_mid * bp.lora_b) * lora_scale;
        h += attn_out;
        if (cache) bc.x_mid = h;

        bc.b = layer_norm(h, bp.ln2_g, bp.ln2_b, cache ? &bc.ln2 : nullptr);
        bc.pre = linear(bc.b, bp.mlp_w1, bp.mlp_b1);
        bc.act = bc.pre.unaryExpr([](Scalar x) { return gelu(x); });
        h += linear(bc.act, bp.mlp_w2, bp.mlp_b2);
    }

    LayerNormCache<Scalar> lnf;
    Mat<Scalar> y = layer_norm(Mat<Scalar>(h.bottomRows(n)), p.final_g, p.final_b, cache ? &lnf : nullptr);
    const Mat<Scalar> residual = linear(y, p.out_w, p.out_b);

    Mat<Scalar> v = (p.out_gain(0, 0) * noisy - p.out_gain(0, 1) * source - residual) / tau;

    if (cache) {
        cache->source = &source;
        cache->noisy = &noisy;
        cache->light = light;
        cache->tau = tau;
        cache->phi = std::move(phi);
        cache->z1 = std::move(z1);
        cache->z1_act = std::move(z1_act);
        cache->light_tok = std::move(light_tok);
        cache->blocks = std::move(block_caches);
        cache->lnf = std::move(lnf);
        cache->y = std::move(y);
    }
    return v;
}

template <typename Scalar>
void Dit<Scalar>::backward(const ForwardCache<Scalar>& c, const Mat<Scalar>& dv, DitParams<Scalar>& g) const {
    const auto& p = params_;
    const int n = config_.tokens();
    const int d = config_.width;
    const int dh = config_.head_dim();
    const Scalar lora_scale = Scalar(config_.lora_alpha / config_.lora_rank);
    const Scalar attn_scale = Scalar(1.0 / std::sqrt(double(dh)));
    const Mat<Scalar>& source = *c.source;
    const Mat<Scalar>& noisy = *c.noisy;

    // v = (g_x * noisy - g_s * source - R) / tau
    const Mat<Scalar> dv_tau = dv / c.tau;
    g.out_gain(0, 0) += (dv_tau.array() * noisy.array()).sum();
    g.out_gain(0, 1) -= (dv_tau.array() * source.array()).sum();
    const Mat<Scalar> dres = -dv_tau;
    const Mat<Scalar> dy = linear_backward(c.y, p.out_w, dres, g.out_w, g.out_b);

    Mat<Scalar> dh_full = Mat<Scalar>::Zero(2 * n, d);
    dh_full.bottomRows(n) = layer_norm_backward(dy, p.final_g, c.lnf, g.final_g, g.final_b);

    Mat<Scalar> dinj;
    if (c.light) dinj = Mat<Scalar>::Zero(n, d);

    for (int bi = static_cast<int>(p.blocks.size()) - 1; bi >= 0; --bi) {
        const auto& bp = p.blocks[bi];
        const auto& bc = c.blocks[bi];
        auto& gb = g.blocks[bi];

        // MLP branch.
        Mat<Scalar> dact = linear_backward(bc.act, bp.mlp_w2, dh_full, gb.mlp_w2, gb.mlp_b2);
        Mat<Scalar> dpre = dact.array() * bc.pre.unaryExpr([](Scalar x) { return gelu_grad(x); }).array();
        Mat<Scalar> db = linear_backward(bc.b, bp.mlp_w1, dpre, gb.mlp_w1, gb.mlp_b1);
        dh_full += layer_norm_backward(db, bp.ln2_g, bc.ln2, gb.ln2_g, gb.ln2_b);

        // Attention branch with LoRA on the output projection.
        const Mat<Scalar>& dout = dh_full;
        Mat<Scalar> dctx = linear_backward(bc.ctx, bp.attn_w, dout, gb.attn_w, gb.attn_b);
        const Mat<Scalar> dlora_out = dout * lora_scale;
        gb.lora_b.noalias() += bc.lora_mid.transpose() * dlora_out;
        const Mat<Scalar> dlora_mid = dlora_out * bp.lora_b.transpose();
        gb.lora_a.noalias() += bc.ctx.transpose() * dlora_mid;
        dctx.noalias() += dlora_mid * bp.lora_a.transpose();

        Mat<Scalar> dqkv(2 * n, 3 * d);
        for (int hd = 0; hd < config_.heads; ++hd) {
            const auto q = bc.qkv.middleCols(hd * dh, dh);
            const auto k = bc.qkv.middleCols(d + hd * dh, dh);
            const auto v = bc.qkv.middleCols(2 * d + hd * dh, dh);
            const Mat<Scalar>& probs = bc.probs[hd];
            const auto dctx_h = dctx.middleCols(hd * dh, dh);
            const Mat<Scalar> dprobs = dctx_h * v.transpose();
            dqkv.middleCols(2 * d + hd * dh, dh).noalias() = probs.transpose() * dctx_h;
            const Mat<Scalar> dscores = softmax_rows_backward(probs, dprobs) * attn_scale;
            dqkv.middleCols(hd * dh, dh).noalias() = dscores * k;
            dqkv.middleCols(d + hd * dh, dh).noalias() = dscores.transpose() * q;
        }
        const Mat<Scalar> da = linear_backward(bc.a, bp.qkv_w, dqkv, gb.qkv_w, gb.qkv_b);
        dh_full += layer_norm_backward(da, bp.ln1_g, bc.ln1, gb.ln1_g, gb.ln1_b);

        if (c.light) dinj += dh_full.bottomRows(n);
    }

    if (c.light) {
        g.lia_gain(0, 0) += (dinj.array() * c.light_tok.array()).sum();
        const Mat<Scalar> dlight_tok = p.lia_gain(0, 0) * dinj;
        linear_backward(*c.light, p.lia_w, dlight_tok, g.lia_w, g.lia_b);
    }

    // Embeddings.
    const Mat<Scalar> de = dh_full.colwise().sum();
    g.null_emb += de;
    g.stream_emb.row(0) += dh_full.topRows(n).colwise().sum();
    g.stream_emb.row(1) += dh_full.bottomRows(n).colwise().sum();
    g.pos_emb += dh_full.topRows(n) + dh_full.bottomRows(n);
    linear_backward(source, p.patch_w, Mat<Scalar>(dh_full.topRows(n)), g.patch_w, g.patch_b);
    linear_backward(noisy, p.patch_w, Mat<Scalar>(dh_full.bottomRows(n)), g.patch_w, g.patch_b);

    const Mat<Scalar> dz1_act = linear_backward(c.z1_act, p.time_w2, de, g.time_w2, g.time_b2);
    const Mat<Scalar> dz1 = dz1_act.array() * c.z1.unaryExpr([](Scalar x) { return silu_grad(x); }).array();
    linear_backward(c.phi, p.time_w1, dz1, g.time_w1, g.time_b1);
}

}  // namespace rlk::dit
