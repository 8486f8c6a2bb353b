// Copyright (C) 2026 RelightKit Authors
// SPDX-License-Identifier: Apache-2.0

#include "relightkit/latent_codec.hpp"

namespace rlk {

namespace {

template <typename Scalar>
LatentGroup fold_group(const RgbImage<Scalar>* const* frames, int s) {
    const int h = frames[0]->height();
    const int w = frames[0]->width();
    const int lh = h / s;
    const int lw = w / s;
    LatentGroup g(3 * kFramesPerGroup * s * s, lh * lw);
    for (int ch = 0; ch < 3; ++ch) {
        for (int f = 0; f < kFramesPerGroup; ++f) {
            const auto& plane = frames[f]->channel[ch];
            for (int dy = 0; dy < s; ++dy) {
                for (int dx = 0; dx < s; ++dx) {
                    const int row = ((ch * kFramesPerGroup + f) * s + dy) * s + dx;
                    for (int y = 0; y < lh; ++y) {
                        for (int x = 0; x < lw; ++x) {
                            g(row, y * lw + x) = static_cast<float>(plane(y * s + dy, x * s + dx));
                        }
                    }
                }
            }
        }
    }
    return g;
}

void check_frames(const std::vector<Frame>& frames, int s) {
    if (s < 1) throw Error("spatial factor must be >= 1");
    if (frames.empty()) throw Error("no frames to encode");
    const int h = frames.front().height();
    const int w = frames.front().width();
    for (const auto& f : frames) {
        if (f.height() != h || f.width() != w) throw Error("frames differ in size");
    }
    if (h % s != 0 || w % s != 0) throw Error("frame size not divisible by spatial factor");
}

}  // namespace

std::vector<Frame> pad_frames(const std::vector<Frame>& frames) {
    if (!valid_frame_count(static_cast<int>(frames.size()))) throw Error("frame count must be 4N+1");
    std::vector<Frame> padded;
    padded.reserve(frames.size() + kPaddingFrames);
    for (int i = 0; i < kPaddingFrames; ++i) padded.push_back(frames.front());
    padded.insert(padded.end(), frames.begin(), frames.end());
    return padded;
}

LatentVideo encode(const std::vector<Frame>& padded_frames, int spatial_factor) {
    check_frames(padded_frames, spatial_factor);
    if (padded_frames.size() % kFramesPerGroup != 0) throw Error("padded frame count must be a multiple of 4");
    LatentVideo lv;
    lv.shape = {spatial_factor, padded_frames.front().height(), padded_frames.front().width()};
    lv.frame_count = static_cast<int>(padded_frames.size()) - kPaddingFrames;
    for (std::size_t g = 0; g < padded_frames.size(); g += kFramesPerGroup) {
        const Frame* group[kFramesPerGroup];
        for (int f = 0; f < kFramesPerGroup; ++f) group[f] = &padded_frames[g + f];
        lv.groups.push_back(fold_group(group, spatial_factor));
    }
    return lv;
}

std::vector<Frame> decode_padded(const LatentVideo& latent) {
    const auto& sh = latent.shape;
    const int s = sh.spatial_factor;
    const int lh = sh.latent_height();
    const int lw = sh.latent_width();
    std::vector<Frame> frames;
    frames.reserve(latent.groups.size() * kFramesPerGroup);
    for (const auto& g : latent.groups) {
        if (g.rows() != sh.channels() || g.cols() != lh * lw) throw Error("latent group shape mismatch");
        for (int f = 0; f < kFramesPerGroup; ++f) {
            auto frame = Frame::zeros(sh.height, sh.width);
            for (int ch = 0; ch < 3; ++ch) {
                for (int dy = 0; dy < s; ++dy) {
                    for (int dx = 0; dx < s; ++dx) {
                        const int row = ((ch * kFramesPerGroup + f) * s + dy) * s + dx;
                        for (int y = 0; y < lh; ++y) {
                            for (int x = 0; x < lw; ++x) frame.channel[ch](y * s + dy, x * s + dx) = g(row, y * lw + x);
                        }
                    }
                }
            }
            frames.push_back(std::move(frame));
        }
    }
    return frames;
}

std::vector<Frame> decode(const LatentVideo& latent) {
    if (latent.groups.empty()) throw Error("empty latent");
    auto frames = decode_padded(latent);
    frames.erase(frames.begin(), frames.begin() + kPaddingFrames);
    return frames;
}

LatentVideo encode_video(const Video& video, int spatial_factor) { return encode(pad_frames(video.frames), spatial_factor); }

Video decode_video(const LatentVideo& latent, double fps) { return Video{decode(latent), fps}; }

LightLatent encode_mpli(const MultiPlaneLightImage& normalized, int spatial_factor) {
    const int k = normalized.plane_count();
    if (k != 1 && k != kFramesPerGroup) throw Error("MPLI must have 1 or 4 planes to encode");
    const int h = normalized.height();
    const int w = normalized.width();
    if (spatial_factor < 1 || h % spatial_factor != 0 || w % spatial_factor != 0) {
        throw Error("MPLI size not divisible by spatial factor");
    }
    const RgbImage<double>* planes[kFramesPerGroup];
    for (int f = 0; f < kFramesPerGroup; ++f) planes[f] = &normalized.planes[k == 1 ? 0 : f].pixels;
    return LightLatent{fold_group(planes, spatial_factor), LatentShape{spatial_factor, h, w}};
}

std::vector<LightLatent> encode_mpli_sequence(const MpliSequence& sequence, int spatial_factor) {
    std::vector<LightLatent> out;
    out.reserve(sequence.mplis.size());
    for (const auto& m : sequence.mplis) out.push_back(encode_mpli(normalize_for_codec(m), spatial_factor));
    return out;
}

}  // namespace rlk
