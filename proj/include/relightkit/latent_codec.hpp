// Copyright (C) 2026 RelightKit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "relightkit/common.hpp"
#include "relightkit/grouping.hpp"
#include "relightkit/mpli.hpp"

#include <vector>

namespace rlk {

/// One latent group: C x (h*w) with C = 3 * 4 * s^2 and (h, w) = (H/s, W/s).
/// Row index of frame f, spatial offset (dy, dx), color ch is
/// ((ch * 4 + f) * s + dy) * s + dx.
using LatentGroup = RowMat<float>;

struct LatentShape {
    int spatial_factor = 4;
    int height = 48;  ///< pixel height
    int width = 48;   ///< pixel width

    int channels() const { return 3 * kFramesPerGroup * spatial_factor * spatial_factor; }
    int latent_height() const { return height / spatial_factor; }
    int latent_width() const { return width / spatial_factor; }
};

struct LatentVideo {
    std::vector<LatentGroup> groups;
    LatentShape shape;
    int frame_count = 0;  ///< frames before padding

    int group_count() const { return static_cast<int>(groups.size()); }
};

/// Light latent: a single group built from one MPLI.
struct LightLatent {
    LatentGroup group;
    LatentShape shape;
};

/// Prepends 3 copies of frame 0 to a 4N+1 clip.
std::vector<Frame> pad_frames(const std::vector<Frame>& frames);

/// Folds every 4 frames and each s x s spatial block into channels.
LatentVideo encode(const std::vector<Frame>& padded_frames, int spatial_factor = 4);

/// Exact inverse of encode; returns all 4(N+1) padded frames.
std::vector<Frame> decode_padded(const LatentVideo& latent);

/// Exact inverse of pad_frames followed by encode; drops the 3 dummy frames.
std::vector<Frame> decode(const LatentVideo& latent);

/// Convenience: pad_frames then encode.
LatentVideo encode_video(const Video& video, int spatial_factor = 4);
Video decode_video(const LatentVideo& latent, double fps);

/// K = 4 planes are encoded as 4 frames; K = 1 is replicated four times.
/// Expects planes already normalized to [-1, 1].
LightLatent encode_mpli(const MultiPlaneLightImage& normalized, int spatial_factor = 4);

/// Normalizes and encodes every entry of an MPLI sequence.
std::vector<LightLatent> encode_mpli_sequence(const MpliSequence& sequence, int spatial_factor = 4);

}  // namespace rlk
