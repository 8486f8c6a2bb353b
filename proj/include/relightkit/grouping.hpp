// Copyright (C) 2026 RelightKit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "relightkit/common.hpp"

namespace rlk {

// A 4N+1 frame clip is padded with 3 leading dummy frames and folded into
// N+1 latent groups of 4 frames. Group 0 holds the dummies plus frame 0;
// group g >= 1 holds frames [4g-3, 4g].

inline constexpr int kFramesPerGroup = 4;
inline constexpr int kPaddingFrames = 3;

inline bool valid_frame_count(int frame_count) { return frame_count >= 1 && frame_count % 4 == 1; }

inline int latent_group_count(int frame_count) {
    if (!valid_frame_count(frame_count)) throw Error("frame count must be 4N+1");
    return (frame_count + kPaddingFrames) / kFramesPerGroup;
}

/// Frame whose lighting state represents group g: frame 0 for the leading
/// group, otherwise the lower middle frame 4g-2 of the group's span.
inline int group_sample_frame(int group) { return group == 0 ? 0 : 4 * group - 2; }

}  // namespace rlk
