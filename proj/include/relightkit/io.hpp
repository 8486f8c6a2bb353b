// Copyright (C) 2026 RelightKit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "relightkit/common.hpp"
#include "relightkit/latent_codec.hpp"
#include "relightkit/light_model.hpp"
#include "relightkit/mpli.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace rlk {

/// Dense float32 tensor as stored in an RLTK file.
struct Tensor {
    std::vector<std::int64_t> shape;
    std::vector<float> data;

    std::int64_t element_count() const;
    bool operator==(const Tensor&) const = default;
};

// RLTK layout: "RLTK" | u32 LE header length | UTF-8 JSON header
// {"dtype":"f32","shape":[...],"order":"row-major"} | little-endian f32 payload.
std::string encode_rltk(const Tensor& tensor);
Tensor decode_rltk(const std::string& bytes);
void write_rltk(const std::filesystem::path& path, const Tensor& tensor);
Tensor read_rltk(const std::filesystem::path& path);

/// [frames, H, W, 3]
Tensor video_to_tensor(const Video& video);
Video tensor_to_video(const Tensor& tensor, double fps);

/// [G, C, H/s, W/s]
Tensor latent_to_tensor(const LatentVideo& latent);
LatentVideo tensor_to_latent(const Tensor& tensor, const LatentShape& shape, int frame_count);

/// [K, H, W, 3]
Tensor mpli_to_tensor(const MultiPlaneLightImage& mpli);
MultiPlaneLightImage tensor_to_mpli(const Tensor& tensor, std::span<const double> depths);

/// Binary P6 with 8-bit channels; values are clamped to [0, 1].
void write_ppm(const std::filesystem::path& path, const RgbImage<float>& image);
RgbImage<float> read_ppm(const std::filesystem::path& path);

nlohmann::json light_to_json(const PointLight& light);
PointLight light_from_json(const nlohmann::json& j);
nlohmann::json script_to_json(const LightingScript& script);
LightingScript script_from_json(const nlohmann::json& j);

/// [{t, position, look_at}]; look_at is one unit along the optical axis.
nlohmann::json trajectory_to_json(std::span<const CameraPose> trajectory);
std::vector<CameraPose> trajectory_from_json(const nlohmann::json& j);

nlohmann::json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const nlohmann::json& j);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace rlk
