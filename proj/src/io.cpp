// Copyright (C) 2026 RelightKit Authors
// SPDX-License-Identifier: Apache-2.0

#include "relightkit/io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace rlk {

namespace {

constexpr char kMagic[4] = {'R', 'L', 'T', 'K'};

void put_u32_le(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32_le(const std::string& in, std::size_t at) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
    return v;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("write failed for " + path.string());
}

Eigen::Vector3d vec3_from_json(const nlohmann::json& j, const char* what) {
    if (!j.is_array() || j.size() != 3) throw Error(std::string(what) + " must be a 3-element array");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

nlohmann::json vec3_to_json(const Eigen::Vector3d& v) { return nlohmann::json::array({v.x(), v.y(), v.z()}); }

}  // namespace

std::int64_t Tensor::element_count() const {
    std::int64_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string encode_rltk(const Tensor& tensor) {
    for (auto d : tensor.shape) {
        if (d < 0) throw Error("negative tensor dimension");
    }
    if (tensor.element_count() != static_cast<std::int64_t>(tensor.data.size())) {
        throw Error("tensor data does not match its shape");
    }
    const nlohmann::json header = {{"dtype", "f32"}, {"shape", tensor.shape}, {"order", "row-major"}};
    const std::string h = header.dump();
    std::string out(kMagic, 4);
    put_u32_le(out, static_cast<std::uint32_t>(h.size()));
    out += h;
    const std::size_t payload_at = out.size();
    out.resize(payload_at + 4 * tensor.data.size());
    for (std::size_t i = 0; i < tensor.data.size(); ++i) {
        const auto bits = std::bit_cast<std::uint32_t>(tensor.data[i]);
        for (int b = 0; b < 4; ++b) out[payload_at + 4 * i + b] = static_cast<char>((bits >> (8 * b)) & 0xFF);
    }
    return out;
}

Tensor decode_rltk(const std::string& bytes) {
    if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 4) != 0) throw Error("not an RLTK file (bad magic)");
    const std::uint32_t header_len = get_u32_le(bytes, 4);
    if (bytes.size() < 8ull + header_len) throw Error("truncated RLTK header");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.substr(8, header_len));
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("RLTK header is not valid JSON: ") + e.what());
    }
    if (header.value("dtype", "") != "f32") throw Error("unsupported RLTK dtype");
    if (header.value("order", "row-major") != "row-major") throw Error("unsupported RLTK order");
    Tensor t;
    t.shape = header.at("shape").get<std::vector<std::int64_t>>();
    for (auto d : t.shape) {
        if (d < 0) throw Error("negative tensor dimension");
    }
    const std::size_t payload_at = 8ull + header_len;
    const auto n = static_cast<std::size_t>(t.element_count());
    if (bytes.size() - payload_at != 4 * n) throw Error("RLTK payload size does not match shape");
    t.data.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::uint32_t bits = 0;
        for (int b = 0; b < 4; ++b) {
            bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[payload_at + 4 * i + b])) << (8 * b);
        }
        t.data[i] = std::bit_cast<float>(bits);
    }
    return t;
}

void write_rltk(const std::filesystem::path& path, const Tensor& tensor) { write_file(path, encode_rltk(tensor)); }

Tensor read_rltk(const std::filesystem::path& path) { return decode_rltk(read_file(path)); }

Tensor video_to_tensor(const Video& video) {
    const int f = video.frame_count();
    const int h = video.height();
    const int w = video.width();
    Tensor t{{f, h, w, 3}, {}};
    t.data.reserve(static_cast<std::size_t>(f) * h * w * 3);
    for (const auto& frame : video.frames) {
        for (int v = 0; v < h; ++v) {
            for (int u = 0; u < w; ++u) {
                for (int c = 0; c < 3; ++c) t.data.push_back(frame.channel[c](v, u));
            }
        }
    }
    return t;
}

Video tensor_to_video(const Tensor& t, double fps) {
    if (t.shape.size() != 4 || t.shape[3] != 3) throw Error("video tensor must have shape [F, H, W, 3]");
    const auto f = static_cast<int>(t.shape[0]);
    const auto h = static_cast<int>(t.shape[1]);
    const auto w = static_cast<int>(t.shape[2]);
    Video video;
    video.fps = fps;
    std::size_t i = 0;
    for (int k = 0; k < f; ++k) {
        auto frame = Frame::zeros(h, w);
        for (int v = 0; v < h; ++v) {
            for (int u = 0; u < w; ++u) {
                for (int c = 0; c < 3; ++c) frame.channel[c](v, u) = t.data[i++];
            }
        }
        video.frames.push_back(std::move(frame));
    }
    return video;
}

Tensor latent_to_tensor(const LatentVideo& latent) {
    const auto& sh = latent.shape;
    Tensor t{{latent.group_count(), sh.channels(), sh.latent_height(), sh.latent_width()}, {}};
    for (const auto& g : latent.groups) t.data.insert(t.data.end(), g.data(), g.data() + g.size());
    return t;
}

LatentVideo tensor_to_latent(const Tensor& t, const LatentShape& shape, int frame_count) {
    if (t.shape.size() != 4 || t.shape[1] != shape.channels() || t.shape[2] != shape.latent_height() ||
        t.shape[3] != shape.latent_width()) {
        throw Error("latent tensor shape does not match the codec shape");
    }
    LatentVideo lv;
    lv.shape = shape;
    lv.frame_count = frame_count;
    const auto per = static_cast<std::size_t>(shape.channels()) * shape.latent_height() * shape.latent_width();
    for (std::int64_t g = 0; g < t.shape[0]; ++g) {
        LatentGroup m(shape.channels(), shape.latent_height() * shape.latent_width());
        std::memcpy(m.data(), t.data.data() + g * per, per * sizeof(float));
        lv.groups.push_back(std::move(m));
    }
    return lv;
}

Tensor mpli_to_tensor(const MultiPlaneLightImage& mpli) {
    const int h = mpli.height();
    const int w = mpli.width();
    Tensor t{{mpli.plane_count(), h, w, 3}, {}};
    for (const auto& p : mpli.planes) {
        for (int v = 0; v < h; ++v) {
            for (int u = 0; u < w; ++u) {
                for (int c = 0; c < 3; ++c) t.data.push_back(static_cast<float>(p.pixels.channel[c](v, u)));
            }
        }
    }
    return t;
}

MultiPlaneLightImage tensor_to_mpli(const Tensor& t, std::span<const double> depths) {
    if (t.shape.size() != 4 || t.shape[3] != 3) throw Error("MPLI tensor must have shape [K, H, W, 3]");
    if (static_cast<std::size_t>(t.shape[0]) != depths.size()) throw Error("depth count does not match plane count");
    const auto h = static_cast<int>(t.shape[1]);
    const auto w = static_cast<int>(t.shape[2]);
    MultiPlaneLightImage mpli;
    std::size_t i = 0;
    for (double d : depths) {
        LightImage li{RgbImage<double>::zeros(h, w), d};
        for (int v = 0; v < h; ++v) {
            for (int u = 0; u < w; ++u) {
                for (int c = 0; c < 3; ++c) li.pixels.channel[c](v, u) = t.data[i++];
            }
        }
        mpli.planes.push_back(std::move(li));
    }
    return mpli;
}

void write_ppm(const std::filesystem::path& path, const RgbImage<float>& image) {
    const int h = image.height();
    const int w = image.width();
    std::string out = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
    out.reserve(out.size() + static_cast<std::size_t>(w) * h * 3);
    for (int v = 0; v < h; ++v) {
        for (int u = 0; u < w; ++u) {
            for (int c = 0; c < 3; ++c) {
                const float x = std::clamp(image.channel[c](v, u), 0.0f, 1.0f);
                out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(x * 255.0f))));
            }
        }
    }
    write_file(path, out);
}

RgbImage<float> read_ppm(const std::filesystem::path& path) {
    const std::string bytes = read_file(path);
    std::istringstream in(bytes);
    std::string magic;
    int w = 0, h = 0, maxval = 0;
    in >> magic >> w >> h >> maxval;
    if (magic != "P6" || w <= 0 || h <= 0 || maxval != 255) throw Error("unsupported PPM");
    const auto at = static_cast<std::size_t>(in.tellg()) + 1;
    if (bytes.size() < at + static_cast<std::size_t>(w) * h * 3) throw Error("truncated PPM");
    auto img = RgbImage<float>::zeros(h, w);
    std::size_t i = at;
    for (int v = 0; v < h; ++v) {
        for (int u = 0; u < w; ++u) {
            for (int c = 0; c < 3; ++c) img.channel[c](v, u) = static_cast<unsigned char>(bytes[i++]) / 255.0f;
        }
    }
    return img;
}

nlohmann::json light_to_json(const PointLight& l) {
    return {{"position", vec3_to_json(l.position)}, {"color", vec3_to_json(l.color)}, {"intensity", l.intensity}};
}

PointLight light_from_json(const nlohmann::json& j) {
    PointLight l;
    l.position = vec3_from_json(j.at("position"), "position");
    l.color = vec3_from_json(j.at("color"), "color");
    l.intensity = j.at("intensity").get<double>();
    return l;
}

nlohmann::json script_to_json(const LightingScript& script) {
    nlohmann::json tracks = nlohmann::json::array();
    for (const auto& track : script.tracks) {
        nlohmann::json keys = nlohmann::json::array();
        for (const auto& k : track.keyframes) {
            nlohmann::json jk = light_to_json(k.light);
            jk["t"] = k.time;
            keys.push_back(std::move(jk));
        }
        tracks.push_back({{"keyframes", std::move(keys)}});
    }
    return {{"fps", script.fps}, {"frame_count", script.frame_count}, {"tracks", std::move(tracks)}};
}

LightingScript script_from_json(const nlohmann::json& j) {
    try {
        LightingScript s;
        s.fps = j.at("fps").get<double>();
        s.frame_count = j.at("frame_count").get<int>();
        for (const auto& jt : j.at("tracks")) {
            LightTrack track;
            for (const auto& jk : jt.at("keyframes")) track.keyframes.push_back({jk.at("t").get<double>(), light_from_json(jk)});
            s.tracks.push_back(std::move(track));
        }
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("malformed script.json: ") + e.what());
    }
}

nlohmann::json trajectory_to_json(std::span<const CameraPose> trajectory) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& pose : trajectory) {
        out.push_back({{"t", pose.timestamp},
                       {"position", vec3_to_json(pose.position)},
                       {"look_at", vec3_to_json(pose.position + pose.rotation.col(2))}});
    }
    return out;
}

std::vector<CameraPose> trajectory_from_json(const nlohmann::json& j) {
    try {
        std::vector<CameraPose> poses;
        for (const auto& jp : j) {
            poses.push_back(CameraPose::look_at(vec3_from_json(jp.at("position"), "position"),
                                                vec3_from_json(jp.at("look_at"), "look_at"), jp.at("t").get<double>()));
        }
        return poses;
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("malformed trajectory.json: ") + e.what());
    }
}

nlohmann::json read_json(const std::filesystem::path& path) {
    try {
        return nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw Error(path.string() + ": " + e.what());
    }
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) { write_file(path, j.dump(2) + "\n"); }

void write_text(const std::filesystem::path& path, const std::string& text) { write_file(path, text); }

}  // namespace rlk
