// Copyright (C) 2026 RelightKit Authors
// SPDX-License-Identifier: Apache-2.0

#include "relightkit/cli.hpp"
#include "relightkit/io.hpp"

#include "test_support.hpp"

#include <doctest.h>

#include <fstream>
#include <sstream>

using namespace rlk;

namespace {

struct CliResult {
    int code = 0;
    std::string out;
    std::string err;
};

CliResult run(std::vector<std::string> args) {
    args.insert(args.begin(), "relightkit");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

std::string bytes_of(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

LightingScript small_script(int frames) {
    LightingScript s;
    s.frame_count = frames;
    s.tracks.push_back({{{0.0, {{0.2, -0.3, 2.0}, {1.0, 0.6, 0.3}, 5.0}}}});
    return s;
}

}  // namespace

TEST_SUITE("cli") {
    TEST_CASE("missing subcommand is a usage error") {
        const CliResult r = run({});
        CHECK(r.code == kExitUsage);
        CHECK(r.err.find("relightkit") != std::string::npos);
        CHECK(run({"no-such-command"}).code == kExitUsage);
    }

    TEST_CASE("inspect prints the tensor header") {
        const auto dir = test::scratch_dir("cli_inspect");
        write_rltk(dir / "t.rltk", Tensor{{2, 3}, {1, 2, 3, 4, 5, 6}});
        const CliResult r = run({"inspect", (dir / "t.rltk").string()});
        CHECK(r.code == kExitOk);
        CHECK(r.out.find("[2, 3]") != std::string::npos);
        std::filesystem::remove_all(dir);
    }

    TEST_CASE("render-mpli rejects a 16-frame script") {
        const auto dir = test::scratch_dir("cli_mpli_bad");
        write_json(dir / "script.json", script_to_json(small_script(16)));
        const CliResult r = run({"render-mpli", (dir / "script.json").string(), "--out", (dir / "out").string()});
        CHECK(r.code == kExitUsage);
        CHECK(r.err.find("frame_count mod 4 != 1") != std::string::npos);
        std::filesystem::remove_all(dir);
    }

    TEST_CASE("render-mpli writes one MPLI per group and a sidecar") {
        const auto dir = test::scratch_dir("cli_mpli");
        write_json(dir / "script.json", script_to_json(small_script(9)));
        const CliResult r = run({"render-mpli", (dir / "script.json").string(), "--out", (dir / "out").string()});
        REQUIRE(r.code == kExitOk);
        CHECK(std::filesystem::exists(dir / "out" / "mpli_2.rltk"));
        CHECK_FALSE(std::filesystem::exists(dir / "out" / "mpli_3.rltk"));
        const Tensor lat = read_rltk(dir / "out" / "light_latent.rltk");
        CHECK(lat.shape == std::vector<std::int64_t>{3, 192, 12, 12});
        const auto side = read_json(dir / "out" / "light_latent.json");
        CHECK(side["K"] == 4);
        CHECK(side["frame_count"] == 9);
        CHECK(side["spatial_factor"] == 4);
        std::filesystem::remove_all(dir);
    }

    TEST_CASE("one-step oracle relight is bit-exact and repeatable") {
        const auto dir = test::scratch_dir("cli_relight");
        CounterRng rng(3, 0);
        const Video source = test::random_video(5, 16, 16, rng);
        const Video target = test::random_video(5, 16, 16, rng);
        write_rltk(dir / "source.rltk", video_to_tensor(source));
        write_rltk(dir / "target.rltk", video_to_tensor(target));
        write_json(dir / "script.json", script_to_json(small_script(5)));
        auto relight = [&](const std::string& out, const std::string& steps) {
            return run({"relight", (dir / "source.rltk").string(), (dir / "script.json").string(), "--oracle-target",
                        (dir / "target.rltk").string(), "--steps", steps, "--seed", "11", "--out", (dir / out).string()});
        };
        REQUIRE(relight("a", "1").code == kExitOk);
        CHECK(read_rltk(dir / "a" / "relit.rltk") == video_to_tensor(target));
        CHECK(read_json(dir / "a" / "relit_latent.json")["groups"] == 2);

        REQUIRE(relight("b", "1").code == kExitOk);
        CHECK(bytes_of(dir / "a" / "relit.rltk") == bytes_of(dir / "b" / "relit.rltk"));

        REQUIRE(relight("c", "6").code == kExitOk);
        const Tensor many = read_rltk(dir / "c" / "relit.rltk");
        const Tensor want = video_to_tensor(target);
        float worst = 0.0f;
        for (std::size_t i = 0; i < want.data.size(); ++i) worst = std::max(worst, std::abs(many.data[i] - want.data[i]));
        CHECK(worst <= 1e-5f);
        std::filesystem::remove_all(dir);
    }

    TEST_CASE("relight needs a model or an oracle") {
        const auto dir = test::scratch_dir("cli_relight_none");
        CounterRng rng(4, 0);
        write_rltk(dir / "source.rltk", video_to_tensor(test::random_video(5, 16, 16, rng)));
        write_json(dir / "script.json", script_to_json(small_script(5)));
        const CliResult r = run({"relight", (dir / "source.rltk").string(), (dir / "script.json").string(), "--out",
                                 (dir / "o").string()});
        CHECK(r.code == kExitUsage);
        std::filesystem::remove_all(dir);
    }

    TEST_CASE("plan-only dataset generation") {
        const auto dir = test::scratch_dir("cli_plan");
        const CliResult r = run({"gen-dataset", "--plan-only", "--scenes", "652", "--out", dir.string()});
        REQUIRE(r.code == kExitOk);
        const auto plan = read_json(dir / "plan.json");
        CHECK(plan["pairs"].size() == 7824u);
        std::filesystem::remove_all(dir);
    }
}
