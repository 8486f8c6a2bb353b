// Copyright (C) 2026 RelightKit Authors
// SPDX-License-Identifier: Apache-2.0

#include "relightkit/dit.hpp"
#include "relightkit/flow.hpp"
#include "relightkit/training.hpp"

#include <doctest.h>

#include <cmath>

using namespace rlk;
using namespace rlk::dit;

namespace {

DitConfig small_config() {
    DitConfig c;
    c.latent_channels = 8;
    c.latent_height = 4;
    c.latent_width = 4;
    c.groups = 2;
    c.patch = 2;
    c.width = 16;
    c.heads = 2;
    c.blocks = 2;
    c.mlp_ratio = 2;
    c.lora_rank = 2;
    c.time_features = 8;
    return c;
}

template <typename S>
Mat<S> random_patches(const DitConfig& c, CounterRng& rng, double scale = 1.0) {
    return (standard_normal<S>(c.tokens(), c.patch_dim(), rng) * S(scale)).eval();
}

/// Every tensor perturbed so no gradient path is trivially zero.
DitParams<double> busy_params(const DitConfig& c, std::uint64_t seed) {
    DitParams<double> p = init_base_params<double>(c, seed);
    init_lia(p, AdapterInit::copy);
    CounterRng rng(seed, 99);
    for_each_param(
        [&](const std::string&, Mat<double>& m) {
            for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] += 0.2 * rng.normal();
        },
        p);
    return p;
}

}  // namespace

TEST_SUITE("flow") {
    TEST_CASE("make_xt endpoints and midpoint") {
        CounterRng rng(1, 0);
        const Mat<double> x0 = standard_normal<double>(3, 4, rng);
        const Mat<double> eps = standard_normal<double>(3, 4, rng);
        CHECK(make_xt(x0, eps, 0.0) == x0);
        CHECK(make_xt(x0, eps, 1.0) == eps);
        CHECK(make_xt(Mat<double>::Zero(3, 4).eval(), eps, 0.5) == (0.5 * eps).eval());
        CHECK_THROWS_AS(make_xt(x0, Mat<double>::Zero(2, 4).eval(), 0.5), Error);
        CHECK_THROWS_AS(make_xt(x0, eps, 1.5), Error);
    }

    TEST_CASE("target velocity is constant along the path") {
        CounterRng rng(2, 0);
        const Mat<double> x0 = standard_normal<double>(3, 4, rng);
        const Mat<double> eps = standard_normal<double>(3, 4, rng);
        const Mat<double> d = (make_xt(x0, eps, 0.7) - make_xt(x0, eps, 0.3)) / 0.4;
        CHECK((d - target_velocity(x0, eps)).cwiseAbs().maxCoeff() <= 1e-12);
    }

    TEST_CASE("flow_loss values") {
        CounterRng rng(3, 0);
        const Mat<double> x0 = standard_normal<double>(5, 6, rng);
        const Mat<double> eps = standard_normal<double>(5, 6, rng);
        const Mat<double> u = eps - x0;
        CHECK(flow_loss(u, x0, eps) == 0.0);
        const Mat<double> z = Mat<double>::Zero(5, 6);
        CHECK(flow_loss(z, z, z) == 0.0);
        const double delta = 0.37;
        const Mat<double> shifted = (u.array() + delta).matrix();
        CHECK(flow_loss(shifted, x0, eps) == doctest::Approx(delta * delta).epsilon(1e-12));
        CHECK_THROWS_AS(flow_loss(z, x0, Mat<double>::Zero(4, 6).eval()), Error);
    }

    TEST_CASE("euler with an oracle field returns x0") {
        CounterRng rng(4, 0);
        const Mat<double> x0 = standard_normal<double>(6, 5, rng);
        const Mat<double> eps = standard_normal<double>(6, 5, rng);
        auto oracle = [&](const Mat<double>&, double) { return Mat<double>(eps - x0); };
        for (int steps : {1, 2, 4, 7, 50}) {
            CHECK((euler_integrate<double>(oracle, eps, steps) - x0).cwiseAbs().maxCoeff() <= 1e-5);
        }
        CHECK_THROWS_AS(euler_integrate<double>(oracle, eps, 0), Error);
    }

    TEST_CASE("seeded euler sampling") {
        const std::uint64_t seed = 77;
        CounterRng noise_rng(seed, 0xE0);
        const Mat<double> eps = standard_normal<double>(4, 3, noise_rng);
        const Mat<double> x0 = Mat<double>::Constant(4, 3, 0.25);
        auto oracle = [&](const Mat<double>&, double) { return Mat<double>(eps - x0); };
        const Mat<double> a = euler_sample<double>(oracle, 4, 3, 3, seed);
        const Mat<double> b = euler_sample<double>(oracle, 4, 3, 3, seed);
        CHECK(a == b);
        CHECK((a - x0).cwiseAbs().maxCoeff() <= 1e-5);
        CHECK_THROWS_AS(euler_sample<double>(oracle, 4, 3, 0, seed), Error);
    }
}

TEST_SUITE("flow_dit") {
    TEST_CASE("default layout has 180 tokens") {
        const DitConfig c = DitConfig::for_latent(LatentShape{4, 48, 48}, 5);
        CHECK(c.latent_channels == 192);
        CHECK(c.tokens() == 180);
        CHECK(c.tokens_per_group() == 36);
    }

    TEST_CASE("config validation") {
        DitConfig c = small_config();
        c.heads = 3;
        CHECK_THROWS_AS(c.validate(), Error);
        c = small_config();
        c.patch = 3;
        CHECK_THROWS_AS(c.validate(), Error);
        c = small_config();
        c.lora_rank = 0;
        CHECK_THROWS_AS(c.validate(), Error);
    }

    TEST_CASE("patch rearrangement round trip") {
        const DitConfig c = small_config();
        CounterRng rng(5, 0);
        std::vector<LatentGroup> groups;
        for (int g = 0; g < c.groups; ++g) {
            groups.push_back(standard_normal<double>(c.latent_channels, 16, rng).cast<float>());
        }
        const Mat<float> m = patch_matrix<float>(groups, c);
        CHECK(m.rows() == c.tokens());
        const auto back = latent_from_patches(m, c);
        for (int g = 0; g < c.groups; ++g) CHECK(back[g] == groups[g]);
        groups.pop_back();
        CHECK_THROWS_AS(patch_matrix<float>(groups, c), Error);
    }

    TEST_CASE("zero latent gives zero tokens") {
        const DitConfig c = small_config();
        const Dit<double> m(c, init_base_params<double>(c, 1));
        CHECK((m.patchify(Mat<double>::Zero(c.tokens(), c.patch_dim())).array() == 0.0).all());
    }

    TEST_CASE("orthonormal patchify is recovered by its transpose") {
        const DitConfig c = small_config();
        const DitParams<double> p = init_base_params<double>(c, 2);
        const Mat<double>& w = p.patch_w;
        CHECK((w.transpose() * w - Mat<double>::Identity(c.width, c.width)).cwiseAbs().maxCoeff() <= 1e-12);
        const Dit<double> m(c, p);
        CounterRng rng(6, 0);
        // Inputs inside the projection's row space.
        const Mat<double> x = standard_normal<double>(c.tokens(), c.width, rng) * w.transpose();
        const Mat<double> back = m.patchify(x) * w.transpose();
        CHECK((back - x).cwiseAbs().maxCoeff() <= 1e-5);
    }

    TEST_CASE("adapter init modes") {
        const DitConfig c = small_config();
        CounterRng rng(7, 0);
        const Mat<double> x = random_patches<double>(c, rng);
        DitParams<double> p = init_base_params<double>(c, 3);
        p.patch_b.setConstant(0.125);
        init_lia(p, AdapterInit::copy);
        CHECK(p.lia_w == p.patch_w);
        CHECK(p.lia_b == p.patch_b);
        CHECK(p.lia_gain(0, 0) == 0.0);
        const Dit<double> copy(c, p);
        CHECK(copy.light_tokens(x) == copy.patchify(x));

        // All -1 light latent: every token equals b - colsum(W).
        const Mat<double> minus_one = Mat<double>::Constant(c.tokens(), c.patch_dim(), -1.0);
        const Mat<double> tok = copy.light_tokens(minus_one);
        const Mat<double> expected = p.patch_b - p.patch_w.colwise().sum();
        for (Eigen::Index r = 0; r < tok.rows(); ++r) CHECK((tok.row(r) - expected).cwiseAbs().maxCoeff() <= 1e-12);

        init_lia(p, AdapterInit::zero);
        const Dit<double> zero(c, p);
        CHECK((zero.light_tokens(x).array() == 0.0).all());
        DitParams<double> empty;
        CHECK_THROWS_AS(init_lia(empty, AdapterInit::copy), Error);
    }

    TEST_CASE("all-zero parameters give zero velocity") {
        const DitConfig c = small_config();
        DitParams<double> p = init_base_params<double>(c, 4);
        init_lia(p, AdapterInit::copy);
        p = zeros_like(p);
        const Dit<double> m(c, p);
        CounterRng rng(8, 0);
        const Mat<double> s = random_patches<double>(c, rng);
        const Mat<double> x = random_patches<double>(c, rng);
        const Mat<double> l = random_patches<double>(c, rng);
        CHECK((m.forward(s, x, &l, 0.4).array() == 0.0).all());
    }

    TEST_CASE("zero-init adapter ignores the light input") {
        const ModelCheckpoint base = make_pretrain_checkpoint(small_config(), 5);
        const ModelCheckpoint ft = make_finetune_checkpoint(base, AdapterInit::zero, 6);
        CounterRng rng(9, 0);
        const DitConfig c = small_config();
        const Mat<float> s = random_patches<float>(c, rng);
        const Mat<float> x = random_patches<float>(c, rng);
        const Mat<float> l1 = random_patches<float>(c, rng);
        const Mat<float> l2 = random_patches<float>(c, rng);
        CHECK(ft.model.forward(s, x, &l1, 0.5f) == ft.model.forward(s, x, &l2, 0.5f));
    }

    TEST_CASE("copy-init finetune start matches the base model") {
        const DitConfig c = small_config();
        ModelCheckpoint base = make_pretrain_checkpoint(c, 5);
        CounterRng rng(10, 0);
        // Move the base away from its init so the comparison is not trivial.
        for_each_param(
            [&](const std::string&, Mat<float>& m) {
                for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] += float(0.1 * rng.normal());
            },
            base.model.params());
        for (auto& b : base.model.params().blocks) b.lora_b.setZero();
        const ModelCheckpoint ft = make_finetune_checkpoint(base, AdapterInit::copy, 6);
        const Mat<float> s = random_patches<float>(c, rng);
        const Mat<float> x = random_patches<float>(c, rng);
        const Mat<float> expected = base.model.forward(s, x, nullptr, 0.3f);
        for (int trial = 0; trial < 3; ++trial) {
            const Mat<float> l = random_patches<float>(c, rng);
            CHECK(ft.model.forward(s, x, &l, 0.3f) == expected);
        }
    }

    TEST_CASE("light without an adapter is rejected") {
        const DitConfig c = small_config();
        const Dit<double> m(c, init_base_params<double>(c, 1));
        const Mat<double> z = Mat<double>::Zero(c.tokens(), c.patch_dim());
        CHECK_THROWS_AS(m.forward(z, z, &z, 0.5), Error);
        const Mat<double> bad = Mat<double>::Zero(c.tokens() - 1, c.patch_dim());
        CHECK_THROWS_AS(m.forward(bad, z, nullptr, 0.5), Error);
    }

    TEST_CASE("batch samples do not interact") {
        const DitConfig c = small_config();
        const Dit<double> m(c, busy_params(c, 11));
        CounterRng rng(12, 0);
        TrainingSample a{random_patches<float>(c, rng), random_patches<float>(c, rng), random_patches<float>(c, rng)};
        TrainingSample b{random_patches<float>(c, rng), random_patches<float>(c, rng), random_patches<float>(c, rng)};
        const std::vector<Mat<double>> noise{random_patches<double>(c, rng), random_patches<double>(c, rng)};
        const std::vector<double> times{0.3, 0.8};

        const std::vector<const TrainingSample*> ab{&a, &b};
        const std::vector<const TrainingSample*> ba{&b, &a};
        const std::vector<Mat<double>> noise_ba{noise[1], noise[0]};
        const std::vector<double> times_ba{times[1], times[0]};
        const double l_ab = loss_and_grad<double>(m, ab, times, noise, nullptr);
        const double l_ba = loss_and_grad<double>(m, ba, times_ba, noise_ba, nullptr);
        CHECK(std::abs(l_ab - l_ba) <= 1e-6 * std::abs(l_ab));

        const std::vector<const TrainingSample*> only_a{&a}, only_b{&b};
        const double la = loss_and_grad<double>(m, only_a, std::span(times).first(1), std::span(noise).first(1), nullptr);
        const double lb =
            loss_and_grad<double>(m, only_b, std::span(times).last(1), std::span(noise).last(1), nullptr);
        CHECK(std::abs(l_ab - 0.5 * (la + lb)) <= 1e-6 * std::abs(l_ab));

        // Per-sample velocities are the same whether run first or second.
        const Mat<double> src = a.source.cast<double>();
        const Mat<double> xt = make_xt(Mat<double>(a.target.cast<double>()), noise[0], 0.3);
        const Mat<double> lt = a.light.cast<double>();
        const Mat<double> v1 = m.forward(src, xt, &lt, 0.3);
        m.forward(b.source.cast<double>().eval(), xt, &lt, 0.8);
        CHECK((m.forward(src, xt, &lt, 0.3) - v1).cwiseAbs().maxCoeff() <= 1e-12);
    }

    TEST_CASE("analytic gradients match central differences") {
        const DitConfig c = small_config();
        Dit<double> m(c, busy_params(c, 13));
        CounterRng rng(14, 0);
        TrainingSample s{random_patches<float>(c, rng, 0.5), random_patches<float>(c, rng, 0.5),
                         random_patches<float>(c, rng, 0.5)};
        const std::vector<const TrainingSample*> batch{&s};
        const std::vector<double> times{0.6};
        const std::vector<Mat<double>> noise{random_patches<double>(c, rng)};

        DitParams<double> grads = zeros_like(m.params());
        loss_and_grad<double>(m, batch, times, noise, &grads);

        std::vector<std::pair<Mat<double>*, Mat<double>*>> tensors;
        std::vector<std::string> names;
        for_each_param(
            [&](const std::string& name, Mat<double>& p, Mat<double>& g) {
                tensors.emplace_back(&p, &g);
                names.push_back(name);
            },
            m.params(), grads);

        const double h = 1e-3;
        int checked = 0;
        CounterRng pick(15, 0);
        for (std::size_t ti = 0; ti < tensors.size(); ti += 2) {
            auto [param, grad] = tensors[ti];
            const Eigen::Index idx = static_cast<Eigen::Index>(pick.below(param->size()));
            const double orig = param->data()[idx];
            param->data()[idx] = orig + h;
            const double up = loss_and_grad<double>(m, batch, times, noise, nullptr);
            param->data()[idx] = orig - h;
            const double down = loss_and_grad<double>(m, batch, times, noise, nullptr);
            param->data()[idx] = orig;
            const double numeric = (up - down) / (2 * h);
            const double analytic = grad->data()[idx];
            const double rel = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-3});
            INFO(names[ti], " analytic=", analytic, " numeric=", numeric);
            CHECK(rel < 1e-4);
            ++checked;
        }
        CHECK(checked >= 10);
    }
}
