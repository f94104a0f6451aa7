// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "heartdarts/binary_io.hpp"
#include "heartdarts/optim.hpp"

using namespace heartdarts;

namespace {

Parameter<double> param(std::vector<double> v) {
    const std::size_t n = v.size();
    return {"p", ParamGroup::weight, make_tensor<double>({1, 1, n}, std::move(v))};
}

}  // namespace

TEST_SUITE("optim") {
    TEST_CASE("default regimes") {
        const auto w = OptimizerConfig::weight_default();
        CHECK(w.kind == OptimizerKind::momentum_sgd);
        CHECK(w.lr == 0.025);
        CHECK(w.momentum == 0.9);
        CHECK(w.weight_decay == 3e-4);
        const auto a = OptimizerConfig::arch_default();
        CHECK(a.kind == OptimizerKind::adaptive_moments);
        CHECK(a.lr == 3e-4);
        CHECK(a.beta1 == 0.5);
        CHECK(a.beta2 == 0.999);
        CHECK(a.weight_decay == 1e-3);
    }

    TEST_CASE("momentum sgd matches a hand-rolled recurrence") {
        auto p = param({1.0, -2.0});
        OptimizerConfig cfg = OptimizerConfig::weight_default();
        Optimizer<double> opt(cfg, {&p});
        double w0 = 1.0, w1 = -2.0, v0 = 0, v1 = 0;
        for (int step = 0; step < 5; ++step) {
            // gradient of 0.5*w^2 is w
            p.tensor->grad = p.tensor->values;
            const double g0 = w0, g1 = w1;
            v0 = 0.9 * v0 + g0 + 3e-4 * w0;
            v1 = 0.9 * v1 + g1 + 3e-4 * w1;
            w0 -= 0.025 * v0;
            w1 -= 0.025 * v1;
            opt.step({&p});
            CHECK(p.tensor->values[0] == doctest::Approx(w0).epsilon(1e-15));
            CHECK(p.tensor->values[1] == doctest::Approx(w1).epsilon(1e-15));
        }
        CHECK(opt.step_count() == 5);
    }

    TEST_CASE("first adaptive step moves by lr times the gradient sign") {
        auto p = param({0.0, 0.0, 0.0});
        OptimizerConfig cfg = OptimizerConfig::arch_default();
        Optimizer<double> opt(cfg, {&p});
        p.tensor->grad = {0.5, -3.0, 1e-3};
        opt.step({&p});
        CHECK(p.tensor->values[0] == doctest::Approx(-3e-4).epsilon(1e-6));
        CHECK(p.tensor->values[1] == doctest::Approx(3e-4).epsilon(1e-6));
        CHECK(p.tensor->values[2] == doctest::Approx(-3e-4).epsilon(1e-4));
    }

    TEST_CASE("zero learning rate leaves parameters bitwise unchanged") {
        for (auto cfg : {OptimizerConfig::weight_default(), OptimizerConfig::arch_default()}) {
            cfg.lr = 0.0;
            auto p = param({0.1, -0.7, 3.0});
            const auto before = p.tensor->values;
            Optimizer<double> opt(cfg, {&p});
            for (int i = 0; i < 3; ++i) {
                p.tensor->grad = {1.0, 2.0, -5.0};
                opt.step({&p});
            }
            CHECK(p.tensor->values == before);
        }
    }

    TEST_CASE("stepping without gradients or with the wrong group is a state error") {
        auto p = param({1.0});
        auto q = param({1.0});
        Optimizer<double> opt(OptimizerConfig::weight_default(), {&p});
        CHECK_THROWS_AS(opt.step({&p}), StateError);
        p.tensor->zero_grad();
        q.tensor->zero_grad();
        CHECK_THROWS_AS(opt.step({&p, &q}), StateError);
    }

    TEST_CASE("cosine schedule") {
        CHECK(cosine_lr(0, 100, 0.025, 0.0) == 0.025);
        CHECK(cosine_lr(99, 100, 0.025, 0.0) == doctest::Approx(0.0));
        CHECK(cosine_lr(0, 1, 0.025, 0.0) == 0.025);
        for (std::size_t e = 0; e < 50; ++e) {
            const double want = 0.5 * 0.025 * (1 + std::cos(std::numbers::pi * static_cast<double>(e) / 49.0));
            CHECK(cosine_lr(e, 50, 0.025, 0.0) == doctest::Approx(want).epsilon(1e-14));
            if (e > 0) CHECK(cosine_lr(e, 50, 0.025, 0.0) < cosine_lr(e - 1, 50, 0.025, 0.0));
        }
    }

    TEST_CASE("gradient clipping") {
        auto p = param({0, 0});
        auto q = param({0});
        p.tensor->grad = {3.0, 0.0};
        q.tensor->grad = {4.0};
        CHECK(clip_grad_norm<double>({&p, &q}, 10.0) == doctest::Approx(5.0));
        CHECK(p.tensor->grad[0] == 3.0);
        CHECK(clip_grad_norm<double>({&p, &q}, 1.0) == doctest::Approx(5.0));
        CHECK(p.tensor->grad[0] == doctest::Approx(0.6));
        CHECK(q.tensor->grad[0] == doctest::Approx(0.8));
    }

    TEST_CASE("optimizer state round-trips through bytes") {
        auto p = param({1.0, 2.0});
        Optimizer<double> a(OptimizerConfig::arch_default(), {&p});
        p.tensor->grad = {0.3, -0.2};
        a.step({&p});
        ByteWriter w;
        a.save(w);
        const auto bytes = std::move(w).take();
        Optimizer<double> b(OptimizerConfig::arch_default(), {&p});
        ByteReader<CheckpointError> r(bytes);
        b.load(r);
        CHECK(a == b);

        Optimizer<double> wrong(OptimizerConfig::weight_default(), {&p});
        ByteReader<CheckpointError> r2(bytes);
        CHECK_THROWS_AS(wrong.load(r2), CheckpointError);

        ByteReader<CheckpointError> r3(std::span<const std::uint8_t>(bytes.data(), bytes.size() - 3));
        Optimizer<double> c(OptimizerConfig::arch_default(), {&p});
        CHECK_THROWS_AS(c.load(r3), CheckpointError);
    }
}
