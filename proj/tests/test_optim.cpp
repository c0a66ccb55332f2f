#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstring>
#include <limits>

#include "star/optim.hpp"

#ifndef M_PI
#define M_PI 3.14159265358979323846
#endif

using namespace star;

namespace {

NetworkSpec scalar_spec() {
    NetworkSpec spec;
    spec.depth = 0;
    spec.widths = {1, 1};
    return spec;
}

}  // namespace

TEST_CASE("sgd: plain step") {
    NetworkSpec spec = scalar_spec();
    NetParamsD p = zero_params<double>(spec);
    p.weights[0](0, 0) = 1.0;
    Gradients<double> g = zero_gradients<double>(spec);
    g.weights[0](0, 0) = 2.0;
    OptimizerConfig cfg;
    cfg.kind = OptKind::Sgd;
    auto st = OptimizerState<double>::make(cfg, spec.total_entries());
    sgd_step(p, g, st, 0.1);
    CHECK(p.weights[0](0, 0) == doctest::Approx(0.8));
}

TEST_CASE("sgd: zero gradient leaves parameters bit-identical") {
    NetworkSpec spec;
    spec.depth = 1;
    spec.widths = {2, 3, 1};
    Rng rng(1);
    NetParamsD p = init_params<double>(spec, rng);
    NetParamsD before = p;
    Gradients<double> g = zero_gradients<double>(spec);
    OptimizerConfig cfg;
    cfg.kind = OptKind::Sgd;
    auto st = OptimizerState<double>::make(cfg, spec.total_entries());
    sgd_step(p, g, st, 0.5);
    for (std::size_t j = 0; j < p.weights.size(); ++j)
        CHECK(std::memcmp(p.weights[j].data.data(), before.weights[j].data.data(),
                          p.weights[j].data.size() * sizeof(double)) == 0);
}

TEST_CASE("sgd: momentum trace matches the hand recurrence") {
    NetworkSpec spec = scalar_spec();
    NetParamsD p = zero_params<double>(spec);
    p.weights[0](0, 0) = 1.0;
    OptimizerConfig cfg;
    cfg.kind = OptKind::Sgd;
    cfg.momentum = 0.9;
    auto st = OptimizerState<double>::make(cfg, spec.total_entries());

    // hand recurrence: buf <- mu buf + g; w <- w - lr buf
    const double lr = 0.1, g1 = 2.0, g2 = -1.0;
    double w = 1.0, buf = 0.0;
    buf = 0.9 * buf + g1;
    w -= lr * buf;
    buf = 0.9 * buf + g2;
    w -= lr * buf;

    Gradients<double> g = zero_gradients<double>(spec);
    g.weights[0](0, 0) = g1;
    sgd_step(p, g, st, lr);
    g.weights[0](0, 0) = g2;
    sgd_step(p, g, st, lr);
    CHECK(p.weights[0](0, 0) == doctest::Approx(w).epsilon(1e-15));
}

TEST_CASE("adam: first step with unit gradient") {
    NetworkSpec spec = scalar_spec();
    NetParamsD p = zero_params<double>(spec);
    Gradients<double> g = zero_gradients<double>(spec);
    g.weights[0](0, 0) = 1.0;
    OptimizerConfig cfg;  // adam defaults
    auto st = OptimizerState<double>::make(cfg, spec.total_entries());
    adam_step(p, g, st, 0.001);
    // mhat = vhat = 1 at t = 1, so the step is lr / (1 + eps)
    CHECK(p.weights[0](0, 0) == doctest::Approx(-0.001 / (1.0 + 1e-8)).epsilon(1e-12));
}

TEST_CASE("adam: zero gradients leave parameters unchanged") {
    NetworkSpec spec = scalar_spec();
    NetParamsD p = zero_params<double>(spec);
    p.weights[0](0, 0) = 0.7;
    Gradients<double> g = zero_gradients<double>(spec);
    OptimizerConfig cfg;
    auto st = OptimizerState<double>::make(cfg, spec.total_entries());
    for (int i = 0; i < 10; ++i) adam_step(p, g, st, 0.001);
    CHECK(p.weights[0](0, 0) == 0.7);
}

TEST_CASE("adam: ten-step trace matches an independent scalar recurrence") {
    NetworkSpec spec = scalar_spec();
    NetParamsD p = zero_params<double>(spec);
    p.weights[0](0, 0) = 2.0;
    OptimizerConfig cfg;
    auto st = OptimizerState<double>::make(cfg, spec.total_entries());

    // oracle: minimize f(w) = w^2 by the written-out Adam recurrence
    double w = 2.0, m = 0.0, v = 0.0;
    const double lr = 0.05, b1 = 0.9, b2 = 0.999, eps = 1e-8;
    Gradients<double> g = zero_gradients<double>(spec);
    for (int t = 1; t <= 10; ++t) {
        const double grad = 2.0 * p.weights[0](0, 0);
        g.weights[0](0, 0) = grad;
        adam_step(p, g, st, lr);

        const double go = 2.0 * w;
        m = b1 * m + (1 - b1) * go;
        v = b2 * v + (1 - b2) * go * go;
        w -= lr * (m / (1 - std::pow(b1, t))) / (std::sqrt(v / (1 - std::pow(b2, t))) + eps);
        CHECK(p.weights[0](0, 0) == doctest::Approx(w).epsilon(1e-14));
    }
}

TEST_CASE("optimizer rejects non-finite updates") {
    NetworkSpec spec = scalar_spec();
    NetParamsD p = zero_params<double>(spec);
    Gradients<double> g = zero_gradients<double>(spec);
    g.weights[0](0, 0) = std::numeric_limits<double>::infinity();
    OptimizerConfig cfg;
    cfg.kind = OptKind::Sgd;
    auto st = OptimizerState<double>::make(cfg, spec.total_entries());
    CHECK_THROWS_AS(sgd_step(p, g, st, 0.1), NumericError);
}

TEST_CASE("schedule_lr: constant and cosine values") {
    LrSchedule constant{ScheduleKind::Constant, 0.01, 10, 1};
    CHECK(schedule_lr(constant, 1) == doctest::Approx(0.01));
    CHECK(schedule_lr(constant, 10) == doctest::Approx(0.01));

    LrSchedule cosine{ScheduleKind::CosineCyclic, 0.4, 20, 2};  // cycle length 10
    CHECK(schedule_lr(cosine, 1) == doctest::Approx(0.4));    // cycle start: cos(0) = 1
    CHECK(schedule_lr(cosine, 6) == doctest::Approx(0.2));    // midpoint: alpha0 / 2
    CHECK(schedule_lr(cosine, 11) == doctest::Approx(0.4));   // next cycle restarts
    const int c = 10;
    const double last = 0.5 * 0.4 * (std::cos(M_PI * (c - 1.0) / c) + 1.0);
    CHECK(schedule_lr(cosine, 10) == doctest::Approx(last));
    CHECK(schedule_lr(cosine, 20) == doctest::Approx(last));

    CHECK_THROWS_AS(schedule_lr(cosine, 0), ConfigError);
    CHECK_THROWS_AS(schedule_lr(cosine, 21), ConfigError);
}

TEST_CASE("schedule_lr: positive at cycle starts, non-increasing within a cycle") {
    for (int T : {7, 12, 30}) {
        for (int M : {1, 2, 3}) {
            if (T < M) continue;
            LrSchedule s{ScheduleKind::CosineCyclic, 0.1, T, M};
            const int c = (T + M - 1) / M;
            double prev = -1.0;
            for (int e = 1; e <= T; ++e) {
                const double lr = schedule_lr(s, e);
                const int pos = (e - 1) % c;
                if (pos == 0) {
                    CHECK(lr == doctest::Approx(0.1));
                    CHECK(lr > 0.0);
                } else {
                    CHECK(lr <= prev + 1e-15);
                }
                prev = lr;
            }
        }
    }
}

TEST_CASE("snapshot_boundaries") {
    CHECK(snapshot_boundaries(10, 2) == std::vector<int>{5, 10});
    CHECK(snapshot_boundaries(7, 3) == std::vector<int>{3, 6, 7});
    CHECK(snapshot_boundaries(9, 1) == std::vector<int>{9});
    CHECK(snapshot_boundaries(4, 3) == std::vector<int>{2, 3, 4});  // clamped, still increasing

    for (int T : {3, 5, 8, 13, 40}) {
        for (int M = 1; M <= T; ++M) {
            const auto b = snapshot_boundaries(T, M);
            REQUIRE(b.size() == static_cast<std::size_t>(M));
            CHECK(b.back() == T);
            for (std::size_t i = 1; i < b.size(); ++i) CHECK(b[i] > b[i - 1]);
        }
    }
    CHECK_THROWS_AS(snapshot_boundaries(2, 3), ConfigError);
}
