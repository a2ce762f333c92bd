#include <doctest.h>

#include <cmath>

#include "derain/errors.hpp"
#include "derain/optimizer.hpp"

using namespace derain;

namespace {

// One scalar parameter w with loss 0.5 * (w - 3)^2, gradient w - 3.
ParameterSet scalar_param(float w0) {
    ParameterSet p;
    p.add("w", Tensor(Shape{1, 1, 1, 1}, w0));
    return p;
}

void set_grad(ParameterSet& p) {
    auto& var = p.entries()[0].var;
    var.zero_grad();
    var.node()->grad_buffer()[0] = var.value()[0] - 3.0f;
}

} // namespace

TEST_CASE("sgd with momentum and weight decay follows the heavy-ball recursion") {
    OptimizerConfig cfg;
    cfg.learning_rate = 0.1;
    cfg.momentum = 0.9;
    cfg.weight_decay = 0.01;
    Optimizer opt(cfg);
    ParameterSet p = scalar_param(1.0f);

    double w = 1.0, buf = 0.0;
    for (int step = 1; step <= 20; ++step) {
        set_grad(p);
        opt.step(p);
        const double g = (w - 3.0) + 0.01 * w;
        buf = step == 1 ? g : 0.9 * buf + g;
        w -= 0.1 * buf;
        CHECK(p.entries()[0].var.value()[0] == doctest::Approx(w).epsilon(1e-5));
    }
    CHECK(opt.steps_taken() == 20);
}

TEST_CASE("adam follows the bias-corrected moment recursion") {
    OptimizerConfig cfg;
    cfg.kind = OptimizerKind::adam;
    cfg.learning_rate = 0.05;
    cfg.weight_decay = 0.0;
    Optimizer opt(cfg);
    ParameterSet p = scalar_param(-2.0f);

    double w = -2.0, m = 0.0, v = 0.0;
    for (int step = 1; step <= 30; ++step) {
        set_grad(p);
        opt.step(p);
        const double g = w - 3.0;
        m = 0.5 * m + 0.5 * g;
        v = 0.999 * v + 0.001 * g * g;
        const double mh = m / (1.0 - std::pow(0.5, step));
        const double vh = v / (1.0 - std::pow(0.999, step));
        w -= 0.05 * mh / (std::sqrt(vh) + 1e-8);
        CHECK(p.entries()[0].var.value()[0] == doctest::Approx(w).epsilon(1e-4));
    }
}

TEST_CASE("a missing gradient with no weight decay leaves the parameter alone") {
    OptimizerConfig cfg;
    cfg.weight_decay = 0.0;
    for (auto kind : {OptimizerKind::sgd, OptimizerKind::adam}) {
        cfg.kind = kind;
        Optimizer opt(cfg);
        ParameterSet p = scalar_param(1.5f);
        opt.step(p);
        CHECK(p.entries()[0].var.value()[0] == 1.5f);
    }
}

TEST_CASE("exported state resumes the trajectory exactly") {
    for (auto kind : {OptimizerKind::sgd, OptimizerKind::adam}) {
        OptimizerConfig cfg;
        cfg.kind = kind;
        cfg.learning_rate = 0.05;
        Optimizer a(cfg);
        ParameterSet pa = scalar_param(0.0f);
        for (int i = 0; i < 5; ++i) {
            set_grad(pa);
            a.step(pa);
        }
        Optimizer b(cfg);
        ParameterSet pb = pa;
        b.import_state(pb, a.export_state(pa), a.steps_taken());
        for (int i = 0; i < 5; ++i) {
            set_grad(pa);
            a.step(pa);
            set_grad(pb);
            b.step(pb);
        }
        CHECK(pa.entries()[0].var.value()[0] == pb.entries()[0].var.value()[0]);
    }
}

TEST_CASE("importing incomplete state fails") {
    OptimizerConfig cfg;
    cfg.kind = OptimizerKind::adam;
    Optimizer a(cfg);
    ParameterSet p = scalar_param(0.0f);
    set_grad(p);
    a.step(p);
    auto state = a.export_state(p);
    state.erase("v/w");
    Optimizer b(cfg);
    CHECK_THROWS_AS(b.import_state(p, state, 1), StructuralError);
}

TEST_CASE("optimizer names parse") {
    CHECK(parse_optimizer("adam") == OptimizerKind::adam);
    CHECK(to_string(OptimizerKind::sgd) == "sgd");
    CHECK_THROWS_AS(parse_optimizer("rmsprop"), ConfigError);
}
