#include <doctest.h>

#include <cmath>

#include "gd/optim.hpp"
#include "gd/ops.hpp"
#include "test_helpers.hpp"

using namespace gd;

namespace {

ModelParams single_scalar(Real value) {
    ModelParams mp;
    mp.add("w", Tensor::from_data({1}, {value}, true));
    return mp;
}

void set_grad(ModelParams& mp, const std::string& name, std::vector<Real> g) {
    Tensor t = mp.at(name);
    Tensor loss = sum_all(mul(t, Tensor::from_data(t.shape(), std::move(g))));
    backward(loss);
}

}  // namespace

TEST_CASE("adam with zero gradients and zero decay is the identity") {
    Rng rng(2);
    ModelParams mp;
    mp.add("a", gdt::random_tensor({3, 4}, rng, true));
    mp.add("b", gdt::random_tensor({7}, rng, true));
    AdamHyper hyper;
    hyper.weight_decay = 0.0;
    OptimizerState st = make_optimizer(mp, hyper);
    const auto before_a = mp.at("a").value();
    const auto before_b = mp.at("b").value();
    for (int step = 0; step < 5; ++step) {
        mp.zero_grad();
        set_grad(mp, "a", std::vector<Real>(12, 0.0));
        set_grad(mp, "b", std::vector<Real>(7, 0.0));
        adam_step(st, mp);
    }
    CHECK(mp.at("a").value() == before_a);
    CHECK(mp.at("b").value() == before_b);
}

TEST_CASE("first adam step moves by about -lr for unit gradient") {
    ModelParams mp = single_scalar(1.0);
    AdamHyper hyper;
    hyper.learning_rate = 0.1;
    OptimizerState st = make_optimizer(mp, hyper);
    set_grad(mp, "w", {1.0});
    adam_step(st, mp);
    // mhat = vhat = 1 after bias correction, so the step is lr/(1+eps).
    CHECK(std::fabs(mp.at("w").value()[0] - (1.0 - 0.1)) < 1e-8);
    CHECK(st.step == 1);
}

TEST_CASE("decay-only step multiplies by (1 - lr*wd)") {
    ModelParams mp = single_scalar(2.0);
    AdamHyper hyper;
    hyper.learning_rate = 0.5;
    hyper.weight_decay = 1e-5;
    OptimizerState st = make_optimizer(mp, hyper);
    set_grad(mp, "w", {0.0});
    adam_step(st, mp);
    CHECK(mp.at("w").value()[0] == doctest::Approx(2.0 * (1.0 - 0.5 * 1e-5)).epsilon(1e-15));
}

TEST_CASE("adam rejects a parameter without gradient") {
    ModelParams mp = single_scalar(1.0);
    OptimizerState st = make_optimizer(mp, {});
    CHECK_THROWS_AS(adam_step(st, mp), std::invalid_argument);
}

TEST_CASE("warmup-cosine schedule endpoints and midpoint") {
    CHECK(lr_at(0, 100, 10, 1.0) == 0.0);
    CHECK(lr_at(10, 100, 10, 1.0) == doctest::Approx(1.0));
    CHECK(lr_at(100, 100, 10, 1.0) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(lr_at(55, 100, 10, 1.0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(lr_at(5, 100, 10, 1.0) == doctest::Approx(0.5));
    CHECK_THROWS_AS(lr_at(0, 10, 11, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(lr_at(-1, 10, 5, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(lr_at(11, 10, 5, 1.0), std::invalid_argument);
}

TEST_CASE("schedule is monotone down after warmup") {
    Real prev = lr_at(10, 100, 10, 3e-4);
    for (int s = 11; s <= 100; ++s) {
        const Real cur = lr_at(s, 100, 10, 3e-4);
        CHECK(cur <= prev);
        prev = cur;
    }
}

TEST_CASE("init_params roles and determinism") {
    ParamSpec spec = {
        {"lin", {8, 4}, ParamRole::linear_weight},
        {"b", {8}, ParamRole::bias},
        {"g", {32}, ParamRole::bn_gamma},
        {"bt", {32}, ParamRole::bn_beta},
        {"rm", {32}, ParamRole::bn_running_mean},
        {"rv", {32}, ParamRole::bn_running_var},
    };
    ModelParams a = init_params(spec, 99);
    ModelParams b = init_params(spec, 99);
    ModelParams c = init_params(spec, 100);

    CHECK(a.at("b").value() == std::vector<Real>(8, 0.0));
    CHECK(a.at("g").value() == std::vector<Real>(32, 1.0));
    CHECK(a.at("bt").value() == std::vector<Real>(32, 0.0));
    CHECK(a.at("rm").value() == std::vector<Real>(32, 0.0));
    CHECK(a.at("rv").value() == std::vector<Real>(32, 1.0));
    CHECK_FALSE(a.at("rm").requires_grad());
    CHECK_FALSE(a.at("rv").requires_grad());

    const Real bound = std::sqrt(6.0 / (8 + 4));
    bool any_nonzero = false;
    for (Real v : a.at("lin").value()) {
        CHECK(std::fabs(v) <= bound);
        any_nonzero = any_nonzero || v != 0.0;
    }
    CHECK(any_nonzero);
    CHECK(a.at("lin").value() == b.at("lin").value());   // same seed, bitwise
    CHECK(a.at("lin").value() != c.at("lin").value());   // different seed
    CHECK(a.trainable_count() == 8 * 4 + 8 + 64);
}
