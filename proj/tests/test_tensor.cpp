#include <doctest.h>

#include <cmath>

#include "gd/ops.hpp"
#include "test_helpers.hpp"

using namespace gd;

TEST_CASE("relu, sigmoid, l1_row_normalize basics") {
    Tensor r = relu(Tensor::from_data({3}, {-1, 0, 2}));
    CHECK(r.value() == std::vector<Real>{0, 0, 2});

    CHECK(sigmoid(Tensor::scalar(0.0)).item() == doctest::Approx(0.5).epsilon(1e-15));

    Tensor n = l1_row_normalize(Tensor::from_data({2, 2}, {2, 2, 0, 0}));
    CHECK(n.value() == std::vector<Real>{0.5, 0.5, 0, 0});
}

TEST_CASE("backward of sum of squares") {
    Tensor x = Tensor::from_data({2}, {1, 2}, true);
    backward(sum_all(mul(x, x)));
    CHECK(x.grad() == std::vector<Real>{2, 4});
}

TEST_CASE("backward through sigmoid scale") {
    Tensor w = Tensor::scalar(0.0, true);
    Tensor loss = mul(sigmoid(w), Tensor::scalar(3.0));
    backward(loss);
    CHECK(w.grad()[0] == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("backward rejects non-scalar loss and repeated runs") {
    Tensor x = Tensor::from_data({2}, {1, 2}, true);
    CHECK_THROWS_AS(backward(mul(x, x)), std::invalid_argument);
    Tensor loss = sum_all(mul(x, x));
    backward(loss);
    CHECK_THROWS_AS(backward(loss), std::runtime_error);
}

TEST_CASE("gradients accumulate across separate losses until cleared") {
    Tensor x = Tensor::from_data({2}, {1, 2}, true);
    backward(sum_all(x));
    backward(sum_all(x));
    CHECK(x.grad() == std::vector<Real>{2, 2});
    x.zero_grad();
    backward(sum_all(x));
    CHECK(x.grad() == std::vector<Real>{1, 1});
}

TEST_CASE("shape errors report both shapes") {
    Tensor a = Tensor::zeros({2, 3});
    Tensor b = Tensor::zeros({4});
    CHECK_THROWS_WITH_AS(add(a, b), doctest::Contains("[2,3]"), std::invalid_argument);
    CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("[4]"), std::invalid_argument);
}

TEST_CASE("trailing-suffix broadcast add and mul") {
    Tensor x = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6}, true);
    Tensor b = Tensor::from_data({3}, {10, 20, 30}, true);
    Tensor y = add(x, b);
    CHECK(y.value() == std::vector<Real>{11, 22, 33, 14, 25, 36});
    backward(sum_all(y));
    CHECK(b.grad() == std::vector<Real>{2, 2, 2});

    Tensor s = mul(Tensor::from_data({2}, {3, 4}, true), Tensor::scalar(2.0));
    CHECK(s.value() == std::vector<Real>{6, 8});
}

TEST_CASE("concat, slice, transpose, sum agree with hand values") {
    Tensor a = Tensor::from_data({2, 2}, {1, 2, 3, 4});
    Tensor b = Tensor::from_data({2, 1}, {5, 6});
    Tensor c = concat({a, b}, 1);
    CHECK(c.value() == std::vector<Real>{1, 2, 5, 3, 4, 6});

    Tensor s = slice(c, 1, 1, 3);
    CHECK(s.value() == std::vector<Real>{2, 5, 4, 6});

    Tensor t = transpose(a);
    CHECK(t.value() == std::vector<Real>{1, 3, 2, 4});

    CHECK(sum(a, 0).value() == std::vector<Real>{4, 6});
    CHECK(sum(a, 1).value() == std::vector<Real>{3, 7});
}

TEST_CASE("matmul matches hand result") {
    Tensor a = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor b = Tensor::from_data({3, 2}, {7, 8, 9, 10, 11, 12});
    CHECK(matmul(a, b).value() == std::vector<Real>{58, 64, 139, 154});
    Tensor bias = Tensor::from_data({2}, {1, -1});
    CHECK(linear(a, b, bias).value() == std::vector<Real>{59, 63, 140, 153});
}

TEST_CASE("l1_row_normalize is invariant to positive row scaling") {
    Rng rng(3);
    for (int rep = 0; rep < 100; ++rep) {
        Tensor x = gdt::random_tensor({4, 5}, rng, false, 0.01, 2.0);
        std::vector<Real> scaled = x.value();
        std::vector<Real> row_scale(4);
        for (auto& c : row_scale) c = rng.uniform(0.1, 10.0);
        for (int r = 0; r < 4; ++r)
            for (int j = 0; j < 5; ++j) scaled[static_cast<size_t>(r) * 5 + j] *= row_scale[r];
        Tensor y1 = l1_row_normalize(x);
        Tensor y2 = l1_row_normalize(Tensor::from_data({4, 5}, scaled));
        CHECK(gdt::max_abs_diff(y1.value(), y2.value()) < 1e-12);
        for (int r = 0; r < 4; ++r) {
            Real sum = 0.0;
            for (int j = 0; j < 5; ++j) sum += y1.value()[static_cast<size_t>(r) * 5 + j];
            CHECK(std::fabs(sum - 1.0) < 1e-12);
        }
    }
}

TEST_CASE("exp + l1_row_normalize equals stabilized softmax") {
    Rng rng(9);
    for (int rep = 0; rep < 100; ++rep) {
        Tensor x = gdt::random_tensor({3, 6}, rng, false, -30.0, 30.0);
        Tensor plain = l1_row_normalize(exp(x));
        Tensor stab = l1_row_normalize(exp(sub_row_max(x)));
        CHECK(gdt::max_abs_diff(plain.value(), stab.value()) < 1e-12);
    }
}

TEST_CASE("gated_softmax equals the composed chain") {
    Rng rng(13);
    for (int rep = 0; rep < 100; ++rep) {
        Tensor c = gdt::random_tensor({5, 5}, rng, false, -5.0, 5.0);
        Tensor p = gdt::random_tensor({5, 5}, rng, false, -4.0, 4.0);
        std::vector<Real> mv(25);
        for (auto& v : mv) v = rng.next_double() < 0.7 ? 1.0 : 0.0;
        for (int i = 0; i < 5; ++i) mv[static_cast<size_t>(i) * 5 + i] = 1.0;
        Tensor m = Tensor::from_data({5, 5}, mv);

        Tensor fused = gated_softmax(c, &p, &m);
        Tensor composed = l1_row_normalize(mul(mul(exp(sub_row_max(c)), sigmoid(p)), m));
        CHECK(gdt::max_abs_diff(fused.value(), composed.value()) < 1e-14);
        for (int i = 0; i < 25; ++i)
            if (mv[i] == 0.0) CHECK(fused.value()[i] == 0.0);
    }
}

TEST_CASE("gated_softmax is invariant to per-row content shifts") {
    Rng rng(17);
    Tensor c = gdt::random_tensor({4, 6}, rng, false, -3.0, 3.0);
    Tensor p = gdt::random_tensor({4, 6}, rng, false, -3.0, 3.0);
    std::vector<Real> shifted = c.value();
    for (int r = 0; r < 4; ++r) {
        const Real delta = rng.uniform(-50.0, 50.0);
        for (int j = 0; j < 6; ++j) shifted[static_cast<size_t>(r) * 6 + j] += delta;
    }
    Tensor a1 = gated_softmax(c, &p, nullptr);
    Tensor a2 = gated_softmax(Tensor::from_data({4, 6}, shifted), &p, nullptr);
    CHECK(gdt::max_abs_diff(a1.value(), a2.value()) < 1e-12);
}

TEST_CASE("batch_norm eval mode applies the running affine") {
    Tensor x = Tensor::from_data({2, 2}, {1, 2, 3, 4});
    Tensor gamma = Tensor::from_data({2}, {2, 1});
    Tensor beta = Tensor::from_data({2}, {0, 10});
    Tensor rm = Tensor::from_data({2}, {1, 1});
    Tensor rv = Tensor::from_data({2}, {4, 1});
    Tensor y = batch_norm(x, gamma, beta, rm, rv, false, 0.1, 0.0);
    CHECK(y.value()[0] == doctest::Approx(0.0));
    CHECK(y.value()[2] == doctest::Approx(2.0));     // (3-1)/2*2
    CHECK(y.value()[1] == doctest::Approx(11.0));    // (2-1)/1+10
}

TEST_CASE("batch_norm training normalizes each channel and updates running stats") {
    Tensor x = Tensor::from_data({4, 1}, {1, 2, 3, 4});
    Tensor gamma = Tensor::from_data({1}, {1});
    Tensor beta = Tensor::from_data({1}, {0});
    Tensor rm = Tensor::zeros({1});
    Tensor rv = Tensor::from_data({1}, {1});
    Tensor y = batch_norm(x, gamma, beta, rm, rv, true, 0.1, 0.0);
    Real mean = 0.0, var = 0.0;
    for (Real v : y.value()) mean += v / 4;
    for (Real v : y.value()) var += v * v / 4;
    CHECK(std::fabs(mean) < 1e-12);
    CHECK(var == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(rm.value()[0] == doctest::Approx(0.25));          // 0.9*0 + 0.1*2.5
    CHECK(rv.value()[0] == doctest::Approx(0.9 + 0.125));   // 0.9*1 + 0.1*1.25
}

TEST_CASE("dropout identity cases and train scaling") {
    Rng rng(7);
    Tensor x = gdt::random_tensor({10, 10}, rng);
    Tensor same_eval = dropout(x, 0.5, false, rng);
    CHECK(same_eval.node_id() == x.node_id());
    Tensor same_p0 = dropout(x, 0.0, true, rng);
    CHECK(same_p0.node_id() == x.node_id());

    Tensor y = dropout(x, 0.25, true, rng);
    int kept = 0;
    for (int i = 0; i < 100; ++i) {
        const Real v = y.value()[i];
        const Real expect = x.value()[i] / 0.75;
        CHECK((v == 0.0 || v == doctest::Approx(expect).epsilon(1e-15)));
        kept += v != 0.0;
    }
    CHECK(kept > 50);
    CHECK(kept < 95);
    CHECK_THROWS_AS(dropout(x, 1.0, true, rng), std::invalid_argument);
}

TEST_CASE("cross_entropy of uniform logits is log K") {
    Tensor logits = Tensor::zeros({1, 2});
    CHECK(cross_entropy(logits, {0}).item() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK_THROWS_AS(cross_entropy(logits, {2}), std::invalid_argument);
    CHECK_THROWS_AS(cross_entropy(logits, {0, 1}), std::invalid_argument);
}

TEST_CASE("gather_rows, stack_last, take_diag_slots, spmm, segment normalize") {
    Tensor x = Tensor::from_data({3, 2}, {1, 2, 3, 4, 5, 6});
    CHECK(gather_rows(x, {2, 0}).value() == std::vector<Real>{5, 6, 1, 2});

    Tensor a = Tensor::from_data({2, 2}, {1, 2, 3, 4});
    Tensor b = Tensor::from_data({2, 2}, {5, 6, 7, 8});
    Tensor st = stack_last({a, b});
    CHECK(st.shape() == Shape{2, 2, 2});
    CHECK(st.value() == std::vector<Real>{1, 5, 2, 6, 3, 7, 4, 8});
    CHECK(take_diag_slots(st).value() == std::vector<Real>{1, 5, 4, 8});

    auto pattern = std::make_shared<SparseRowMatrix>(build_csr({{0, 1}, {1, 0}}, 2, false));
    Tensor vals = Tensor::from_data({2}, {0.5, 2.0});
    Tensor dense = Tensor::from_data({2, 2}, {1, 0, 0, 1});
    CHECK(spmm(pattern, vals, dense).value() == std::vector<Real>{0, 0.5, 2, 0});

    Tensor seg = segment_l1_normalize(Tensor::from_data({4}, {1, 3, 0, 0}), {0, 2, 4});
    CHECK(seg.value() == std::vector<Real>{0.25, 0.75, 0, 0});
}
