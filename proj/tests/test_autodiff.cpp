#include <doctest.h>

#include <cmath>
#include <random>
#include <stdexcept>

#include "contcl/errors.hpp"
#include "contcl/grad_check.hpp"
#include "contcl/tape.hpp"
#include "contcl/tensor.hpp"
#include "test_util.hpp"

using namespace contcl;

TEST_CASE("matmul forward matches hand arithmetic") {
    Tape t;
    Value a = t.input(Tensor({2, 2}, {1, 2, 3, 4}));
    Value b = t.input(Tensor({2, 1}, {1, 1}));
    Value c = t.matmul(a, b);
    CHECK(t.value(c)[0] == 3.0);
    CHECK(t.value(c)[1] == 7.0);
}

TEST_CASE("row_l2_normalize on a 3-4-5 row") {
    Tape t;
    Value v = t.row_l2_normalize(t.input(Tensor::row({3, 4})));
    CHECK(t.value(v)[0] == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(t.value(v)[1] == doctest::Approx(0.8).epsilon(1e-12));
}

TEST_CASE("uniform softmax cross-entropy equals ln 3") {
    Tape t;
    Value ce = t.softmax_cross_entropy(t.input(Tensor::row({0, 0, 0})), 1);
    CHECK(t.scalar_value(ce) == doctest::Approx(std::log(3.0)).epsilon(1e-12));
}

TEST_CASE("backward of sum is all ones") {
    Tape t;
    Value x = t.input(Tensor({2, 2}, {1, -2, 3, 0.5}));
    t.backward(t.sum(x));
    for (std::size_t i = 0; i < 4; ++i) CHECK(t.grad(x)[i] == 1.0);
}

TEST_CASE("backward of dot(x,x) is 2x") {
    Tape t;
    Value x = t.input(Tensor({2}, {1, 2}));
    t.backward(t.dot(x, x));
    CHECK(t.grad(x)[0] == doctest::Approx(2.0));
    CHECK(t.grad(x)[1] == doctest::Approx(4.0));
}

TEST_CASE("tanh gradient at zero is one") {
    Tape t;
    Value x = t.input(Tensor::scalar(0.0));
    t.backward(t.sum(t.tanh(x)));
    CHECK(t.grad(x)[0] == 1.0);
}

TEST_CASE("relu subgradient at zero is zero") {
    Tape t;
    Value x = t.input(Tensor({3}, {-1.0, 0.0, 2.0}));
    t.backward(t.sum(t.relu(x)));
    CHECK(t.grad(x)[0] == 0.0);
    CHECK(t.grad(x)[1] == 0.0);
    CHECK(t.grad(x)[2] == 1.0);
}

TEST_CASE("fan-out accumulates additively") {
    Tape t;
    Value x = t.input(Tensor({2, 2}, {1, 2, 3, 4}));
    Value y = t.add(x, x);
    t.backward(t.sum(y));
    for (std::size_t i = 0; i < 4; ++i) CHECK(t.grad(x)[i] == 2.0);
}

TEST_CASE("grad_check passes for every op kind") {
    std::mt19937_64 rng(42);
    for (OpKind kind : testutil::all_checked_ops()) {
        for (int trial = 0; trial < 10; ++trial) {
            const testutil::OpCase c = testutil::random_op_case(kind, rng);
            const double err = grad_check(kind, c.point, 1e-3, c.attr);
            INFO("op ", op_name(kind), " trial ", trial);
            CHECK(err <= 1e-4);
        }
    }
}

TEST_CASE("grad_check is tight for exp at zero") {
    const double err = grad_check(OpKind::Exp, {Tensor::scalar(0.0)}, 1e-3);
    CHECK(err <= 1e-6);
}

TEST_CASE("single-row softmax cross-entropy gradient checks") {
    std::mt19937_64 rng(7);
    OpAttr attr;
    attr.labels = {2};
    const double err =
        grad_check(OpKind::SoftmaxCrossEntropy, {testutil::rand_tensor({1, 5}, rng)}, 1e-3, attr);
    CHECK(err <= 1e-4);
}

TEST_CASE("identical tape construction is bit-identical") {
    auto build = [](Tape& t) {
        Value a = t.input(Tensor({2, 3}, {0.5, -1, 2, 3, -0.25, 1}));
        Value b = t.input(Tensor({3, 2}, {1, 2, 3, 4, 5, 6}));
        Value z = t.tanh(t.matmul(a, b));
        Value root = t.mean(z);
        t.backward(root);
        return std::pair{a, root};
    };
    Tape t1, t2;
    auto [a1, r1] = build(t1);
    auto [a2, r2] = build(t2);
    CHECK(t1.value(r1) == t2.value(r2));
    CHECK(t1.grad(a1) == t2.grad(a2));
}

TEST_CASE("constant leaves receive no gradient") {
    Tape t;
    Value x = t.input(Tensor({2}, {1, 2}));
    Value c = t.constant(Tensor({2}, {3, 4}));
    t.backward(t.dot(x, c));
    CHECK(t.grad(c)[0] == 0.0);
    CHECK(t.grad(c)[1] == 0.0);
    CHECK(t.grad(x)[0] == 3.0);
}

TEST_CASE("contract violations throw") {
    Tape t;
    Value a = t.input(Tensor({2, 2}, {1, 2, 3, 4}));
    Value b = t.input(Tensor({3}, {1, 2, 3}));
    CHECK_THROWS_AS(t.add(a, b), shape_error);
    CHECK_THROWS_AS(t.matmul(b, b), shape_error);
    CHECK_THROWS_AS(t.backward(a), shape_error);  // non-scalar root
}

TEST_CASE("domain errors on log and zero-row normalize") {
    Tape t;
    CHECK_THROWS_AS(t.log(t.input(Tensor({2}, {1.0, -1.0}))), std::domain_error);
    CHECK_THROWS_AS(t.row_l2_normalize(t.input(Tensor({1, 2}, {0.0, 0.0}))),
                    std::domain_error);
}

TEST_CASE("non-finite results are an error state") {
    Tape t;
    CHECK_THROWS_AS(t.exp(t.input(Tensor::scalar(1000.0))), numeric_error);
}

TEST_CASE("generic apply dispatch matches typed wrappers") {
    Tape t;
    Value a = t.input(Tensor({2, 2}, {1, 2, 3, 4}));
    Value via_apply = t.apply(OpKind::Tanh, {a});
    Value typed = t.tanh(a);
    CHECK(t.value(via_apply) == t.value(typed));
}
