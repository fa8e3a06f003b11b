#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <random>

#include "contcl/errors.hpp"
#include "contcl/grad_check.hpp"
#include "contcl/model.hpp"
#include "test_util.hpp"

using namespace contcl;

namespace {

EncoderState small_encoder(std::uint64_t seed = 3) {
    return EncoderState::init(/*vocab=*/11, /*embed_dim=*/4, /*hidden_dim=*/6,
                              /*rep_dim=*/5, seed);
}

Example make_example(int id, std::vector<int> tokens, int label = 0) {
    return Example{id, std::move(tokens), label};
}

}  // namespace

TEST_CASE("zero embedding table ignores tokens") {
    EncoderState enc = small_encoder();
    enc.embedding = Tensor::zeros(enc.embedding.shape());
    const Tensor za = encode(enc, make_example(0, {1, 2, 3}));
    const Tensor zb = encode(enc, make_example(1, {9, 9}));
    CHECK(za == zb);
    // z = w2 * tanh(b1) + b2 when the pooled embedding is zero.
    const Tensor expected = add(matmul(tanh(enc.b1), enc.w2), enc.b2);
    CHECK(za == expected);
}

TEST_CASE("mean pooling ignores repetition and order") {
    const EncoderState enc = small_encoder();
    CHECK(encode(enc, make_example(0, {4})) == encode(enc, make_example(1, {4, 4})));
    CHECK(encode(enc, make_example(2, {1, 5, 7})) == encode(enc, make_example(3, {7, 1, 5})));
}

TEST_CASE("encode is deterministic and validates input") {
    const EncoderState enc = small_encoder();
    CHECK(encode(enc, make_example(0, {1, 2})) == encode(enc, make_example(0, {1, 2})));
    CHECK_THROWS_AS(encode(enc, make_example(1, {})), input_error);
    CHECK_THROWS_AS(encode(enc, make_example(2, {11})), input_error);
    CHECK_THROWS_AS(encode(enc, make_example(3, {-1})), input_error);
}

TEST_CASE("logits contract") {
    ClassifierState cls = ClassifierState::empty(3);
    CHECK_THROWS_AS(logits(cls, Tensor::row({1, 2, 3})), shape_error);

    cls = expand_classifier(cls, {7}, 1);
    SUBCASE("single class always wins") {
        CHECK(predict(cls, Tensor::row({1, 2, 3})) == 7);
    }
    SUBCASE("zero weights give zero scores") {
        cls.weights = Tensor::zeros(cls.weights.shape());
        cls.bias = Tensor::zeros(cls.bias.shape());
        const Tensor s = logits(cls, Tensor::row({1, 2, 3}));
        CHECK(s[0] == 0.0);
    }
    SUBCASE("scores are linear in z") {
        cls = expand_classifier(cls, {8, 9}, 2);
        const Tensor z = Tensor::row({0.5, -1.5, 2.0});
        const Tensor s1 = sub(logits(cls, z), cls.bias);
        const Tensor s2 = sub(logits(cls, scalar_mul(z, 2.0)), cls.bias);
        for (std::size_t i = 0; i < s1.size(); ++i) {
            CHECK(s2[i] == doctest::Approx(2.0 * s1[i]).epsilon(1e-12));
        }
    }
}

TEST_CASE("expand_classifier preserves old columns bit-for-bit") {
    ClassifierState cls = ClassifierState::empty(4);
    cls = expand_classifier(cls, {0, 1, 2, 3}, 11);
    const Tensor before = cls.weights;
    const Tensor bias_before = cls.bias;

    const ClassifierState grown = expand_classifier(cls, {4, 5, 6, 7}, 12);
    for (std::size_t r = 0; r < 4; ++r) {
        for (std::size_t c = 0; c < 4; ++c) {
            CHECK(grown.weights(r, c) == before(r, c));
        }
    }
    for (std::size_t c = 0; c < 4; ++c) CHECK(grown.bias(0, c) == bias_before(0, c));
    CHECK(grown.class_order == std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7});

    SUBCASE("zero new ids is the identity") {
        const ClassifierState same = expand_classifier(cls, {}, 99);
        CHECK(same.weights == cls.weights);
        CHECK(same.class_order == cls.class_order);
    }
    SUBCASE("two-step expansion preserves old rows like one-step") {
        const ClassifierState two_step =
            expand_classifier(expand_classifier(cls, {4}, 5), {5}, 6);
        const ClassifierState one_step = expand_classifier(cls, {4, 5}, 7);
        for (std::size_t r = 0; r < 4; ++r) {
            for (std::size_t c = 0; c < 4; ++c) {
                CHECK(two_step.weights(r, c) == one_step.weights(r, c));
            }
        }
    }
    SUBCASE("duplicate ids are rejected") {
        CHECK_THROWS_AS(expand_classifier(cls, {2}, 1), input_error);
        CHECK_THROWS_AS(expand_classifier(cls, {9, 9}, 1), input_error);
    }
}

TEST_CASE("batched tape encode matches plain encode bit-for-bit") {
    const EncoderState enc = small_encoder();
    const Example e1 = make_example(0, {1, 2, 3});
    const Example e2 = make_example(1, {4, 4, 9, 10});
    Tape t;
    const EncoderNodes nodes = encoder_inputs(t, enc);
    const Value z = encode_nodes(t, nodes, {&e1, &e2}, enc.vocab());
    const Tensor z1 = encode(enc, e1);
    const Tensor z2 = encode(enc, e2);
    for (std::size_t c = 0; c < z1.size(); ++c) {
        CHECK(t.value(z)(0, c) == z1[c]);
        CHECK(t.value(z)(1, c) == z2[c]);
    }
}

TEST_CASE("cross-entropy through encode matches finite differences") {
    const EncoderState enc = small_encoder(17);
    ClassifierState cls = ClassifierState::empty(enc.rep_dim());
    cls = expand_classifier(cls, {0, 1, 2}, 5);
    const Example ex = make_example(0, {1, 5, 9}, 1);

    const GraphFn fn = [&](Tape& t, const std::vector<Value>& inputs) {
        // inputs: embedding, w1, b1, w2, b2, weights, bias
        const Tensor counts = token_mean_counts(ex, enc.vocab());
        Value e = t.matmul(t.constant(counts), inputs[0]);
        Value h = t.tanh(t.add(t.matmul(e, inputs[1]), inputs[2]));
        Value z = t.add(t.matmul(h, inputs[3]), inputs[4]);
        Value scores = t.add(t.matmul(z, inputs[5]), inputs[6]);
        return t.softmax_cross_entropy(scores, 1);
    };
    const double err = max_rel_grad_error(
        fn, {enc.embedding, enc.w1, enc.b1, enc.w2, enc.b2, cls.weights, cls.bias}, 1e-3);
    CHECK(err <= 1e-4);
}

TEST_CASE("checkpoint round-trips bit-exactly") {
    const EncoderState enc = small_encoder(23);
    ClassifierState cls = ClassifierState::empty(enc.rep_dim());
    cls = expand_classifier(cls, {3, 1, 4}, 9);

    const auto path = std::filesystem::temp_directory_path() / "contcl_test_ckpt.json";
    save_checkpoint(path, enc, cls);
    const auto [enc2, cls2] = load_checkpoint(path);
    CHECK(enc2.embedding == enc.embedding);
    CHECK(enc2.w1 == enc.w1);
    CHECK(enc2.b1 == enc.b1);
    CHECK(enc2.w2 == enc.w2);
    CHECK(enc2.b2 == enc.b2);
    CHECK(cls2.weights == cls.weights);
    CHECK(cls2.bias == cls.bias);
    CHECK(cls2.class_order == cls.class_order);
    std::filesystem::remove(path);
}
