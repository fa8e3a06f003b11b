#include <benchmark/benchmark.h>

#include <random>

#include "contcl/adversarial.hpp"
#include "contcl/contrastive.hpp"
#include "contcl/memory.hpp"
#include "contcl/model.hpp"
#include "contcl/tape.hpp"

using namespace contcl;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, 1.0);
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = dist(rng);
    return t;
}

Tensor random_unit_rows(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
    return row_l2_normalize(random_tensor({rows, cols}, rng));
}

std::vector<Example> random_examples(int count, int vocab, int tokens, int classes,
                                     std::mt19937_64& rng) {
    std::uniform_int_distribution<int> tok(0, vocab - 1);
    std::vector<Example> out;
    for (int i = 0; i < count; ++i) {
        Example e;
        e.id = i;
        e.label = i % classes;
        for (int t = 0; t < tokens; ++t) e.tokens.push_back(tok(rng));
        out.push_back(std::move(e));
    }
    return out;
}

void BM_MatmulForwardBackward(benchmark::State& state) {
    const std::size_t n = static_cast<std::size_t>(state.range(0));
    std::mt19937_64 rng(1);
    const Tensor a = random_tensor({n, n}, rng);
    const Tensor b = random_tensor({n, n}, rng);
    for (auto _ : state) {
        Tape t;
        Value va = t.input(a);
        Value vb = t.input(b);
        Value root = t.sum(t.matmul(va, vb));
        t.backward(root);
        benchmark::DoNotOptimize(t.grad(va));
    }
    state.SetItemsProcessed(state.iterations());
}

void BM_EncodeBatchStep(benchmark::State& state) {
    std::mt19937_64 rng(2);
    const EncoderState enc = EncoderState::init(200, 32, 64, 32, 3);
    ClassifierState cls = expand_classifier(ClassifierState::empty(32),
                                            {0, 1, 2, 3, 4, 5, 6, 7}, 4);
    const std::vector<Example> examples = random_examples(32, 200, 20, 8, rng);
    Batch batch;
    for (const Example& e : examples) batch.push_back(&e);
    std::vector<int> labels;
    for (const Example& e : examples) labels.push_back(cls.class_index(e.label));

    for (auto _ : state) {
        Tape t;
        const EncoderNodes en = encoder_inputs(t, enc);
        const ClassifierNodes cn = classifier_inputs(t, cls);
        Value z = encode_nodes(t, en, batch, enc.vocab());
        Value ce = t.mean(t.softmax_cross_entropy(logits_nodes(t, cn, z), labels));
        t.backward(ce);
        benchmark::DoNotOptimize(t.grad(en.embedding));
    }
    state.SetItemsProcessed(state.iterations());
}

void BM_LossFsBuildBackward(benchmark::State& state) {
    const std::size_t queue_len = static_cast<std::size_t>(state.range(0));
    std::mt19937_64 rng(4);
    const std::size_t b = 32, d = 32;
    const Tensor fast = random_unit_rows(b, d, rng);
    const Tensor slow = random_unit_rows(b, d, rng);
    std::vector<int> labels(b);
    for (std::size_t i = 0; i < b; ++i) labels[i] = static_cast<int>(i % 4);
    RepresentationQueue queue(queue_len);
    for (std::size_t i = 0; i < queue_len; ++i) {
        queue.push(random_unit_rows(1, d, rng).values(), static_cast<int>(i % 4));
    }
    const ContrastCandidates cands = fs_candidates(slow, labels, queue);

    for (auto _ : state) {
        Tape t;
        Value z = t.input(fast);
        const ContrastiveLoss fs = loss_fs(t, z, labels, cands, 0.05);
        t.backward(fs.loss);
        benchmark::DoNotOptimize(t.grad(z));
    }
    state.SetItemsProcessed(state.iterations());
}

void BM_AdvReplayLoss(benchmark::State& state) {
    std::mt19937_64 rng(5);
    const EncoderState enc = EncoderState::init(200, 32, 64, 32, 6);
    ClassifierState cls = expand_classifier(ClassifierState::empty(32),
                                            {0, 1, 2, 3, 4, 5, 6, 7}, 7);
    const std::vector<Example> examples = random_examples(32, 200, 20, 8, rng);
    Batch batch;
    for (const Example& e : examples) batch.push_back(&e);
    std::map<int, PastEntry> entries;
    for (int i = 0; i < 80; ++i) {
        entries[i] = PastEntry{random_unit_rows(1, 32, rng).values(), i % 8};
    }
    PastRepStore past;
    past.replace_all(std::move(entries), 0);
    const AdvConfig cfg;

    for (auto _ : state) {
        const ReplayLossResult res =
            adv_replay_loss(enc, cls, batch, past, ReplayObjectiveOpts{}, cfg);
        benchmark::DoNotOptimize(res.objective);
    }
    state.SetItemsProcessed(state.iterations());
}

void BM_KMeansSelect(benchmark::State& state) {
    std::mt19937_64 rng(7);
    const Tensor reps = random_tensor({100, 32}, rng);
    std::vector<int> ids(100);
    for (int i = 0; i < 100; ++i) ids[static_cast<std::size_t>(i)] = i;
    for (auto _ : state) {
        benchmark::DoNotOptimize(select_memory(ids, reps, 10, 11));
    }
    state.SetItemsProcessed(state.iterations());
}

}  // namespace

BENCHMARK(BM_MatmulForwardBackward)->Arg(32)->Arg(128);
BENCHMARK(BM_EncodeBatchStep);
BENCHMARK(BM_LossFsBuildBackward)->Arg(0)->Arg(512);
BENCHMARK(BM_AdvReplayLoss);
BENCHMARK(BM_KMeansSelect);

BENCHMARK_MAIN();
