// Acceptance suite: one self-contained check per criterion, one PASS/FAIL
// line each. Criteria 6-9 share a matrix of end-to-end runs on the default
// synthetic benchmark. Run with a list of criterion numbers to filter, e.g.
//   contcl_acceptance 1 2 5
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "contcl/adversarial.hpp"
#include "contcl/contrastive.hpp"
#include "contcl/grad_check.hpp"
#include "contcl/memory.hpp"
#include "contcl/mi.hpp"
#include "contcl/rng.hpp"
#include "contcl/runner.hpp"
#include "test_util.hpp"

using namespace contcl;
namespace fs = std::filesystem;

namespace {

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct CheckContext {
    std::ostringstream log;
    bool ok = true;

    void expect(bool cond, const std::string& what) {
        if (!cond) {
            ok = false;
            log << "    FAILED: " << what << "\n";
        }
    }
    void note(const std::string& what) { log << "    " << what << "\n"; }
};

// ---------------------------------------------------------------------------
// Shared end-to-end run matrix (criteria 6-9).
// ---------------------------------------------------------------------------

constexpr std::uint64_t kBenchmarkDataSeed = 93;
constexpr std::uint64_t kBenchmarkSplitSeed = 17;
constexpr int kNumSeeds = 5;

struct VariantRuns {
    std::vector<double> final_acc;      // per seed
    std::vector<double> analogous_drop; // per seed
    std::vector<double> mi_rep_label;   // per seed (raw DV estimate)
    std::vector<double> wall_seconds;
};

struct RunMatrix {
    std::map<std::string, VariantRuns> by_variant;
    bool ready = false;
};

TrainConfig benchmark_config(std::uint64_t seed, const std::string& variant) {
    TrainConfig cfg;
    cfg.seed = seed;
    if (variant == "replay-only") {
        cfg.flags.replay_only = true;
    } else if (variant == "finetune-only") {
        cfg.flags.finetune_only = true;
    } else if (variant == "no-fs") {
        cfg.flags.no_fs = true;
    } else if (variant == "no-cp") {
        cfg.flags.no_cp = true;
    } else if (variant == "no-adv") {
        cfg.flags.no_adv = true;
    }
    return cfg;
}

const RunMatrix& run_matrix() {
    static RunMatrix matrix = [] {
        RunMatrix m;
        const SyntheticSpec spec = [] {
            SyntheticSpec s;  // the default desk benchmark
            s.seed = kBenchmarkDataSeed;
            return s;
        }();
        const Dataset dataset = generate_synthetic(spec);
        std::vector<int> classes(static_cast<std::size_t>(spec.classes));
        for (int i = 0; i < spec.classes; ++i) classes[static_cast<std::size_t>(i)] = i;
        const TaskSequence seq =
            split_tasks(classes, 10, kBenchmarkSplitSeed, dataset.meta.analogous_pairs);

        const std::vector<std::string> variants{"full",  "replay-only", "finetune-only",
                                                "no-fs", "no-cp",       "no-adv"};
        MineOptions mi_opts;
        mi_opts.epochs = 120;
        mi_opts.batch = 256;
        mi_opts.lr = 0.1;

        for (const std::string& variant : variants) {
            VariantRuns runs;
            for (int seed = 1; seed <= kNumSeeds; ++seed) {
                const TrainConfig cfg =
                    benchmark_config(static_cast<std::uint64_t>(seed), variant);
                const RunResult res = run_sequence(dataset, seq, cfg);
                runs.final_acc.push_back(res.report.final_acc());
                runs.analogous_drop.push_back(res.report.analogous.mean_drop);
                runs.wall_seconds.push_back(res.report.wall_seconds);
                if (variant == "full" || variant == "replay-only") {
                    std::vector<const Example*> final_test;
                    for (const Example& e : dataset.test) final_test.push_back(&e);
                    const MiEstimate mi = measure_representation_mi(
                        res.state.fast, final_test, MiMode::RepresentationLabel, mi_opts,
                        mix_seed(1000, "acceptance-mi", static_cast<std::uint64_t>(seed)));
                    runs.mi_rep_label.push_back(mi.raw);
                }
                std::cout << "  [matrix] " << variant << " seed " << seed << ": acc="
                          << format_double(res.report.final_acc())
                          << " drop=" << format_double(res.report.analogous.mean_drop)
                          << " (" << format_double(res.report.wall_seconds) << "s)"
                          << std::endl;
            }
            m.by_variant[variant] = std::move(runs);
        }
        m.ready = true;
        return m;
    }();
    return matrix;
}

double mean_of(const std::vector<double>& xs) {
    double acc = 0.0;
    for (double x : xs) acc += x;
    return xs.empty() ? 0.0 : acc / static_cast<double>(xs.size());
}

// ---------------------------------------------------------------------------
// Criteria
// ---------------------------------------------------------------------------

void criterion_1(CheckContext& c) {
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(101);
    double worst = 0.0;
    for (OpKind kind : testutil::all_checked_ops()) {
        double op_worst = 0.0;
        for (int trial = 0; trial < 100; ++trial) {
            const testutil::OpCase oc = testutil::random_op_case(kind, rng);
            op_worst = std::max(op_worst, grad_check(kind, oc.point, 1e-3, oc.attr));
        }
        c.expect(op_worst <= 1e-4, std::string(op_name(kind)) + " max rel error " +
                                       format_double(op_worst));
        worst = std::max(worst, op_worst);
    }
    const double elapsed = seconds_since(t0);
    c.note("worst relative error " + format_double(worst) + ", " +
           format_double(elapsed) + "s");
    c.expect(elapsed < 30.0, "runtime under 30s");
}

void criterion_2(CheckContext& c) {
    {
        Tape t;
        const Tensor batch({2, 2}, {1, 0, 1, 0});
        Value z = t.input(batch);
        RepresentationQueue queue(8);
        const ContrastCandidates cands = fs_candidates(batch, {5, 5}, queue);
        const ContrastiveLoss fs = loss_fs(t, z, {5, 5}, cands, 0.05);
        const double err = std::fabs(t.scalar_value(fs.loss) - 2.0 * std::log(2.0));
        c.expect(err <= 1e-9, "uniform-similarity loss_fs = 2 ln 2 (err " +
                                  format_double(err) + ")");
    }
    std::mt19937_64 rng(202);
    std::uniform_int_distribution<int> label(0, 3);
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t b = 1 + trial % 6, d = 8;
        const Tensor batch = testutil::rand_unit_rows(b, d, rng);
        std::vector<int> labels(b);
        for (auto& l : labels) l = label(rng);

        if (trial % 2 == 0) {
            RepresentationQueue queue(16);
            const std::size_t extra = trial % 9;
            for (std::size_t i = 0; i < extra; ++i) {
                queue.push(testutil::rand_unit_rows(1, d, rng).values(), label(rng));
            }
            const ContrastCandidates cands = fs_candidates(batch, labels, queue);
            Tape t;
            Value z = t.input(batch);
            const ContrastiveLoss fs = loss_fs(t, z, labels, cands, 0.05);
            worst = std::max(worst,
                             std::fabs(t.scalar_value(fs.loss) -
                                       testutil::oracle_infonce(batch, labels, cands.reps_t,
                                                                cands.labels, 0.05)));
        } else {
            std::map<int, PastEntry> entries;
            const std::size_t m = 2 + trial % 7;
            for (std::size_t i = 0; i < m; ++i) {
                entries[static_cast<int>(i)] =
                    PastEntry{testutil::rand_unit_rows(1, d, rng).values(), label(rng)};
            }
            PastRepStore store;
            store.replace_all(std::move(entries), 0);
            Tape t;
            Value z = t.input(batch);
            const ContrastiveLoss cp = loss_cp(t, z, labels, store, 0.05);
            const ContrastCandidates cands = cp_candidates(store);
            worst = std::max(worst,
                             std::fabs(t.scalar_value(cp.loss) -
                                       testutil::oracle_infonce(batch, labels, cands.reps_t,
                                                                cands.labels, 0.05)));
        }
    }
    c.note("worst |loss - oracle| over 1000 inputs: " + format_double(worst));
    c.expect(worst <= 1e-10, "loss_fs/loss_cp match the direct-formula oracle to 1e-10");
}

void criterion_3(CheckContext& c) {
    EncoderState slow = EncoderState::init(13, 6, 8, 5, 1);
    const EncoderState fast = EncoderState::init(13, 6, 8, 5, 2);
    const double initial = encoder_distance(slow, fast);
    const double eta = 0.99;
    const int n = 300;
    for (int i = 0; i < n; ++i) momentum_update(slow, fast, eta);
    const double expected = std::pow(eta, n) * initial;
    const double rel = std::fabs(encoder_distance(slow, fast) - expected) / expected;
    c.note("relative momentum error after " + std::to_string(n) + " updates: " +
           format_double(rel));
    c.expect(rel <= 1e-9, "||theta' - theta|| shrinks by eta^n within 1e-9");

    RepresentationQueue queue(512);
    std::mt19937_64 rng(303);
    std::uniform_int_distribution<int> label(0, 9);
    std::vector<int> pushed;
    bool fifo_ok = true;
    for (int i = 0; i < 10000; ++i) {
        const int l = label(rng);
        pushed.push_back(l);
        queue.push({static_cast<double>(i)}, l);
        if (queue.size() > queue.capacity()) fifo_ok = false;
        if (i % 1017 == 0) {
            const std::size_t expect_first = pushed.size() > 512 ? pushed.size() - 512 : 0;
            std::size_t j = expect_first;
            for (const QueueEntry& e : queue.entries()) {
                if (e.rep[0] != static_cast<double>(j) || e.label != pushed[j]) {
                    fifo_ok = false;
                    break;
                }
                ++j;
            }
        }
    }
    const std::size_t first = pushed.size() - 512;
    std::size_t j = first;
    for (const QueueEntry& e : queue.entries()) {
        if (e.rep[0] != static_cast<double>(j)) fifo_ok = false;
        ++j;
    }
    c.expect(fifo_ok, "strict FIFO eviction under 10k randomized insertions");
}

void criterion_4(CheckContext& c) {
    std::mt19937_64 rng(404);
    std::uniform_real_distribution<double> eps_dist(1e-3, 2.0);
    bool ball_ok = true;
    for (int trial = 0; trial < 10000; ++trial) {
        const double eps = eps_dist(rng);
        const Tensor d = testutil::rand_tensor({5, 4}, rng, -4.0, 4.0);
        if (frobenius_norm(project(d, eps)) > eps) ball_ok = false;
    }
    c.expect(ball_ok, "||delta|| <= eps after every projection (10k trials)");

    // K=1 gradients equal the plain pass bit-for-bit.
    {
        const EncoderState enc = EncoderState::init(17, 6, 10, 8, 11);
        ClassifierState cls = expand_classifier(ClassifierState::empty(8), {0, 1, 2, 3}, 12);
        std::vector<Example> examples;
        std::uniform_int_distribution<int> tok(0, 16);
        for (int i = 0; i < 8; ++i) {
            Example e;
            e.id = i;
            e.label = i % 4;
            for (int t = 0; t < 6; ++t) e.tokens.push_back(tok(rng));
            examples.push_back(std::move(e));
        }
        Batch batch;
        for (const Example& e : examples) batch.push_back(&e);
        std::map<int, PastEntry> entries;
        for (int i = 0; i < 8; ++i) {
            entries[i] = PastEntry{testutil::rand_unit_rows(1, 8, rng).values(), i % 4};
        }
        PastRepStore past;
        past.replace_all(std::move(entries), 0);

        AdvConfig k1;
        k1.steps = 1;
        const ReplayLossResult adv =
            adv_replay_loss(enc, cls, batch, past, ReplayObjectiveOpts{}, k1);
        const ReplayLossResult plain =
            plain_replay_loss(enc, cls, batch, past, ReplayObjectiveOpts{});
        const bool bitwise =
            adv.objective == plain.objective && adv.grads.embedding == plain.grads.embedding &&
            adv.grads.w1 == plain.grads.w1 && adv.grads.b1 == plain.grads.b1 &&
            adv.grads.w2 == plain.grads.w2 && adv.grads.b2 == plain.grads.b2 &&
            adv.grads.weights == plain.grads.weights && adv.grads.bias == plain.grads.bias;
        c.expect(bitwise, "K=1 adv_replay_loss equals plain L2 bit-for-bit");
    }

    // Ascent: on random fixed models, the second inner loss dominates the first.
    int ascents = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const EncoderState enc =
            EncoderState::init(11, 4, 6, 5, 1000 + static_cast<std::uint64_t>(trial));
        ClassifierState cls = expand_classifier(ClassifierState::empty(5), {0, 1, 2},
                                                2000 + static_cast<std::uint64_t>(trial));
        std::vector<Example> examples;
        std::uniform_int_distribution<int> tok(0, 10);
        for (int i = 0; i < 4; ++i) {
            Example e;
            e.id = i;
            e.label = i % 3;
            for (int t = 0; t < 5; ++t) e.tokens.push_back(tok(rng));
            examples.push_back(std::move(e));
        }
        Batch batch;
        for (const Example& e : examples) batch.push_back(&e);
        PastRepStore empty_past;
        ReplayObjectiveOpts opts;
        opts.use_cp = false;
        AdvConfig cfg;  // K=2, eps=0.3, alpha=0.1
        const ReplayLossResult res = adv_replay_loss(enc, cls, batch, empty_past, opts, cfg);
        if (res.step_losses[1] >= res.step_losses[0]) ++ascents;
    }
    c.note("ascent in " + std::to_string(ascents) + "/100 trials");
    c.expect(ascents >= 90, "step-2 inner loss >= step-1 inner loss in >= 90 trials");
}

void criterion_5(CheckContext& c) {
    MineOptions opts;
    opts.epochs = 200;
    opts.batch = 256;
    opts.lr = 0.1;
    struct Case {
        double rho;
        double truth;
        double tolerance;
    };
    const std::vector<Case> cases{{0.9, 0.8303483, 0.15}, {0.5, 0.1438410, 0.15},
                                  {0.0, 0.0, 0.1}};
    for (const Case& cs : cases) {
        const auto t0 = std::chrono::steady_clock::now();
        std::mt19937_64 rng(505 + static_cast<std::uint64_t>(cs.rho * 100));
        const MiSamples samples = testutil::gaussian_pair_samples(4000, cs.rho, rng);
        const MiEstimate est = mine_estimate(samples, opts, 1);
        const double elapsed = seconds_since(t0);
        c.note("rho=" + format_double(cs.rho) + ": estimate " + format_double(est.raw) +
               " vs " + format_double(cs.truth) + " (" + format_double(elapsed) + "s)");
        c.expect(std::fabs(est.raw - cs.truth) <= cs.tolerance,
                 "estimate within " + format_double(cs.tolerance) + " nats");
        c.expect(elapsed < 60.0, "runtime under 1 min");
    }
}

void criterion_6(CheckContext& c) {
    const RunMatrix& m = run_matrix();
    const VariantRuns& full = m.by_variant.at("full");
    const VariantRuns& replay = m.by_variant.at("replay-only");
    const VariantRuns& finetune = m.by_variant.at("finetune-only");

    int beats_replay = 0, beats_finetune = 0;
    for (int s = 0; s < kNumSeeds; ++s) {
        if (full.final_acc[s] - replay.final_acc[s] >= 0.02) ++beats_replay;
        if (full.final_acc[s] - finetune.final_acc[s] >= 0.15) ++beats_finetune;
        c.note("seed " + std::to_string(s + 1) + ": full " +
               format_double(full.final_acc[s]) + ", replay-only " +
               format_double(replay.final_acc[s]) + ", finetune-only " +
               format_double(finetune.final_acc[s]));
    }
    c.expect(beats_replay >= 4, "full - replay-only >= 2 points in >= 4/5 seeds (got " +
                                    std::to_string(beats_replay) + ")");
    c.expect(beats_finetune == 5, "full - finetune-only >= 15 points in 5/5 seeds (got " +
                                      std::to_string(beats_finetune) + ")");
    double max_seconds = 0.0;
    for (const auto& [variant, runs] : m.by_variant) {
        for (double s : runs.wall_seconds) max_seconds = std::max(max_seconds, s);
    }
    c.note("slowest run " + format_double(max_seconds) + "s");
    c.expect(max_seconds < 600.0, "every run under 10 min");
}

void criterion_7(CheckContext& c) {
    const RunMatrix& m = run_matrix();
    const VariantRuns& full = m.by_variant.at("full");
    const VariantRuns& no_fs = m.by_variant.at("no-fs");
    int reduced = 0;
    for (int s = 0; s < kNumSeeds; ++s) {
        if (no_fs.final_acc[s] < full.final_acc[s]) ++reduced;
    }
    c.note("no-fs below full in " + std::to_string(reduced) + "/5 seeds");
    c.expect(reduced >= 3, "removing fast-slow contrast hurts in >= 3/5 seeds");

    const double full_mean = mean_of(full.final_acc);
    for (const char* variant : {"no-fs", "no-cp", "no-adv"}) {
        const double v_mean = mean_of(m.by_variant.at(variant).final_acc);
        c.note(std::string(variant) + " mean " + format_double(v_mean) + " vs full " +
               format_double(full_mean));
        c.expect(v_mean <= full_mean,
                 std::string(variant) + " seed-mean <= full seed-mean");
    }
}

void criterion_8(CheckContext& c) {
    const RunMatrix& m = run_matrix();
    const double full_drop = mean_of(m.by_variant.at("full").analogous_drop);
    const double replay_drop = mean_of(m.by_variant.at("replay-only").analogous_drop);
    c.note("analogous-class drop: full " + format_double(full_drop) + ", replay-only " +
           format_double(replay_drop));
    c.expect(full_drop <= replay_drop,
             "full InfoCL-style drop <= replay-only drop on seed-mean");
}

void criterion_9(CheckContext& c) {
    const RunMatrix& m = run_matrix();
    const VariantRuns& full = m.by_variant.at("full");
    const VariantRuns& replay = m.by_variant.at("replay-only");
    int higher = 0;
    for (int s = 0; s < kNumSeeds; ++s) {
        c.note("seed " + std::to_string(s + 1) + ": I(Z;Y) full " +
               format_double(full.mi_rep_label[s]) + ", replay-only " +
               format_double(replay.mi_rep_label[s]));
        if (full.mi_rep_label[s] > replay.mi_rep_label[s]) ++higher;
    }
    c.expect(higher >= 3, "final I(Z;Y) higher for full in >= 3/5 seeds (got " +
                              std::to_string(higher) + ")");
}

void criterion_10(CheckContext& c) {
    const fs::path dir = fs::temp_directory_path() / "contcl_acceptance_c10";
    fs::remove_all(dir);
    fs::create_directories(dir);
    auto str = [&dir](const std::string& name) { return (dir / name).string(); };

    std::ofstream(dir / "spec.json")
        << R"({"classes": 8, "analogous_pair_count": 2, "vocab": 80,
               "tokens_per_example": 12, "shared_fraction": 0.85,
               "train_per_class": 30, "test_per_class": 12, "seed": 5})";
    using contcl::cli::dispatch;
    c.expect(dispatch({"gen-data", "--spec", str("spec.json"), "--out",
                       str("corpus.jsonl")}) == 0,
             "gen-data succeeds");
    c.expect(dispatch({"split", "--meta", str("corpus.meta.json"), "--k", "4", "--seed",
                       "3", "--out", str("split.json")}) == 0,
             "split succeeds");
    c.expect(dispatch({"train", "--corpus", str("corpus.jsonl"), "--split",
                       str("split.json"), "--out", str("run"), "--seed", "11",
                       "--epochs-new", "4", "--epochs-replay", "4", "--budget", "5",
                       "--batch", "16"}) == 0,
             "train succeeds");
    c.expect(dispatch({"train", "--from-manifest", str("run/manifest.json"), "--out",
                       str("rerun")}) == 0,
             "re-run from manifest succeeds");

    auto slurp = [](const fs::path& p) {
        std::ifstream in(p);
        std::stringstream ss;
        ss << in.rdbuf();
        return ss.str();
    };
    const std::string a = slurp(dir / "run" / "metrics.csv");
    const std::string b = slurp(dir / "rerun" / "metrics.csv");
    c.expect(!a.empty() && a == b, "metrics.csv is byte-identical across the re-run");
    fs::remove_all(dir);
}

}  // namespace

int main(int argc, char** argv) {
    std::set<int> filter;
    for (int i = 1; i < argc; ++i) filter.insert(std::atoi(argv[i]));

    struct Criterion {
        int id;
        const char* title;
        std::function<void(CheckContext&)> run;
    };
    const std::vector<Criterion> criteria{
        {1, "gradient fidelity (grad_check over all ops)", criterion_1},
        {2, "contrastive loss oracles", criterion_2},
        {3, "momentum and queue contracts", criterion_3},
        {4, "adversarial contracts", criterion_4},
        {5, "MINE calibration on bivariate Gaussians", criterion_5},
        {6, "end-to-end forgetting mitigation", criterion_6},
        {7, "ablation direction", criterion_7},
        {8, "analogous-class accuracy drop", criterion_8},
        {9, "mutual-information direction", criterion_9},
        {10, "manifest reproducibility", criterion_10},
    };

    int failures = 0;
    for (const Criterion& cr : criteria) {
        if (!filter.empty() && !filter.count(cr.id)) continue;
        CheckContext ctx;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            cr.run(ctx);
        } catch (const std::exception& e) {
            ctx.ok = false;
            ctx.log << "    exception: " << e.what() << "\n";
        }
        std::cout << (ctx.ok ? "[PASS]" : "[FAIL]") << " criterion " << cr.id << ": "
                  << cr.title << " (" << format_double(seconds_since(t0)) << "s)\n"
                  << ctx.log.str();
        if (!ctx.ok) ++failures;
    }
    if (failures > 0) {
        std::cout << failures << " criterion(s) failed\n";
        return 1;
    }
    std::cout << "all criteria passed\n";
    return 0;
}
