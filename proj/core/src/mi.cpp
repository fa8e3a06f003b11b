#include "contcl/mi.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include "contcl/errors.hpp"
#include "contcl/rng.hpp"
#include "contcl/tape.hpp"

namespace contcl {

StatisticsNet StatisticsNet::init(int input_dim, int hidden, std::uint64_t seed) {
    if (input_dim <= 0 || hidden <= 0) {
        throw config_error("StatisticsNet: dimensions must be positive");
    }
    auto rng = make_rng(seed, "statistics-net");
    auto gaussian = [&rng](std::vector<std::size_t> shape, double stddev) {
        std::normal_distribution<double> dist(0.0, stddev);
        Tensor t(std::move(shape));
        for (std::size_t i = 0; i < t.size(); ++i) t[i] = dist(rng);
        return t;
    };
    StatisticsNet net;
    net.w1 = gaussian({static_cast<std::size_t>(input_dim), static_cast<std::size_t>(hidden)},
                      1.0 / std::sqrt(static_cast<double>(input_dim)));
    net.b1 = Tensor::zeros({1, static_cast<std::size_t>(hidden)});
    net.w2 = gaussian({static_cast<std::size_t>(hidden), 1},
                      1.0 / std::sqrt(static_cast<double>(hidden)));
    net.b2 = Tensor::zeros({1, 1});
    return net;
}

namespace {

// Per-column standardization; constant columns are zeroed. Returns false when
// every column is constant.
bool standardize(Tensor& t) {
    const std::size_t n = t.rows(), d = t.cols();
    bool any_varying = false;
    for (std::size_t j = 0; j < d; ++j) {
        double mean = 0.0;
        for (std::size_t i = 0; i < n; ++i) mean += t(i, j);
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double c = t(i, j) - mean;
            var += c * c;
        }
        var /= static_cast<double>(n);
        if (var <= 1e-24) {
            for (std::size_t i = 0; i < n; ++i) t(i, j) = 0.0;
            continue;
        }
        any_varying = true;
        const double inv = 1.0 / std::sqrt(var);
        for (std::size_t i = 0; i < n; ++i) t(i, j) = (t(i, j) - mean) * inv;
    }
    return any_varying;
}

Tensor gather_pairs(const Tensor& a, const Tensor& b, const std::vector<std::size_t>& rows_a,
                    const std::vector<std::size_t>& rows_b) {
    const std::size_t m = rows_a.size();
    const std::size_t da = a.cols(), db = b.cols();
    Tensor out({m, da + db});
    for (std::size_t i = 0; i < m; ++i) {
        const double* ra = a.data() + rows_a[i] * da;
        const double* rb = b.data() + rows_b[i] * db;
        double* dst = out.data() + i * (da + db);
        std::copy(ra, ra + da, dst);
        std::copy(rb, rb + db, dst + da);
    }
    return out;
}

Tensor net_forward_plain(const StatisticsNet& net, const Tensor& x) {
    const Tensor h = contcl::tanh(add(matmul(x, net.w1),
                                      matmul(Tensor::full({x.rows(), 1}, 1.0), net.b1)));
    return add(matmul(h, net.w2), matmul(Tensor::full({x.rows(), 1}, 1.0), net.b2));
}

double dv_bound_plain(const StatisticsNet& net, const Tensor& joint, const Tensor& marginal) {
    const Tensor tj = net_forward_plain(net, joint);
    const Tensor tm = net_forward_plain(net, marginal);
    double mx = tm[0];
    for (std::size_t i = 1; i < tm.size(); ++i) mx = std::max(mx, tm[i]);
    double acc = 0.0;
    for (std::size_t i = 0; i < tm.size(); ++i) acc += std::exp(tm[i] - mx);
    const double lme = mx + std::log(acc / static_cast<double>(tm.size()));
    return mean(tj) - lme;
}

}  // namespace

MiEstimate mine_estimate(const MiSamples& samples, const MineOptions& opts,
                         std::uint64_t seed) {
    const std::size_t n = samples.count();
    if (n < 8) throw input_error("mine_estimate: too few samples");
    if (samples.b.rows() != n) throw shape_error("mine_estimate: unpaired samples");
    if (opts.epochs < 1) throw config_error("mine_estimate: epochs must be >= 1");
    if (opts.batch < 2) throw config_error("mine_estimate: batch must be >= 2");

    Tensor a = samples.a;
    Tensor b = samples.b;
    const bool a_ok = standardize(a);
    const bool b_ok = standardize(b);
    if (!a_ok || !b_ok) {
        return MiEstimate{0.0, 0.0, true};
    }

    // Train / held-out split.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    auto split_rng = make_rng(seed, "mine-split");
    std::shuffle(order.begin(), order.end(), split_rng);
    std::size_t heldout_n = static_cast<std::size_t>(
        std::max(2.0, opts.heldout_fraction * static_cast<double>(n)));
    heldout_n = std::min(heldout_n, n / 2);
    std::vector<std::size_t> heldout(order.begin(), order.begin() + heldout_n);
    std::vector<std::size_t> train(order.begin() + heldout_n, order.end());

    // Fixed marginal pairing for held-out evaluations.
    std::vector<std::size_t> heldout_shuffled = heldout;
    auto eval_rng = make_rng(seed, "mine-eval-perm");
    std::shuffle(heldout_shuffled.begin(), heldout_shuffled.end(), eval_rng);
    const Tensor eval_joint = gather_pairs(a, b, heldout, heldout);
    const Tensor eval_marginal = gather_pairs(a, b, heldout, heldout_shuffled);

    StatisticsNet net = StatisticsNet::init(static_cast<int>(a.cols() + b.cols()),
                                            opts.hidden, mix_seed(seed, "mine-net"));
    auto train_rng = make_rng(seed, "mine-train");

    std::vector<double> evals;
    evals.reserve(static_cast<std::size_t>(opts.epochs));
    for (int epoch = 0; epoch < opts.epochs; ++epoch) {
        std::shuffle(train.begin(), train.end(), train_rng);
        for (std::size_t start = 0; start < train.size();
             start += static_cast<std::size_t>(opts.batch)) {
            const std::size_t stop =
                std::min(train.size(), start + static_cast<std::size_t>(opts.batch));
            if (stop - start < 2) break;
            std::vector<std::size_t> batch(train.begin() + start, train.begin() + stop);
            std::vector<std::size_t> shuffled = batch;
            std::shuffle(shuffled.begin(), shuffled.end(), train_rng);

            Tape tape;
            Value w1 = tape.input(net.w1), b1 = tape.input(net.b1);
            Value w2 = tape.input(net.w2), b2 = tape.input(net.b2);
            auto forward = [&](Tensor x) {
                const std::size_t m = x.rows();
                Value ones = tape.constant(Tensor::full({m, 1}, 1.0));
                Value h = tape.tanh(tape.add(tape.matmul(tape.constant(std::move(x)), w1),
                                             tape.matmul(ones, b1)));
                return tape.add(tape.matmul(h, w2), tape.matmul(ones, b2));
            };
            Value tj = forward(gather_pairs(a, b, batch, batch));
            Value tm = forward(gather_pairs(a, b, batch, shuffled));

            const Tensor& tm_vals = tape.value(tm);
            double mx = tm_vals[0];
            for (std::size_t i = 1; i < tm_vals.size(); ++i) mx = std::max(mx, tm_vals[i]);
            Value shifted = tape.sub(tm, tape.constant(Tensor::full(tm_vals.shape(), mx)));
            Value lme = tape.add(tape.log(tape.mean(tape.exp(shifted))),
                                 tape.constant(Tensor::scalar(mx)));
            Value dv = tape.sub(tape.mean(tj), lme);
            Value loss = tape.scalar_mul(dv, -1.0);
            tape.backward(loss);

            auto step = [&](Tensor& p, Value v) {
                const Tensor& g = tape.grad(v);
                for (std::size_t i = 0; i < p.size(); ++i) p[i] -= opts.lr * g[i];
            };
            step(net.w1, w1);
            step(net.b1, b1);
            step(net.w2, w2);
            step(net.b2, b2);
        }
        evals.push_back(dv_bound_plain(net, eval_joint, eval_marginal));
    }

    const std::size_t avg_n =
        std::min(evals.size(), static_cast<std::size_t>(std::max(1, opts.average_last)));
    double acc = 0.0;
    for (std::size_t i = evals.size() - avg_n; i < evals.size(); ++i) acc += evals[i];
    const double raw = acc / static_cast<double>(avg_n);
    return MiEstimate{raw, std::max(0.0, raw), false};
}

MiSamples rep_label_samples(
    const std::vector<std::pair<int, std::vector<double>>>& label_and_rep) {
    if (label_and_rep.empty()) throw input_error("rep_label_samples: no records");
    std::map<int, std::size_t> label_index;
    for (const auto& [label, rep] : label_and_rep) label_index.emplace(label, 0);
    std::size_t next = 0;
    for (auto& [label, idx] : label_index) idx = next++;

    const std::size_t n = label_and_rep.size();
    const std::size_t d = label_and_rep.front().second.size();
    MiSamples s;
    s.a = Tensor({n, d});
    s.b = Tensor({n, label_index.size()});
    for (std::size_t i = 0; i < n; ++i) {
        const auto& [label, rep] = label_and_rep[i];
        if (rep.size() != d) throw shape_error("rep_label_samples: ragged representations");
        std::copy(rep.begin(), rep.end(), s.a.data() + i * d);
        s.b(i, label_index.at(label)) = 1.0;
    }
    return s;
}

MiEstimate measure_representation_mi(const EncoderState& enc,
                                     const std::vector<const Example*>& examples,
                                     MiMode mode, const MineOptions& opts,
                                     std::uint64_t seed) {
    if (examples.empty()) throw input_error("measure_representation_mi: empty dataset");
    const std::size_t n = examples.size();
    const std::size_t dz = static_cast<std::size_t>(enc.rep_dim());

    Tensor reps({n, dz});
    for (std::size_t i = 0; i < n; ++i) {
        const Tensor z = encode(enc, *examples[i]);
        std::copy(z.values().begin(), z.values().end(), reps.data() + i * dz);
    }

    MiSamples samples;
    if (mode == MiMode::InputRepresentation) {
        // Frozen random featurizer, independent of the trained encoder: mean of
        // seeded Gaussian token embeddings.
        constexpr int kFeatDim = 32;
        auto rng = make_rng(seed, "mi-frozen-featurizer");
        std::normal_distribution<double> dist(0.0, 1.0);
        Tensor table({static_cast<std::size_t>(enc.vocab()), kFeatDim});
        for (std::size_t i = 0; i < table.size(); ++i) table[i] = dist(rng);
        samples.a = Tensor({n, kFeatDim});
        for (std::size_t i = 0; i < n; ++i) {
            const Tensor feat = matmul(token_mean_counts(*examples[i], enc.vocab()), table);
            std::copy(feat.values().begin(), feat.values().end(),
                      samples.a.data() + i * kFeatDim);
        }
        samples.b = std::move(reps);
    } else {
        std::vector<std::pair<int, std::vector<double>>> records;
        records.reserve(n);
        for (std::size_t i = 0; i < n; ++i) {
            records.emplace_back(examples[i]->label,
                                 std::vector<double>(reps.data() + i * dz,
                                                     reps.data() + (i + 1) * dz));
        }
        samples = rep_label_samples(records);
    }
    return mine_estimate(samples, opts, seed);
}

}  // namespace contcl
