#include "contcl/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <unordered_map>

#include <json.hpp>

#include "contcl/errors.hpp"
#include "contcl/rng.hpp"

namespace contcl {

std::string AblationFlags::label() const {
    if (finetune_only) return "finetune-only";
    if (replay_only) return "replay-only";
    std::string out;
    auto append = [&out](const char* name) {
        if (!out.empty()) out += "+";
        out += name;
    };
    if (no_fs) append("no-fs");
    if (no_cp) append("no-cp");
    if (no_adv) append("no-adv");
    return out.empty() ? "full" : out;
}

void TrainConfig::validate() const {
    if (eta < 0.0 || eta > 1.0) throw config_error("config: eta must be in [0,1]");
    if (tau1 <= 0.0 || tau2 <= 0.0) throw config_error("config: temperatures must be positive");
    if (lambda1 < 0.0 || lambda2 < 0.0) {
        throw config_error("config: loss weights must be non-negative");
    }
    if (queue_capacity < 0) throw config_error("config: queue_capacity must be >= 0");
    if (memory_budget < 0) throw config_error("config: memory_budget must be >= 0");
    if (adv_steps < 1 || adv_epsilon <= 0.0 || adv_alpha <= 0.0) {
        throw config_error("config: bad adversarial settings");
    }
    if (adv_init != "zero" && adv_init != "uniform") {
        throw config_error("config: adv_init must be \"zero\" or \"uniform\"");
    }
    if (lr_encoder <= 0.0 || lr_classifier <= 0.0) {
        throw config_error("config: learning rates must be positive");
    }
    if (epochs_new_task < 1 || epochs_replay < 0 || batch_size < 1) {
        throw config_error("config: bad epoch or batch settings");
    }
    if (embed_dim < 1 || hidden_dim < 1 || rep_dim < 1) {
        throw config_error("config: model dimensions must be positive");
    }
}

TrainConfig TrainConfig::resolved() const {
    TrainConfig out = *this;
    if (out.flags.finetune_only || out.flags.replay_only) {
        out.flags.no_fs = true;
        out.flags.no_cp = true;
        out.flags.no_adv = true;
    }
    out.validate();
    return out;
}

AdvConfig TrainConfig::adv_config() const {
    AdvConfig cfg;
    cfg.steps = adv_steps;
    cfg.epsilon = adv_epsilon;
    cfg.alpha = adv_alpha;
    cfg.init = adv_init == "uniform" ? AdvConfig::Init::Uniform : AdvConfig::Init::Zero;
    return cfg;
}

namespace {

nlohmann::json config_to_json(const TrainConfig& c) {
    return nlohmann::json{{"eta", c.eta},
                          {"tau1", c.tau1},
                          {"tau2", c.tau2},
                          {"lambda1", c.lambda1},
                          {"lambda2", c.lambda2},
                          {"queue_capacity", c.queue_capacity},
                          {"memory_budget", c.memory_budget},
                          {"adv_steps", c.adv_steps},
                          {"adv_epsilon", c.adv_epsilon},
                          {"adv_alpha", c.adv_alpha},
                          {"adv_init", c.adv_init},
                          {"lr_encoder", c.lr_encoder},
                          {"lr_classifier", c.lr_classifier},
                          {"epochs_new_task", c.epochs_new_task},
                          {"epochs_replay", c.epochs_replay},
                          {"batch_size", c.batch_size},
                          {"embed_dim", c.embed_dim},
                          {"hidden_dim", c.hidden_dim},
                          {"rep_dim", c.rep_dim},
                          {"ce_all_seen", c.ce_all_seen},
                          {"seed", c.seed},
                          {"no_fs", c.flags.no_fs},
                          {"no_cp", c.flags.no_cp},
                          {"no_adv", c.flags.no_adv},
                          {"finetune_only", c.flags.finetune_only},
                          {"replay_only", c.flags.replay_only}};
}

}  // namespace

TrainConfig config_from_json_string(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw config_error("config: invalid JSON: " + std::string(e.what()));
    }
    if (!j.is_object()) throw config_error("config: expected a JSON object");

    TrainConfig c;
    const nlohmann::json known = config_to_json(c);
    for (const auto& [key, value] : j.items()) {
        if (!known.contains(key)) {
            throw config_error("config: unknown field \"" + key + "\"");
        }
    }
    try {
        c.eta = j.value("eta", c.eta);
        c.tau1 = j.value("tau1", c.tau1);
        c.tau2 = j.value("tau2", c.tau2);
        c.lambda1 = j.value("lambda1", c.lambda1);
        c.lambda2 = j.value("lambda2", c.lambda2);
        c.queue_capacity = j.value("queue_capacity", c.queue_capacity);
        c.memory_budget = j.value("memory_budget", c.memory_budget);
        c.adv_steps = j.value("adv_steps", c.adv_steps);
        c.adv_epsilon = j.value("adv_epsilon", c.adv_epsilon);
        c.adv_alpha = j.value("adv_alpha", c.adv_alpha);
        c.adv_init = j.value("adv_init", c.adv_init);
        c.lr_encoder = j.value("lr_encoder", c.lr_encoder);
        c.lr_classifier = j.value("lr_classifier", c.lr_classifier);
        c.epochs_new_task = j.value("epochs_new_task", c.epochs_new_task);
        c.epochs_replay = j.value("epochs_replay", c.epochs_replay);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.embed_dim = j.value("embed_dim", c.embed_dim);
        c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
        c.rep_dim = j.value("rep_dim", c.rep_dim);
        c.ce_all_seen = j.value("ce_all_seen", c.ce_all_seen);
        c.seed = j.value("seed", c.seed);
        c.flags.no_fs = j.value("no_fs", c.flags.no_fs);
        c.flags.no_cp = j.value("no_cp", c.flags.no_cp);
        c.flags.no_adv = j.value("no_adv", c.flags.no_adv);
        c.flags.finetune_only = j.value("finetune_only", c.flags.finetune_only);
        c.flags.replay_only = j.value("replay_only", c.flags.replay_only);
    } catch (const nlohmann::json::exception& e) {
        throw config_error("config: bad field type: " + std::string(e.what()));
    }
    c.validate();
    return c;
}

TrainConfig config_from_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw config_error("config: cannot open " + path.string());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return config_from_json_string(text);
}

std::string config_to_json_string(const TrainConfig& cfg) { return config_to_json(cfg).dump(2); }

void config_to_json_file(const std::filesystem::path& path, const TrainConfig& cfg) {
    std::ofstream out(path);
    if (!out) throw input_error("config: cannot open " + path.string());
    out << config_to_json_string(cfg) << "\n";
}

double MetricsReport::final_acc() const {
    if (checkpoints.empty()) return 0.0;
    return checkpoints.back().pooled_acc;
}

TrainerState make_initial_state(const Dataset& dataset, const TrainConfig& cfg) {
    TrainerState st{
        EncoderState::init(dataset.meta.vocab, cfg.embed_dim, cfg.hidden_dim, cfg.rep_dim,
                           mix_seed(cfg.seed, "encoder")),
        SlowEncoder{},
        ClassifierState::empty(cfg.rep_dim),
        RepresentationQueue(static_cast<std::size_t>(cfg.queue_capacity)),
        MemoryBank(cfg.memory_budget),
        PastRepStore{},
    };
    st.slow.params = st.fast;
    st.slow.eta = cfg.eta;
    return st;
}

namespace {

std::vector<double> normalized_rep(const EncoderState& enc, const Example& ex) {
    const Tensor z = row_l2_normalize(encode(enc, ex));
    return z.values();
}

// New-task objective L1 = ce + lambda1 * fs over one batch.
void new_task_step(TrainerState& st, const Batch& batch, const TaskView& task,
                   const TrainConfig& cfg) {
    Tape tape;
    EncoderNodes enc = encoder_inputs(tape, st.fast);
    ClassifierNodes cls = classifier_inputs(tape, st.classifier);

    std::vector<int> class_idx;
    std::vector<int> labels;
    class_idx.reserve(batch.size());
    labels.reserve(batch.size());
    for (const Example* e : batch) {
        class_idx.push_back(st.classifier.class_index(e->label));
        labels.push_back(e->label);
    }

    Value z = encode_nodes(tape, enc, batch, st.fast.vocab(), nullptr);
    Value scores = logits_nodes(tape, cls, z);
    if (!cfg.ce_all_seen) {
        // Restrict the softmax to current-task classes with an additive mask.
        const std::size_t c = static_cast<std::size_t>(st.classifier.num_classes());
        Tensor mask({batch.size(), c});
        for (std::size_t col = 0; col < c; ++col) {
            const int cid = st.classifier.class_order[col];
            const bool current = std::find(task.class_ids.begin(), task.class_ids.end(),
                                           cid) != task.class_ids.end();
            if (!current) {
                for (std::size_t row = 0; row < batch.size(); ++row) {
                    mask(row, col) = -1e9;
                }
            }
        }
        scores = tape.add(scores, tape.constant(std::move(mask)));
    }
    Value ce = tape.mean(tape.softmax_cross_entropy(scores, class_idx));

    Value objective = ce;
    Tensor slow_batch;
    if (!cfg.flags.no_fs) {
        slow_batch = Tensor({batch.size(), static_cast<std::size_t>(st.fast.rep_dim())});
        for (std::size_t i = 0; i < batch.size(); ++i) {
            const std::vector<double> rep = normalized_rep(st.slow.params, *batch[i]);
            std::copy(rep.begin(), rep.end(),
                      slow_batch.data() + i * static_cast<std::size_t>(st.fast.rep_dim()));
        }
        const ContrastCandidates cands = fs_candidates(slow_batch, labels, st.queue);
        Value zn = tape.row_l2_normalize(z);
        const ContrastiveLoss fs = loss_fs(tape, zn, labels, cands, cfg.tau1);
        objective = combine(tape, ce, fs.loss, cfg.lambda1);
    }

    tape.backward(objective);
    if (!std::isfinite(tape.scalar_value(objective))) {
        throw numeric_error("train_task: non-finite new-task loss");
    }
    sgd_step(st.fast, st.classifier, read_model_grads(tape, enc, cls), cfg.lr_encoder,
             cfg.lr_classifier);

    if (!cfg.flags.no_fs) {
        momentum_update(st.slow.params, st.fast, st.slow.eta);
        for (std::size_t i = 0; i < batch.size(); ++i) {
            std::vector<double> rep(
                slow_batch.data() + i * static_cast<std::size_t>(st.fast.rep_dim()),
                slow_batch.data() + (i + 1) * static_cast<std::size_t>(st.fast.rep_dim()));
            st.queue.push(std::move(rep), labels[i]);
        }
    }
}

}  // namespace

void train_task(TrainerState& st, const Dataset& dataset, const TaskView& task,
                const TrainConfig& cfg) {
    // Stage 0: grow the classifier and flush the queue. The slow encoder keeps
    // its momentum trajectory across tasks; stale queue entries do not.
    st.classifier = expand_classifier(
        st.classifier, task.class_ids,
        mix_seed(cfg.seed, "classifier-expand", static_cast<std::uint64_t>(task.index)));
    if (!cfg.flags.no_fs) {
        st.queue.clear();
    }

    // Stage 1: new-task training on the task's own data.
    std::vector<const Example*> train_examples;
    for (const Example& e : dataset.train) {
        if (std::find(task.class_ids.begin(), task.class_ids.end(), e.label) !=
            task.class_ids.end()) {
            train_examples.push_back(&e);
        }
    }
    if (train_examples.empty()) {
        throw input_error("train_task: task " + std::to_string(task.index) +
                          " has no training data");
    }

    auto stage1_rng =
        make_rng(cfg.seed, "stage1-shuffle", static_cast<std::uint64_t>(task.index));
    std::vector<std::size_t> order(train_examples.size());
    std::iota(order.begin(), order.end(), 0);
    for (int epoch = 0; epoch < cfg.epochs_new_task; ++epoch) {
        std::shuffle(order.begin(), order.end(), stage1_rng);
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t stop =
                std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            Batch batch;
            batch.reserve(stop - start);
            for (std::size_t i = start; i < stop; ++i) batch.push_back(train_examples[order[i]]);
            new_task_step(st, batch, task, cfg);
        }
    }

    if (cfg.flags.finetune_only) return;

    // Stage 2: K-means exemplar selection for the new classes.
    if (cfg.memory_budget > 0) {
        for (int class_id : task.class_ids) {
            const std::vector<const Example*> instances = dataset.train_of_class(class_id);
            if (instances.empty()) {
                throw input_error("train_task: class " + std::to_string(class_id) +
                                  " has no instances");
            }
            const std::size_t dz = static_cast<std::size_t>(st.fast.rep_dim());
            Tensor reps({instances.size(), dz});
            std::vector<int> ids;
            ids.reserve(instances.size());
            for (std::size_t i = 0; i < instances.size(); ++i) {
                const Tensor z = encode(st.fast, *instances[i]);
                std::copy(z.values().begin(), z.values().end(), reps.data() + i * dz);
                ids.push_back(instances[i]->id);
            }
            st.memory.set_class(
                class_id,
                select_memory(ids, reps, cfg.memory_budget,
                              mix_seed(cfg.seed, "memory-select",
                                       static_cast<std::uint64_t>(class_id))));
        }
    }

    // Stage 3: adversarially augmented replay over the whole memory.
    const std::vector<int> memory_ids = st.memory.all_instance_ids();
    if (!memory_ids.empty() && cfg.epochs_replay > 0) {
        std::unordered_map<int, const Example*> by_id;
        by_id.reserve(dataset.train.size());
        for (const Example& e : dataset.train) by_id.emplace(e.id, &e);

        ReplayObjectiveOpts opts;
        opts.tau2 = cfg.tau2;
        opts.lambda2 = cfg.lambda2;
        opts.use_cp = !cfg.flags.no_cp;
        const AdvConfig adv = cfg.adv_config();

        auto replay_rng =
            make_rng(cfg.seed, "replay-shuffle", static_cast<std::uint64_t>(task.index));
        std::vector<int> pool = memory_ids;
        std::uint64_t batch_counter = 0;
        for (int epoch = 0; epoch < cfg.epochs_replay; ++epoch) {
            std::shuffle(pool.begin(), pool.end(), replay_rng);
            for (std::size_t start = 0; start < pool.size();
                 start += static_cast<std::size_t>(cfg.batch_size)) {
                const std::size_t stop =
                    std::min(pool.size(), start + static_cast<std::size_t>(cfg.batch_size));
                Batch batch;
                batch.reserve(stop - start);
                for (std::size_t i = start; i < stop; ++i) batch.push_back(by_id.at(pool[i]));

                ReplayLossResult res;
                if (cfg.flags.no_adv) {
                    res = plain_replay_loss(st.fast, st.classifier, batch, st.past, opts);
                } else {
                    res = adv_replay_loss(st.fast, st.classifier, batch, st.past, opts, adv,
                                          mix_seed(cfg.seed, "adv-init", batch_counter));
                }
                ++batch_counter;
                if (!std::isfinite(res.objective)) {
                    throw numeric_error("train_task: non-finite replay loss");
                }
                sgd_step(st.fast, st.classifier, res.grads, cfg.lr_encoder, cfg.lr_classifier);
            }
        }
    }

    // Stage 4: snapshot memory representations for the next task's contrast.
    if (!st.memory.empty()) {
        std::unordered_map<int, const Example*> by_id;
        by_id.reserve(dataset.train.size());
        for (const Example& e : dataset.train) by_id.emplace(e.id, &e);
        std::map<int, PastEntry> snapshot;
        for (const auto& [class_id, ids] : st.memory.by_class()) {
            for (int id : ids) {
                snapshot[id] = PastEntry{normalized_rep(st.fast, *by_id.at(id)), class_id};
            }
        }
        st.past.replace_all(std::move(snapshot), task.index);
    }
}

CheckpointMetrics evaluate(const TrainerState& state, const Dataset& dataset,
                           const TaskSequence& seq, std::size_t upto_task) {
    if (seq.tasks.empty() || upto_task >= seq.tasks.size()) {
        throw input_error("evaluate: task index out of range");
    }
    CheckpointMetrics m;
    m.task_index = static_cast<int>(upto_task) + 1;
    std::size_t pooled_correct = 0, pooled_total = 0;
    for (std::size_t t = 0; t <= upto_task; ++t) {
        std::size_t task_correct = 0, task_total = 0;
        for (int class_id : seq.tasks[t]) {
            std::size_t class_correct = 0, class_total = 0;
            for (const Example& e : dataset.test) {
                if (e.label != class_id) continue;
                ++class_total;
                if (predict(state.classifier, encode(state.fast, e)) == e.label) {
                    ++class_correct;
                }
            }
            m.per_class_acc[class_id] =
                class_total == 0 ? 0.0
                                 : static_cast<double>(class_correct) /
                                       static_cast<double>(class_total);
            task_correct += class_correct;
            task_total += class_total;
        }
        m.per_task_acc.push_back(task_total == 0 ? 0.0
                                                 : static_cast<double>(task_correct) /
                                                       static_cast<double>(task_total));
        pooled_correct += task_correct;
        pooled_total += task_total;
    }
    m.pooled_acc = pooled_total == 0
                       ? 0.0
                       : static_cast<double>(pooled_correct) / static_cast<double>(pooled_total);
    return m;
}

RunResult run_sequence(const Dataset& dataset, const TaskSequence& seq,
                       const TrainConfig& raw_cfg, bool measure_mi,
                       const MineOptions* mi_opts) {
    if (seq.tasks.empty()) throw input_error("run_sequence: empty task sequence");
    const TrainConfig cfg = raw_cfg.resolved();
    const auto start_time = std::chrono::steady_clock::now();

    RunResult run{MetricsReport{}, make_initial_state(dataset, cfg)};
    const MineOptions mine = mi_opts ? *mi_opts : MineOptions{};

    for (std::size_t t = 0; t < seq.tasks.size(); ++t) {
        TaskView task{static_cast<int>(t), seq.tasks[t]};
        train_task(run.state, dataset, task, cfg);
        run.report.checkpoints.push_back(evaluate(run.state, dataset, seq, t));

        if (measure_mi && t == 0) {
            std::vector<const Example*> task1_test;
            for (int class_id : seq.tasks[0]) {
                for (const Example& e : dataset.test) {
                    if (e.label == class_id) task1_test.push_back(&e);
                }
            }
            run.report.mi.input_rep_task1 =
                measure_representation_mi(run.state.fast, task1_test,
                                          MiMode::InputRepresentation, mine,
                                          mix_seed(cfg.seed, "mi-input-rep"));
            run.report.mi.measured = true;
        }
    }

    if (measure_mi) {
        std::vector<const Example*> final_test;
        final_test.reserve(dataset.test.size());
        for (const Example& e : dataset.test) final_test.push_back(&e);
        run.report.mi.rep_label_final =
            measure_representation_mi(run.state.fast, final_test, MiMode::RepresentationLabel,
                                      mine, mix_seed(cfg.seed, "mi-rep-label"));
        run.report.mi.measured = true;
    }

    if (dataset.meta.classes >= 2) {
        run.report.analogous = analogous_analysis(run.state, dataset, seq, run.report);
    }
    run.report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_time).count();
    return run;
}

AnalogousReport analogous_analysis(const TrainerState& state, const Dataset& dataset,
                                   const TaskSequence& seq, const MetricsReport& report,
                                   double fraction) {
    std::vector<int> class_ids;
    for (const auto& task : seq.tasks) {
        class_ids.insert(class_ids.end(), task.begin(), task.end());
    }
    if (class_ids.size() < 2) throw input_error("analogous_analysis: need at least 2 classes");
    if (report.checkpoints.empty()) {
        throw input_error("analogous_analysis: no checkpoints recorded");
    }
    std::sort(class_ids.begin(), class_ids.end());

    const std::size_t dz = static_cast<std::size_t>(state.fast.rep_dim());
    std::map<int, std::vector<double>> means;
    for (int class_id : class_ids) {
        std::vector<double> mean(dz, 0.0);
        std::size_t count = 0;
        for (const Example& e : dataset.test) {
            if (e.label != class_id) continue;
            const Tensor z = encode(state.fast, e);
            for (std::size_t i = 0; i < dz; ++i) mean[i] += z[i];
            ++count;
        }
        if (count == 0) {
            throw input_error("analogous_analysis: class " + std::to_string(class_id) +
                              " has no test data");
        }
        for (double& v : mean) v /= static_cast<double>(count);
        means[class_id] = std::move(mean);
    }

    auto cosine_distance = [dz](const std::vector<double>& a, const std::vector<double>& b) {
        double ab = 0.0, aa = 0.0, bb = 0.0;
        for (std::size_t i = 0; i < dz; ++i) {
            ab += a[i] * b[i];
            aa += a[i] * a[i];
            bb += b[i] * b[i];
        }
        if (aa == 0.0 || bb == 0.0) return 1.0;
        return 1.0 - ab / std::sqrt(aa * bb);
    };

    std::vector<AnalogousClassRow> rows;
    rows.reserve(class_ids.size());
    for (int class_id : class_ids) {
        double best = std::numeric_limits<double>::infinity();
        for (int other : class_ids) {
            if (other == class_id) continue;
            best = std::min(best, cosine_distance(means.at(class_id), means.at(other)));
        }
        AnalogousClassRow row;
        row.class_id = class_id;
        row.confusability = best;
        row.task_pos = seq.task_of_class(class_id);
        rows.push_back(row);
    }
    std::sort(rows.begin(), rows.end(), [](const AnalogousClassRow& a, const AnalogousClassRow& b) {
        if (a.confusability != b.confusability) return a.confusability < b.confusability;
        return a.class_id < b.class_id;
    });

    const std::size_t n_sel = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(fraction * static_cast<double>(rows.size()))));
    rows.resize(std::min(rows.size(), n_sel));

    AnalogousReport out;
    const CheckpointMetrics& final_cp = report.checkpoints.back();
    const std::size_t k = seq.tasks.size();
    for (AnalogousClassRow row : rows) {
        row.counted = row.task_pos >= 0 &&
                      static_cast<std::size_t>(row.task_pos) * 2 < k;
        row.final_acc = final_cp.per_class_acc.count(row.class_id)
                            ? final_cp.per_class_acc.at(row.class_id)
                            : 0.0;
        if (row.task_pos >= 0 &&
            static_cast<std::size_t>(row.task_pos) < report.checkpoints.size()) {
            const CheckpointMetrics& own = report.checkpoints[static_cast<std::size_t>(row.task_pos)];
            row.acc_after_own_task = own.per_class_acc.count(row.class_id)
                                         ? own.per_class_acc.at(row.class_id)
                                         : 0.0;
        }
        row.drop = row.acc_after_own_task - row.final_acc;
        if (row.counted) {
            out.mean_final_acc += row.final_acc;
            out.mean_drop += row.drop;
            ++out.counted;
        }
        out.selected.push_back(row);
    }
    if (out.counted > 0) {
        out.mean_final_acc /= static_cast<double>(out.counted);
        out.mean_drop /= static_cast<double>(out.counted);
    }
    return out;
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

void write_metrics_csv(const std::filesystem::path& path, const MetricsReport& report,
                       std::size_t total_tasks) {
    std::ofstream out(path);
    if (!out) throw input_error("write_metrics_csv: cannot open " + path.string());
    out << "task_index";
    for (std::size_t i = 1; i <= total_tasks; ++i) out << ",acc_t" << i;
    out << ",acc\n";
    for (const CheckpointMetrics& cp : report.checkpoints) {
        out << cp.task_index;
        for (std::size_t i = 0; i < total_tasks; ++i) {
            out << ",";
            if (i < cp.per_task_acc.size()) out << format_double(cp.per_task_acc[i]);
        }
        out << "," << format_double(cp.pooled_acc) << "\n";
    }
}

void write_class_acc_csv(const std::filesystem::path& path, const MetricsReport& report) {
    std::ofstream out(path);
    if (!out) throw input_error("write_class_acc_csv: cannot open " + path.string());
    out << "task_index,class_id,accuracy\n";
    for (const CheckpointMetrics& cp : report.checkpoints) {
        for (const auto& [class_id, acc] : cp.per_class_acc) {
            out << cp.task_index << "," << class_id << "," << format_double(acc) << "\n";
        }
    }
}

void write_reps_dump(const std::filesystem::path& path, const TrainerState& state,
                     const Dataset& dataset) {
    std::ofstream out(path);
    if (!out) throw input_error("write_reps_dump: cannot open " + path.string());
    for (const Example& e : dataset.test) {
        const Tensor z = encode(state.fast, e);
        nlohmann::json j{{"id", e.id}, {"label", e.label}, {"z", z.values()}};
        out << j.dump() << "\n";
    }
}

void write_analogous_json(const std::filesystem::path& path, const AnalogousReport& report) {
    nlohmann::json rows = nlohmann::json::array();
    for (const AnalogousClassRow& row : report.selected) {
        rows.push_back({{"class_id", row.class_id},
                        {"confusability", row.confusability},
                        {"task_pos", row.task_pos},
                        {"counted", row.counted},
                        {"final_acc", row.final_acc},
                        {"acc_after_own_task", row.acc_after_own_task},
                        {"drop", row.drop}});
    }
    nlohmann::json j{{"selected", rows},
                     {"counted", report.counted},
                     {"mean_final_acc", report.mean_final_acc},
                     {"mean_drop", report.mean_drop}};
    std::ofstream out(path);
    if (!out) throw input_error("write_analogous_json: cannot open " + path.string());
    out << j.dump(2) << "\n";
}

void write_mi_json(const std::filesystem::path& path, const MiReport& report) {
    auto estimate = [](const MiEstimate& e) {
        return nlohmann::json{{"raw", e.raw}, {"clamped", e.clamped}, {"degenerate", e.degenerate}};
    };
    nlohmann::json j{{"measured", report.measured},
                     {"input_rep_task1", estimate(report.input_rep_task1)},
                     {"rep_label_final", estimate(report.rep_label_final)}};
    std::ofstream out(path);
    if (!out) throw input_error("write_mi_json: cannot open " + path.string());
    out << j.dump(2) << "\n";
}

void write_run_outputs(const std::filesystem::path& dir, const TrainConfig& resolved_cfg,
                       const Dataset& dataset, const TaskSequence& seq,
                       const RunResult& result) {
    std::filesystem::create_directories(dir);
    config_to_json_file(dir / "config.json", resolved_cfg);
    write_metrics_csv(dir / "metrics.csv", result.report, seq.tasks.size());
    write_class_acc_csv(dir / "class_acc.csv", result.report);
    write_reps_dump(dir / "reps.jsonl", result.state, dataset);
    result.state.memory.save(dir / "memory.json");
    result.state.past.save(dir / "past_reps.jsonl");
    save_checkpoint(dir / "checkpoint.json", result.state.fast, result.state.classifier);
    write_analogous_json(dir / "analogous.json", result.report.analogous);
    if (result.report.mi.measured) write_mi_json(dir / "mi.json", result.report.mi);

    nlohmann::json summary{{"wall_seconds", result.report.wall_seconds},
                           {"final_acc", result.report.final_acc()},
                           {"variant", resolved_cfg.flags.label()}};
    std::ofstream out(dir / "summary.json");
    if (!out) throw input_error("write_run_outputs: cannot open summary.json");
    out << summary.dump(2) << "\n";
}

}  // namespace contcl
