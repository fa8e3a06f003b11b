#include "contcl/contrastive.hpp"

#include <cmath>
#include <fstream>
#include <string>

#include <json.hpp>

#include "contcl/errors.hpp"

namespace contcl {

namespace {

void axpby(Tensor& p_slow, const Tensor& p_fast, double eta) {
    for (std::size_t i = 0; i < p_slow.size(); ++i) {
        p_slow[i] = eta * p_slow[i] + (1.0 - eta) * p_fast[i];
    }
}

}  // namespace

void momentum_update(EncoderState& slow, const EncoderState& fast, double eta) {
    if (!slow.same_layout(fast)) {
        throw shape_error("momentum_update: parameter layouts differ");
    }
    if (eta < 0.0 || eta > 1.0) {
        throw config_error("momentum_update: eta must be in [0,1]");
    }
    axpby(slow.embedding, fast.embedding, eta);
    axpby(slow.w1, fast.w1, eta);
    axpby(slow.b1, fast.b1, eta);
    axpby(slow.w2, fast.w2, eta);
    axpby(slow.b2, fast.b2, eta);
}

double encoder_distance(const EncoderState& a, const EncoderState& b) {
    if (!a.same_layout(b)) throw shape_error("encoder_distance: layouts differ");
    double sq = 0.0;
    auto acc = [&sq](const Tensor& x, const Tensor& y) {
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double d = x[i] - y[i];
            sq += d * d;
        }
    };
    acc(a.embedding, b.embedding);
    acc(a.w1, b.w1);
    acc(a.b1, b.b1);
    acc(a.w2, b.w2);
    acc(a.b2, b.b2);
    return std::sqrt(sq);
}

void RepresentationQueue::push(std::vector<double> rep, int label) {
    if (capacity_ == 0) return;
    if (entries_.size() == capacity_) entries_.pop_front();
    entries_.push_back(QueueEntry{std::move(rep), label});
}

void PastRepStore::replace_all(std::map<int, PastEntry> entries, int snapshot_task) {
    entries_ = std::move(entries);
    snapshot_task_ = snapshot_task;
}

void PastRepStore::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw input_error("PastRepStore::save: cannot open " + path.string());
    for (const auto& [id, entry] : entries_) {
        nlohmann::json j{{"id", id}, {"label", entry.label}, {"z", entry.rep}};
        out << j.dump() << "\n";
    }
}

PastRepStore PastRepStore::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw input_error("PastRepStore::load: cannot open " + path.string());
    std::map<int, PastEntry> entries;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw parse_error(std::string("invalid JSON: ") + e.what(), line_no);
        }
        PastEntry entry;
        entry.label = j.at("label").get<int>();
        entry.rep = j.at("z").get<std::vector<double>>();
        entries[j.at("id").get<int>()] = std::move(entry);
    }
    PastRepStore store;
    store.replace_all(std::move(entries), -1);
    return store;
}

namespace {

ContrastCandidates from_columns(const std::vector<const std::vector<double>*>& cols,
                                std::vector<int> labels) {
    if (cols.empty()) return ContrastCandidates{Tensor(), std::move(labels)};
    const std::size_t d = cols.front()->size();
    const std::size_t j = cols.size();
    Tensor reps_t({d, j});
    for (std::size_t c = 0; c < j; ++c) {
        if (cols[c]->size() != d) {
            throw shape_error("ContrastCandidates: inconsistent representation size");
        }
        for (std::size_t r = 0; r < d; ++r) reps_t(r, c) = (*cols[c])[r];
    }
    return ContrastCandidates{std::move(reps_t), std::move(labels)};
}

}  // namespace

ContrastCandidates fs_candidates(const Tensor& slow_batch_reps,
                                 const std::vector<int>& batch_labels,
                                 const RepresentationQueue& queue) {
    const std::size_t b = slow_batch_reps.rows();
    if (b != batch_labels.size()) {
        throw shape_error("fs_candidates: one label per slow representation required");
    }
    const std::size_t d = slow_batch_reps.cols();
    const std::size_t j = b + queue.size();
    Tensor reps_t({d, j});
    std::vector<int> labels;
    labels.reserve(j);
    for (std::size_t c = 0; c < b; ++c) {
        for (std::size_t r = 0; r < d; ++r) reps_t(r, c) = slow_batch_reps(c, r);
        labels.push_back(batch_labels[c]);
    }
    std::size_t c = b;
    for (const QueueEntry& entry : queue.entries()) {
        if (entry.rep.size() != d) {
            throw shape_error("fs_candidates: queue entry dimension mismatch");
        }
        for (std::size_t r = 0; r < d; ++r) reps_t(r, c) = entry.rep[r];
        labels.push_back(entry.label);
        ++c;
    }
    return ContrastCandidates{std::move(reps_t), std::move(labels)};
}

ContrastCandidates cp_candidates(const PastRepStore& store) {
    std::vector<const std::vector<double>*> cols;
    std::vector<int> labels;
    cols.reserve(store.size());
    labels.reserve(store.size());
    for (const auto& [id, entry] : store.entries()) {
        cols.push_back(&entry.rep);
        labels.push_back(entry.label);
    }
    return from_columns(cols, std::move(labels));
}

ContrastiveLoss supervised_infonce(Tape& tape, Value normalized_batch,
                                   const std::vector<int>& batch_labels,
                                   const ContrastCandidates& candidates, double tau) {
    if (candidates.count() == 0) {
        throw shape_error("supervised_infonce: empty candidate set");
    }
    if (tau <= 0.0) throw config_error("supervised_infonce: tau must be positive");
    const Tensor& batch = tape.value(normalized_batch);
    const std::size_t b = batch.rows();
    const std::size_t j = candidates.count();
    if (batch_labels.size() != b) {
        throw shape_error("supervised_infonce: one label per batch row required");
    }

    // Per-row loss sum_{p in P(i)} [lse(s_i) - s_ip] = |P(i)|*lse(s_i) - sum_p s_ip,
    // with lse obtained from the row's cross-entropy against column 0.
    Value cand_node = tape.constant(candidates.reps_t);
    Value scores = tape.scalar_mul(tape.matmul(normalized_batch, cand_node), 1.0 / tau);

    Tensor mask({b, j});
    Tensor pos_count({b, 1});
    for (std::size_t i = 0; i < b; ++i) {
        double count = 0.0;
        for (std::size_t c = 0; c < j; ++c) {
            if (candidates.labels[c] == batch_labels[i]) {
                mask(i, c) = 1.0;
                count += 1.0;
            }
        }
        pos_count(i, 0) = count;
    }

    Value ce0 = tape.softmax_cross_entropy(scores, std::vector<int>(b, 0));
    Tensor e0({j, 1});
    e0(0, 0) = 1.0;
    Value s0 = tape.matmul(scores, tape.constant(std::move(e0)));
    Value lse = tape.add(ce0, s0);  // {B,1} per-row log-sum-exp

    Value ones_j = tape.constant(Tensor::full({j, 1}, 1.0));
    Value pos_sum = tape.matmul(tape.mul(scores, tape.constant(std::move(mask))), ones_j);
    Value terms = tape.sub(tape.mul(lse, tape.constant(std::move(pos_count))), pos_sum);
    Value total = tape.scalar_mul(tape.sum(terms), 1.0 / static_cast<double>(b));
    return ContrastiveLoss{total, cand_node};
}

ContrastiveLoss loss_fs(Tape& tape, Value normalized_fast_batch,
                        const std::vector<int>& batch_labels,
                        const ContrastCandidates& candidates, double tau1) {
    for (int label : batch_labels) {
        bool found = false;
        for (int cl : candidates.labels) {
            if (cl == label) {
                found = true;
                break;
            }
        }
        if (!found) {
            throw shape_error("loss_fs: batch label without candidate positive");
        }
    }
    return supervised_infonce(tape, normalized_fast_batch, batch_labels, candidates, tau1);
}

ContrastiveLoss loss_cp(Tape& tape, Value normalized_batch,
                        const std::vector<int>& batch_labels, const PastRepStore& store,
                        double tau2) {
    if (store.empty()) {
        return ContrastiveLoss{tape.constant(Tensor::scalar(0.0)), Value{}};
    }
    return supervised_infonce(tape, normalized_batch, batch_labels, cp_candidates(store),
                              tau2);
}

double combined_losses(double ce, double fs, double cp, double lambda1, double lambda2,
                       TrainingStage stage) {
    if (lambda1 < 0.0 || lambda2 < 0.0) {
        throw config_error("combined_losses: loss weights must be non-negative");
    }
    return stage == TrainingStage::NewTask ? ce + lambda1 * fs : ce + lambda2 * cp;
}

Value combine(Tape& tape, Value ce, Value contrast, double lambda) {
    if (lambda < 0.0) throw config_error("combine: loss weight must be non-negative");
    return tape.add(ce, tape.scalar_mul(contrast, lambda));
}

}  // namespace contcl
