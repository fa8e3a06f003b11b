#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <vector>

#include "contcl/model.hpp"
#include "contcl/tape.hpp"
#include "contcl/tensor.hpp"

namespace contcl {

// Momentum-averaged copy of the fast encoder. The slow parameters are only
// read, never optimized: p' <- eta * p' + (1 - eta) * p after each fast step.
struct SlowEncoder {
    EncoderState params;
    double eta = 0.99;
};

void momentum_update(EncoderState& slow, const EncoderState& fast, double eta);

// Flattened L2 distance between two encoders with identical layout.
double encoder_distance(const EncoderState& a, const EncoderState& b);

struct QueueEntry {
    std::vector<double> rep;  // unit-norm slow representation
    int label = 0;
};

// Fixed-capacity FIFO of slow representations used as extra contrast
// candidates beyond the batch.
class RepresentationQueue {
public:
    explicit RepresentationQueue(std::size_t capacity = 512) : capacity_(capacity) {}

    void push(std::vector<double> rep, int label);
    void clear() { entries_.clear(); }
    std::size_t size() const { return entries_.size(); }
    std::size_t capacity() const { return capacity_; }
    const std::deque<QueueEntry>& entries() const { return entries_; }

private:
    std::size_t capacity_;
    std::deque<QueueEntry> entries_;
};

struct PastEntry {
    std::vector<double> rep;  // unit-norm representation snapshot
    int label = 0;
};

// Snapshotted representations of memory instances, taken at the end of the
// previous task. Keyed by instance id; iteration is id-ordered.
class PastRepStore {
public:
    bool empty() const { return entries_.empty(); }
    std::size_t size() const { return entries_.size(); }
    int snapshot_task() const { return snapshot_task_; }

    void replace_all(std::map<int, PastEntry> entries, int snapshot_task);
    const std::map<int, PastEntry>& entries() const { return entries_; }

    void save(const std::filesystem::path& path) const;
    static PastRepStore load(const std::filesystem::path& path);

private:
    std::map<int, PastEntry> entries_;
    int snapshot_task_ = -1;
};

// Contrast candidates: one unit-norm representation per column of `reps_t`
// ({d, J}) with `labels[j]` the label of column j. Candidates always enter
// the tape as constants (stop-gradient).
struct ContrastCandidates {
    Tensor reps_t;
    std::vector<int> labels;

    std::size_t count() const { return labels.size(); }
};

ContrastCandidates fs_candidates(const Tensor& slow_batch_reps,
                                 const std::vector<int>& batch_labels,
                                 const RepresentationQueue& queue);
ContrastCandidates cp_candidates(const PastRepStore& store);

struct ContrastiveLoss {
    Value loss;        // scalar
    Value candidates;  // the constant candidate node; gradient stays zero
};

// Supervised InfoNCE of the batch rows against the candidate columns:
//   -(1/|B|) sum_i sum_{p in P(i)} log( exp(z_i.c_p/tau) / sum_j exp(z_i.c_j/tau) )
// with P(i) the candidate columns sharing row i's label. Rows whose label has
// no candidate contribute nothing. Differentiable w.r.t. the batch side only.
ContrastiveLoss supervised_infonce(Tape& tape, Value normalized_batch,
                                   const std::vector<int>& batch_labels,
                                   const ContrastCandidates& candidates, double tau);

// Fast-slow contrast (candidates = slow reps of the batch + queue entries).
// Every row has at least its own slow representation as positive.
ContrastiveLoss loss_fs(Tape& tape, Value normalized_fast_batch,
                        const std::vector<int>& batch_labels,
                        const ContrastCandidates& candidates, double tau1);

// Current-past contrast against the snapshot store. An empty store yields a
// defined zero loss (contrast inactive on the first task).
ContrastiveLoss loss_cp(Tape& tape, Value normalized_batch,
                        const std::vector<int>& batch_labels, const PastRepStore& store,
                        double tau2);

enum class TrainingStage { NewTask, Replay };

// Stage objective: new-task L1 = ce + lambda1 * fs, replay L2 = ce + lambda2 * cp.
double combined_losses(double ce, double fs, double cp, double lambda1, double lambda2,
                       TrainingStage stage);
Value combine(Tape& tape, Value ce, Value contrast, double lambda);

}  // namespace contcl
