#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "contcl/adversarial.hpp"
#include "contcl/contrastive.hpp"
#include "contcl/data.hpp"
#include "contcl/memory.hpp"
#include "contcl/mi.hpp"
#include "contcl/model.hpp"

namespace contcl {

struct AblationFlags {
    bool no_fs = false;
    bool no_cp = false;
    bool no_adv = false;
    bool finetune_only = false;
    bool replay_only = false;

    // Canonical label: "full", "no-fs", ..., or "+"-joined combination.
    std::string label() const;
};

struct TrainConfig {
    double eta = 0.99;
    double tau1 = 0.05;
    double tau2 = 0.05;
    double lambda1 = 0.05;
    double lambda2 = 0.05;
    int queue_capacity = 512;
    int memory_budget = 10;
    int adv_steps = 2;
    double adv_epsilon = 0.3;
    double adv_alpha = 0.1;
    std::string adv_init = "zero";  // or "uniform"
    double lr_encoder = 0.01;
    double lr_classifier = 0.1;
    int epochs_new_task = 10;
    int epochs_replay = 10;
    int batch_size = 32;
    int embed_dim = 32;
    int hidden_dim = 64;
    int rep_dim = 32;
    bool ce_all_seen = true;  // cross-entropy over all seen classes during new-task training
    std::uint64_t seed = 1;
    AblationFlags flags;

    void validate() const;
    // Flag composition: replay_only and finetune_only imply the narrower flags.
    TrainConfig resolved() const;
    AdvConfig adv_config() const;
};

// Strict flat-JSON codec: unknown keys are config errors, missing keys keep
// their defaults.
TrainConfig config_from_json_string(const std::string& text);
TrainConfig config_from_json_file(const std::filesystem::path& path);
std::string config_to_json_string(const TrainConfig& cfg);
void config_to_json_file(const std::filesystem::path& path, const TrainConfig& cfg);

struct CheckpointMetrics {
    int task_index = 0;                    // 1-based checkpoint position j
    std::vector<double> per_task_acc;      // accuracy on task i's test set, i <= j
    double pooled_acc = 0.0;               // Acc over the union of seen test sets
    std::map<int, double> per_class_acc;   // class id -> accuracy
};

struct MiReport {
    bool measured = false;
    MiEstimate input_rep_task1;   // I(X_1;Z_1) right after the first task
    MiEstimate rep_label_final;   // I(Z;Y) on the final all-class test set
};

struct AnalogousClassRow {
    int class_id = 0;
    double confusability = 0.0;  // min cosine distance to any other class mean
    int task_pos = 0;            // 0-based task of the class
    bool counted = false;        // true when the class sits in the first half
    double final_acc = 0.0;
    double acc_after_own_task = 0.0;
    double drop = 0.0;
};

struct AnalogousReport {
    std::vector<AnalogousClassRow> selected;
    int counted = 0;
    double mean_final_acc = 0.0;
    double mean_drop = 0.0;
};

struct MetricsReport {
    std::vector<CheckpointMetrics> checkpoints;
    MiReport mi;
    AnalogousReport analogous;
    double wall_seconds = 0.0;

    double final_acc() const;
};

struct TrainerState {
    EncoderState fast;
    SlowEncoder slow;
    ClassifierState classifier;
    RepresentationQueue queue;
    MemoryBank memory;
    PastRepStore past;
};

struct TaskView {
    int index = 0;  // 0-based position in the sequence
    std::vector<int> class_ids;
};

TrainerState make_initial_state(const Dataset& dataset, const TrainConfig& cfg);

// One task: new-task training with L1, memory selection, adversarially
// augmented replay with L2, then representation snapshot. Expects a resolved
// config.
void train_task(TrainerState& state, const Dataset& dataset, const TaskView& task,
                const TrainConfig& cfg);

CheckpointMetrics evaluate(const TrainerState& state, const Dataset& dataset,
                           const TaskSequence& seq, std::size_t upto_task);

struct RunResult {
    MetricsReport report;
    TrainerState state;
};

RunResult run_sequence(const Dataset& dataset, const TaskSequence& seq,
                       const TrainConfig& cfg, bool measure_mi = false,
                       const MineOptions* mi_opts = nullptr);

// Confusability scoring over final class means plus the accuracy-drop table
// restricted to first-half classes.
AnalogousReport analogous_analysis(const TrainerState& state, const Dataset& dataset,
                                   const TaskSequence& seq, const MetricsReport& report,
                                   double fraction = 0.2);

// Deterministic "%.12g" rendering used by every CSV writer.
std::string format_double(double v);

void write_metrics_csv(const std::filesystem::path& path, const MetricsReport& report,
                       std::size_t total_tasks);
void write_class_acc_csv(const std::filesystem::path& path, const MetricsReport& report);
void write_reps_dump(const std::filesystem::path& path, const TrainerState& state,
                     const Dataset& dataset);
void write_analogous_json(const std::filesystem::path& path, const AnalogousReport& report);
void write_mi_json(const std::filesystem::path& path, const MiReport& report);

// Writes config.json, metrics.csv, class_acc.csv, reps.jsonl, memory.json,
// past_reps.jsonl, checkpoint.json, analogous.json and mi.json (when
// measured) into `dir`.
void write_run_outputs(const std::filesystem::path& dir, const TrainConfig& resolved_cfg,
                       const Dataset& dataset, const TaskSequence& seq,
                       const RunResult& result);

}  // namespace contcl
