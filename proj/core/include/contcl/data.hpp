#pragma once

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

namespace contcl {

// One labeled token sequence. Tokens are vocabulary ids; raw-text
// tokenization is out of scope.
struct Example {
    int id = 0;
    std::vector<int> tokens;
    int label = 0;
};

using Batch = std::vector<const Example*>;

// Generator parameters for the synthetic analogous-class benchmark.
// Members of an analogous pair draw most tokens from a shared pool and the
// rest from a small per-class discriminative pool, so a representation that
// discards the discriminative tokens cannot separate the pair later.
struct SyntheticSpec {
    int classes = 40;
    int analogous_pair_count = 5;
    int vocab = 200;
    int tokens_per_example = 20;
    double shared_fraction = 0.9;
    int train_per_class = 100;
    int test_per_class = 40;
    std::uint64_t seed = 1;
};

struct DatasetMeta {
    int classes = 0;
    int vocab = 0;
    int tokens_per_example = 0;
    double shared_fraction = 0.0;
    int train_per_class = 0;
    int test_per_class = 0;
    std::vector<std::pair<int, int>> analogous_pairs;
    std::uint64_t seed = 0;
};

struct Dataset {
    std::vector<Example> train;
    std::vector<Example> test;
    DatasetMeta meta;

    std::vector<const Example*> train_of_class(int label) const;
    std::vector<const Example*> test_of_class(int label) const;
    const Example* find_train(int id) const;
};

// Ordered class-incremental task split: pairwise disjoint label sets whose
// union is the full class set.
struct TaskSequence {
    std::vector<std::vector<int>> tasks;
    std::uint64_t seed = 0;

    std::size_t size() const { return tasks.size(); }
    // 0-based task position of a class id, -1 if absent.
    int task_of_class(int class_id) const;
    std::vector<int> classes_up_to(std::size_t task_idx) const;
};

Dataset generate_synthetic(const SyntheticSpec& spec);

// Seeded shuffle then chunking; analogous-pair members are forced into
// different tasks by swap repair when pair metadata is given.
TaskSequence split_tasks(const std::vector<int>& class_ids, int k, std::uint64_t seed,
                         const std::vector<std::pair<int, int>>& analogous_pairs = {});

// JSONL corpus: one {"id": int, "tokens": [int...], "label": int} per line.
std::vector<Example> load_jsonl(const std::filesystem::path& path);
void save_jsonl(const std::filesystem::path& path, const std::vector<Example>& examples);

// Corpus + sidecar meta file (<corpus stem>.meta.json by convention).
void save_dataset(const std::filesystem::path& corpus_path,
                  const std::filesystem::path& meta_path, const Dataset& dataset);
Dataset load_dataset(const std::filesystem::path& corpus_path,
                     const std::filesystem::path& meta_path);

void save_split(const std::filesystem::path& path, const TaskSequence& seq);
TaskSequence load_split(const std::filesystem::path& path);

}  // namespace contcl
