#include "contcl/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <string>

#include <json.hpp>

#include "contcl/errors.hpp"
#include "contcl/rng.hpp"

namespace contcl {

std::vector<const Example*> Dataset::train_of_class(int label) const {
    std::vector<const Example*> out;
    for (const Example& e : train) {
        if (e.label == label) out.push_back(&e);
    }
    return out;
}

std::vector<const Example*> Dataset::test_of_class(int label) const {
    std::vector<const Example*> out;
    for (const Example& e : test) {
        if (e.label == label) out.push_back(&e);
    }
    return out;
}

const Example* Dataset::find_train(int id) const {
    for (const Example& e : train) {
        if (e.id == id) return &e;
    }
    return nullptr;
}

int TaskSequence::task_of_class(int class_id) const {
    for (std::size_t t = 0; t < tasks.size(); ++t) {
        if (std::find(tasks[t].begin(), tasks[t].end(), class_id) != tasks[t].end()) {
            return static_cast<int>(t);
        }
    }
    return -1;
}

std::vector<int> TaskSequence::classes_up_to(std::size_t task_idx) const {
    std::vector<int> out;
    for (std::size_t t = 0; t <= task_idx && t < tasks.size(); ++t) {
        out.insert(out.end(), tasks[t].begin(), tasks[t].end());
    }
    return out;
}

namespace {

struct TokenPools {
    // Per class: primary pool (shared pool for pair members, own pool for
    // singletons) and discriminative pool (pair members only). Singleton
    // pools wide enough are split into a majority and a minority sub-pool,
    // giving those classes a bimodal token distribution.
    std::vector<std::pair<int, int>> primary;  // [lo, hi)
    std::vector<std::pair<int, int>> disc;     // [lo, hi), empty when lo==hi
};

constexpr int kSharedPoolSize = 10;
constexpr int kDiscPoolSize = 3;
constexpr int kMinSingletonPoolSize = 3;
constexpr double kMinorityModeFraction = 0.2;

TokenPools assign_pools(const SyntheticSpec& spec) {
    const int pair_classes = 2 * spec.analogous_pair_count;
    const int singles = spec.classes - pair_classes;
    const int pair_budget = spec.analogous_pair_count * (kSharedPoolSize + 2 * kDiscPoolSize);
    if (singles < 0) {
        throw config_error("generate_synthetic: more pair classes than classes");
    }
    const int remaining = spec.vocab - pair_budget;
    const int singleton_pool = singles > 0 ? remaining / singles : 0;
    if (remaining < 0 || (singles > 0 && singleton_pool < kMinSingletonPoolSize)) {
        throw config_error("generate_synthetic: vocabulary too small for disjoint pools");
    }

    TokenPools pools;
    pools.primary.resize(spec.classes);
    pools.disc.assign(spec.classes, {0, 0});
    int next = 0;
    for (int p = 0; p < spec.analogous_pair_count; ++p) {
        const std::pair<int, int> shared{next, next + kSharedPoolSize};
        next += kSharedPoolSize;
        for (int m = 0; m < 2; ++m) {
            const int c = 2 * p + m;
            pools.primary[c] = shared;
            pools.disc[c] = {next, next + kDiscPoolSize};
            next += kDiscPoolSize;
        }
    }
    for (int c = pair_classes; c < spec.classes; ++c) {
        pools.primary[c] = {next, next + singleton_pool};
        next += singleton_pool;
    }
    return pools;
}

void validate_spec(const SyntheticSpec& spec) {
    if (spec.classes < 1) throw config_error("generate_synthetic: classes must be >= 1");
    if (spec.analogous_pair_count < 0) {
        throw config_error("generate_synthetic: negative analogous pair count");
    }
    if (spec.tokens_per_example < 1) {
        throw config_error("generate_synthetic: tokens_per_example must be >= 1");
    }
    if (spec.train_per_class < 1 || spec.test_per_class < 0) {
        throw config_error("generate_synthetic: bad examples-per-class counts");
    }
    if (spec.analogous_pair_count > 0 &&
        (spec.shared_fraction <= 0.0 || spec.shared_fraction >= 1.0)) {
        throw config_error("generate_synthetic: shared_fraction must be in (0,1)");
    }
}

}  // namespace

Dataset generate_synthetic(const SyntheticSpec& spec) {
    validate_spec(spec);
    const TokenPools pools = assign_pools(spec);

    Dataset ds;
    ds.meta.classes = spec.classes;
    ds.meta.vocab = spec.vocab;
    ds.meta.tokens_per_example = spec.tokens_per_example;
    ds.meta.shared_fraction = spec.shared_fraction;
    ds.meta.train_per_class = spec.train_per_class;
    ds.meta.test_per_class = spec.test_per_class;
    ds.meta.seed = spec.seed;
    for (int p = 0; p < spec.analogous_pair_count; ++p) {
        ds.meta.analogous_pairs.emplace_back(2 * p, 2 * p + 1);
    }

    const int per_class = spec.train_per_class + spec.test_per_class;
    for (int c = 0; c < spec.classes; ++c) {
        auto rng = make_rng(spec.seed, "synth-class", static_cast<std::uint64_t>(c));
        std::uniform_real_distribution<double> coin(0.0, 1.0);
        const auto [plo, phi] = pools.primary[c];
        const auto [dlo, dhi] = pools.disc[c];
        std::uniform_int_distribution<int> disc(dlo, dhi - 1);
        const bool paired = dhi > dlo;
        // Singleton classes with room for two sub-pools are bimodal: each
        // example draws all primary tokens from one sub-pool. Mode identity
        // carries no label information, so a task-locally sufficient
        // representation is free to discard it.
        const int pool_size = phi - plo;
        const bool bimodal = !paired && pool_size >= 2 * (kMinSingletonPoolSize - 1);
        const int minority_lo = phi - pool_size / 2;

        for (int j = 0; j < per_class; ++j) {
            Example e;
            e.id = c * per_class + j;
            e.label = c;
            e.tokens.reserve(spec.tokens_per_example);
            auto mode_pool = [&]() -> std::pair<int, int> {
                if (!bimodal) return {plo, phi};
                if (coin(rng) < kMinorityModeFraction) return {minority_lo, phi};
                return {plo, minority_lo};
            }();
            std::uniform_int_distribution<int> primary(mode_pool.first, mode_pool.second - 1);
            for (int t = 0; t < spec.tokens_per_example; ++t) {
                if (paired && coin(rng) >= spec.shared_fraction) {
                    e.tokens.push_back(disc(rng));
                } else {
                    e.tokens.push_back(primary(rng));
                }
            }
            if (j < spec.train_per_class) {
                ds.train.push_back(std::move(e));
            } else {
                ds.test.push_back(std::move(e));
            }
        }
    }
    return ds;
}

TaskSequence split_tasks(const std::vector<int>& class_ids, int k, std::uint64_t seed,
                         const std::vector<std::pair<int, int>>& analogous_pairs) {
    const int n = static_cast<int>(class_ids.size());
    if (k < 1 || k > n) {
        throw config_error("split_tasks: k must be in [1, " + std::to_string(n) + "]");
    }

    std::vector<int> shuffled = class_ids;
    auto rng = make_rng(seed, "task-split");
    std::shuffle(shuffled.begin(), shuffled.end(), rng);

    TaskSequence seq;
    seq.seed = seed;
    seq.tasks.resize(static_cast<std::size_t>(k));
    const int base = n / k, extra = n % k;
    std::size_t pos = 0;
    for (int t = 0; t < k; ++t) {
        const int take = base + (t < extra ? 1 : 0);
        for (int i = 0; i < take; ++i) seq.tasks[t].push_back(shuffled[pos++]);
    }

    if (k > 1 && !analogous_pairs.empty()) {
        auto partner_of = [&](int c) -> int {
            for (const auto& [a, b] : analogous_pairs) {
                if (a == c) return b;
                if (b == c) return a;
            }
            return -1;
        };
        // Swap repair: move one member of a co-located pair into another task,
        // never creating a new co-location.
        for (int sweep = 0; sweep < 100; ++sweep) {
            bool violated = false;
            for (const auto& [a, b] : analogous_pairs) {
                const int ta = seq.task_of_class(a), tb = seq.task_of_class(b);
                if (ta < 0 || tb < 0 || ta != tb) continue;
                violated = true;
                bool fixed = false;
                for (std::size_t t = 0; t < seq.tasks.size() && !fixed; ++t) {
                    if (static_cast<int>(t) == tb) continue;
                    for (int& c : seq.tasks[t]) {
                        const int cp = partner_of(c);
                        if (cp >= 0 && seq.task_of_class(cp) == tb) continue;
                        auto& task_b = seq.tasks[static_cast<std::size_t>(tb)];
                        auto it = std::find(task_b.begin(), task_b.end(), b);
                        std::swap(*it, c);
                        fixed = true;
                        break;
                    }
                }
                if (!fixed) {
                    throw config_error("split_tasks: cannot separate analogous pair " +
                                       std::to_string(a) + "/" + std::to_string(b));
                }
            }
            if (!violated) break;
        }
        for (const auto& [a, b] : analogous_pairs) {
            if (seq.task_of_class(a) >= 0 && seq.task_of_class(a) == seq.task_of_class(b)) {
                throw config_error("split_tasks: analogous pair repair did not converge");
            }
        }
    }
    return seq;
}

std::vector<Example> load_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw input_error("load_jsonl: cannot open " + path.string());

    std::vector<Example> out;
    std::set<int> seen_ids;
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
        if (!j.is_object() || !j.contains("id") || !j.contains("tokens") ||
            !j.contains("label")) {
            throw parse_error("expected object with id, tokens, label", line_no);
        }
        Example e;
        try {
            e.id = j.at("id").get<int>();
            e.tokens = j.at("tokens").get<std::vector<int>>();
            e.label = j.at("label").get<int>();
        } catch (const nlohmann::json::exception& e2) {
            throw parse_error(std::string("bad field type: ") + e2.what(), line_no);
        }
        if (e.tokens.empty()) throw parse_error("empty token list", line_no);
        if (!seen_ids.insert(e.id).second) {
            throw input_error("load_jsonl: duplicate id " + std::to_string(e.id) +
                              " at line " + std::to_string(line_no));
        }
        out.push_back(std::move(e));
    }
    return out;
}

void save_jsonl(const std::filesystem::path& path, const std::vector<Example>& examples) {
    std::ofstream out(path);
    if (!out) throw input_error("save_jsonl: cannot open " + path.string());
    for (const Example& e : examples) {
        nlohmann::json j{{"id", e.id}, {"tokens", e.tokens}, {"label", e.label}};
        out << j.dump() << "\n";
    }
}

void save_dataset(const std::filesystem::path& corpus_path,
                  const std::filesystem::path& meta_path, const Dataset& dataset) {
    std::vector<Example> all = dataset.train;
    all.insert(all.end(), dataset.test.begin(), dataset.test.end());
    std::sort(all.begin(), all.end(),
              [](const Example& a, const Example& b) { return a.id < b.id; });
    save_jsonl(corpus_path, all);

    const DatasetMeta& m = dataset.meta;
    nlohmann::json j{{"classes", m.classes},
                     {"vocab", m.vocab},
                     {"tokens_per_example", m.tokens_per_example},
                     {"shared_fraction", m.shared_fraction},
                     {"train_per_class", m.train_per_class},
                     {"test_per_class", m.test_per_class},
                     {"analogous_pairs", m.analogous_pairs},
                     {"seed", m.seed}};
    std::ofstream out(meta_path);
    if (!out) throw input_error("save_dataset: cannot open " + meta_path.string());
    out << j.dump(2) << "\n";
}

Dataset load_dataset(const std::filesystem::path& corpus_path,
                     const std::filesystem::path& meta_path) {
    std::ifstream in(meta_path);
    if (!in) throw input_error("load_dataset: cannot open " + meta_path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw input_error("load_dataset: bad meta file: " + std::string(e.what()));
    }

    Dataset ds;
    ds.meta.classes = j.at("classes").get<int>();
    ds.meta.vocab = j.at("vocab").get<int>();
    ds.meta.tokens_per_example = j.at("tokens_per_example").get<int>();
    ds.meta.shared_fraction = j.at("shared_fraction").get<double>();
    ds.meta.train_per_class = j.at("train_per_class").get<int>();
    ds.meta.test_per_class = j.at("test_per_class").get<int>();
    ds.meta.analogous_pairs =
        j.at("analogous_pairs").get<std::vector<std::pair<int, int>>>();
    ds.meta.seed = j.at("seed").get<std::uint64_t>();

    std::vector<Example> all = load_jsonl(corpus_path);
    std::vector<int> taken(static_cast<std::size_t>(ds.meta.classes), 0);
    for (Example& e : all) {
        if (e.label < 0 || e.label >= ds.meta.classes) {
            throw input_error("load_dataset: label " + std::to_string(e.label) +
                              " outside declared class count");
        }
        int& count = taken[static_cast<std::size_t>(e.label)];
        if (count < ds.meta.train_per_class) {
            ds.train.push_back(std::move(e));
        } else {
            ds.test.push_back(std::move(e));
        }
        ++count;
    }
    for (int c = 0; c < ds.meta.classes; ++c) {
        if (taken[static_cast<std::size_t>(c)] !=
            ds.meta.train_per_class + ds.meta.test_per_class) {
            throw input_error("load_dataset: class " + std::to_string(c) +
                              " has wrong example count");
        }
    }
    return ds;
}

void save_split(const std::filesystem::path& path, const TaskSequence& seq) {
    nlohmann::json j{{"k", seq.tasks.size()}, {"seed", seq.seed}, {"tasks", seq.tasks}};
    std::ofstream out(path);
    if (!out) throw input_error("save_split: cannot open " + path.string());
    out << j.dump(2) << "\n";
}

TaskSequence load_split(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw input_error("load_split: cannot open " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw input_error("load_split: " + std::string(e.what()));
    }
    TaskSequence seq;
    seq.seed = j.at("seed").get<std::uint64_t>();
    seq.tasks = j.at("tasks").get<std::vector<std::vector<int>>>();
    if (seq.tasks.size() != j.at("k").get<std::size_t>()) {
        throw input_error("load_split: task count does not match k");
    }
    return seq;
}

}  // namespace contcl
