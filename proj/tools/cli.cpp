#include "cli.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "contcl/errors.hpp"
#include "contcl/mi.hpp"
#include "contcl/runner.hpp"

namespace fs = std::filesystem;

namespace contcl::cli {

namespace {

fs::path resolve_out(const fs::path& p) {
    if (p.is_absolute()) return p;
    if (const char* root = std::getenv("CONTCL_OUT_ROOT")) {
        return fs::path(root) / p;
    }
    return p;
}

fs::path default_meta_path(const fs::path& corpus) {
    fs::path meta = corpus;
    meta.replace_extension();
    meta += ".meta.json";
    return meta;
}

SyntheticSpec spec_from_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw config_error("gen-data: cannot open spec file " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw config_error("gen-data: bad spec JSON: " + std::string(e.what()));
    }
    SyntheticSpec s;
    const std::map<std::string, int> known{{"classes", 0},
                                           {"analogous_pair_count", 0},
                                           {"vocab", 0},
                                           {"tokens_per_example", 0},
                                           {"shared_fraction", 0},
                                           {"train_per_class", 0},
                                           {"test_per_class", 0},
                                           {"seed", 0}};
    for (const auto& [key, value] : j.items()) {
        if (!known.count(key)) throw config_error("gen-data: unknown spec field \"" + key + "\"");
    }
    try {
        s.classes = j.value("classes", s.classes);
        s.analogous_pair_count = j.value("analogous_pair_count", s.analogous_pair_count);
        s.vocab = j.value("vocab", s.vocab);
        s.tokens_per_example = j.value("tokens_per_example", s.tokens_per_example);
        s.shared_fraction = j.value("shared_fraction", s.shared_fraction);
        s.train_per_class = j.value("train_per_class", s.train_per_class);
        s.test_per_class = j.value("test_per_class", s.test_per_class);
        s.seed = j.value("seed", s.seed);
    } catch (const nlohmann::json::exception& e) {
        throw config_error("gen-data: bad spec field type: " + std::string(e.what()));
    }
    return s;
}

struct TrainInputs {
    fs::path corpus;
    fs::path meta;
    fs::path split;
    fs::path out_dir;
    TrainConfig config;
    std::vector<std::uint64_t> seeds;
    bool measure_mi = false;
};

void write_manifest(const fs::path& path, const TrainInputs& in) {
    nlohmann::json j{{"command", "train"},
                     {"config", nlohmann::json::parse(config_to_json_string(in.config))},
                     {"corpus", in.corpus.string()},
                     {"meta", in.meta.string()},
                     {"split", in.split.string()},
                     {"out_dir", in.out_dir.string()},
                     {"seeds", in.seeds},
                     {"measure_mi", in.measure_mi}};
    std::ofstream out(path);
    if (!out) throw input_error("train: cannot write manifest " + path.string());
    out << j.dump(2) << "\n";
}

TrainInputs inputs_from_manifest(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw input_error("train: cannot open manifest " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw input_error("train: bad manifest: " + std::string(e.what()));
    }
    TrainInputs t;
    t.corpus = j.at("corpus").get<std::string>();
    t.meta = j.at("meta").get<std::string>();
    t.split = j.at("split").get<std::string>();
    t.out_dir = j.at("out_dir").get<std::string>();
    t.config = config_from_json_string(j.at("config").dump());
    t.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    t.measure_mi = j.value("measure_mi", false);
    return t;
}

struct SeedStats {
    double mean = 0.0;
    double stddev = 0.0;
    std::size_t n = 0;
};

SeedStats stats(const std::vector<double>& xs) {
    SeedStats s;
    s.n = xs.size();
    if (xs.empty()) return s;
    for (double x : xs) s.mean += x;
    s.mean /= static_cast<double>(xs.size());
    double sq = 0.0;
    for (double x : xs) sq += (x - s.mean) * (x - s.mean);
    s.stddev = std::sqrt(sq / static_cast<double>(xs.size()));
    return s;
}

void write_aggregate_csv(const fs::path& path,
                         const std::vector<MetricsReport>& reports) {
    if (reports.empty()) throw input_error("aggregate: no runs");
    std::ofstream out(path);
    if (!out) throw input_error("aggregate: cannot open " + path.string());
    out << "task_index,acc_mean,acc_std,n_runs\n";
    const std::size_t checkpoints = reports.front().checkpoints.size();
    for (std::size_t j = 0; j < checkpoints; ++j) {
        std::vector<double> accs;
        for (const MetricsReport& r : reports) {
            accs.push_back(r.checkpoints.at(j).pooled_acc);
        }
        const SeedStats s = stats(accs);
        out << (j + 1) << "," << format_double(s.mean) << "," << format_double(s.stddev)
            << "," << s.n << "\n";
    }
}

// Runs every seed of a train/ablate invocation; returns the per-seed reports.
std::vector<MetricsReport> run_training(const TrainInputs& in) {
    const Dataset dataset = load_dataset(in.corpus, in.meta);
    const TaskSequence seq = load_split(in.split);

    std::vector<MetricsReport> reports;
    for (std::uint64_t seed : in.seeds) {
        TrainConfig cfg = in.config;
        cfg.seed = seed;
        const TrainConfig resolved = cfg.resolved();
        const fs::path run_dir =
            in.seeds.size() == 1 ? in.out_dir : in.out_dir / ("seed_" + std::to_string(seed));
        fs::create_directories(run_dir);

        TrainInputs echo = in;
        echo.config = cfg;
        echo.seeds = {seed};
        echo.out_dir = run_dir;
        write_manifest(run_dir / "manifest.json", echo);

        const RunResult result = run_sequence(dataset, seq, cfg, in.measure_mi);
        write_run_outputs(run_dir, resolved, dataset, seq, result);
        std::cout << "run seed=" << seed << " variant=" << resolved.flags.label()
                  << " final_acc=" << format_double(result.report.final_acc()) << "\n";
        reports.push_back(result.report);
    }
    if (in.seeds.size() > 1) {
        write_aggregate_csv(in.out_dir / "aggregate.csv", reports);
    }
    return reports;
}

void apply_flag_name(TrainConfig& cfg, const std::string& name) {
    if (name == "full") return;
    if (name == "no-fs") {
        cfg.flags.no_fs = true;
    } else if (name == "no-cp") {
        cfg.flags.no_cp = true;
    } else if (name == "no-adv") {
        cfg.flags.no_adv = true;
    } else if (name == "finetune-only") {
        cfg.flags.finetune_only = true;
    } else if (name == "replay-only") {
        cfg.flags.replay_only = true;
    } else {
        throw config_error("unknown ablation flag \"" + name + "\"");
    }
}

// ---------------------------------------------------------------------------
// report: aggregate completed run directories, grouped by ablation variant.
// ---------------------------------------------------------------------------

struct LoadedRun {
    std::string variant;
    nlohmann::json config;           // with seed and flag fields removed
    std::vector<double> acc_by_checkpoint;
    double mean_drop = 0.0;
    double mean_final_acc = 0.0;
    bool has_analogous = false;
};

LoadedRun load_run_dir(const fs::path& dir) {
    LoadedRun run;
    std::ifstream cfg_in(dir / "config.json");
    if (!cfg_in) throw input_error("report: missing config.json in " + dir.string());
    nlohmann::json cfg;
    try {
        cfg_in >> cfg;
    } catch (const nlohmann::json::exception& e) {
        throw input_error("report: bad config.json: " + std::string(e.what()));
    }
    const TrainConfig parsed = config_from_json_string(cfg.dump());
    run.variant = parsed.flags.label();
    for (const char* key :
         {"seed", "no_fs", "no_cp", "no_adv", "finetune_only", "replay_only"}) {
        cfg.erase(key);
    }
    run.config = std::move(cfg);

    std::ifstream metrics(dir / "metrics.csv");
    if (!metrics) throw input_error("report: missing metrics.csv in " + dir.string());
    std::string line;
    std::getline(metrics, line);  // header
    while (std::getline(metrics, line)) {
        if (line.empty()) continue;
        const auto last_comma = line.find_last_of(',');
        if (last_comma == std::string::npos) {
            throw input_error("report: malformed metrics.csv row in " + dir.string());
        }
        run.acc_by_checkpoint.push_back(std::stod(line.substr(last_comma + 1)));
    }
    if (run.acc_by_checkpoint.empty()) {
        throw input_error("report: empty metrics.csv in " + dir.string());
    }

    std::ifstream analog(dir / "analogous.json");
    if (analog) {
        nlohmann::json a;
        try {
            analog >> a;
            run.mean_drop = a.value("mean_drop", 0.0);
            run.mean_final_acc = a.value("mean_final_acc", 0.0);
            run.has_analogous = a.value("counted", 0) > 0;
        } catch (const nlohmann::json::exception&) {
            run.has_analogous = false;
        }
    }
    return run;
}

int cmd_report(const std::vector<std::string>& run_dirs, const fs::path& out_path) {
    if (run_dirs.empty()) throw input_error("report: no run directories given");
    std::vector<LoadedRun> runs;
    for (const std::string& dir : run_dirs) runs.push_back(load_run_dir(dir));

    for (std::size_t i = 1; i < runs.size(); ++i) {
        if (runs[i].config != runs[0].config) {
            throw input_error("report: mixed configs across runs (" + run_dirs[i] +
                              " differs beyond seed/ablation flags)");
        }
        if (runs[i].acc_by_checkpoint.size() != runs[0].acc_by_checkpoint.size()) {
            throw input_error("report: runs have different checkpoint counts");
        }
    }

    std::map<std::string, std::vector<const LoadedRun*>> groups;
    for (const LoadedRun& r : runs) groups[r.variant].push_back(&r);

    std::ofstream out(out_path);
    if (!out) throw input_error("report: cannot open " + out_path.string());
    out << "section,variant,task_index,metric,mean,std,n,delta_vs_full\n";

    const std::size_t checkpoints = runs[0].acc_by_checkpoint.size();
    std::map<std::string, double> final_means;
    for (const auto& [variant, members] : groups) {
        for (std::size_t j = 0; j < checkpoints; ++j) {
            std::vector<double> accs;
            for (const LoadedRun* r : members) accs.push_back(r->acc_by_checkpoint[j]);
            const SeedStats s = stats(accs);
            out << "accuracy," << variant << "," << (j + 1) << ",acc,"
                << format_double(s.mean) << "," << format_double(s.stddev) << "," << s.n
                << ",\n";
            if (j + 1 == checkpoints) final_means[variant] = s.mean;
        }
    }
    if (final_means.count("full")) {
        for (const auto& [variant, members] : groups) {
            if (variant == "full") continue;
            std::vector<double> finals;
            for (const LoadedRun* r : members) finals.push_back(r->acc_by_checkpoint.back());
            const SeedStats s = stats(finals);
            out << "ablation," << variant << "," << checkpoints << ",final_acc,"
                << format_double(s.mean) << "," << format_double(s.stddev) << "," << s.n << ","
                << format_double(s.mean - final_means.at("full")) << "\n";
        }
    }
    for (const auto& [variant, members] : groups) {
        std::vector<double> drops, finals;
        for (const LoadedRun* r : members) {
            if (!r->has_analogous) continue;
            drops.push_back(r->mean_drop);
            finals.push_back(r->mean_final_acc);
        }
        if (drops.empty()) continue;
        const SeedStats ds = stats(drops);
        const SeedStats fs_ = stats(finals);
        out << "analogous," << variant << ",,drop," << format_double(ds.mean) << ","
            << format_double(ds.stddev) << "," << ds.n << ",\n";
        out << "analogous," << variant << ",,final_acc," << format_double(fs_.mean) << ","
            << format_double(fs_.stddev) << "," << fs_.n << ",\n";
    }
    std::cout << "report written to " << out_path.string() << "\n";
    return 0;
}

nlohmann::json estimate_json(const MiEstimate& e) {
    return nlohmann::json{
        {"raw", e.raw}, {"clamped", e.clamped}, {"degenerate", e.degenerate}};
}

}  // namespace

int dispatch(const std::vector<std::string>& args) {
    CLI::App app{"contcl: class-incremental text classification with fast-slow and "
                 "current-past contrastive replay"};
    app.require_subcommand(1);

    // gen-data ---------------------------------------------------------------
    auto* gen = app.add_subcommand("gen-data", "Generate a synthetic analogous-class corpus");
    std::string gen_spec = "default";
    std::uint64_t gen_seed = 1;
    bool gen_seed_set = false;
    std::string gen_out;
    gen->add_option("--spec", gen_spec, "\"default\" or a SyntheticSpec JSON file")
        ->capture_default_str();
    gen->add_option("--seed", gen_seed, "Generator seed (overrides the spec file)")
        ->capture_default_str()
        ->each([&gen_seed_set](const std::string&) { gen_seed_set = true; });
    gen->add_option("--out", gen_out, "Corpus JSONL path; meta lands next to it")
        ->required();

    // split ------------------------------------------------------------------
    auto* split = app.add_subcommand("split", "Split classes into disjoint tasks");
    std::string split_meta;
    int split_k = 10;
    std::uint64_t split_seed = 1;
    std::string split_out;
    split->add_option("--meta", split_meta, "Dataset meta JSON")->required();
    split->add_option("--k", split_k, "Number of tasks")->capture_default_str();
    split->add_option("--seed", split_seed, "Shuffle seed")->capture_default_str();
    split->add_option("--out", split_out, "Task-split manifest path")->required();

    // train ------------------------------------------------------------------
    auto* train = app.add_subcommand("train", "Run a continual-learning sequence");
    std::string tr_corpus, tr_meta, tr_split, tr_out, tr_config, tr_manifest;
    std::uint64_t tr_seed = 1;
    int tr_seeds = 1;
    bool tr_mi = false;
    bool tr_no_fs = false, tr_no_cp = false, tr_no_adv = false;
    bool tr_finetune = false, tr_replay = false;
    int tr_budget = -1, tr_epochs_new = -1, tr_epochs_replay = -1, tr_batch = -1;
    train->add_option("--corpus", tr_corpus, "Corpus JSONL");
    train->add_option("--meta", tr_meta, "Meta JSON (default: next to corpus)");
    train->add_option("--split", tr_split, "Task-split manifest");
    train->add_option("--out", tr_out, "Output run directory");
    train->add_option("--config", tr_config, "TrainConfig JSON file");
    train->add_option("--seed", tr_seed, "Base seed")->capture_default_str();
    train->add_option("--seeds", tr_seeds, "Fan out this many consecutive seeds")
        ->capture_default_str();
    train->add_flag("--mi", tr_mi, "Measure I(X1;Z1) and final I(Z;Y)");
    train->add_flag("--no-fs", tr_no_fs, "Disable fast-slow contrast");
    train->add_flag("--no-cp", tr_no_cp, "Disable current-past contrast");
    train->add_flag("--no-adv", tr_no_adv, "Disable adversarial augmentation");
    train->add_flag("--finetune-only", tr_finetune, "Sequential finetuning baseline");
    train->add_flag("--replay-only", tr_replay, "Plain replay baseline");
    train->add_option("--budget", tr_budget, "Memory budget per class");
    train->add_option("--epochs-new", tr_epochs_new, "New-task epochs");
    train->add_option("--epochs-replay", tr_epochs_replay, "Replay epochs");
    train->add_option("--batch", tr_batch, "Batch size");
    train->add_option("--from-manifest", tr_manifest,
                      "Re-run an earlier run from its manifest");

    // evaluate ----------------------------------------------------------------
    auto* eval = app.add_subcommand("evaluate", "Evaluate a checkpoint on seen tasks");
    std::string ev_ckpt, ev_corpus, ev_meta, ev_split;
    int ev_upto = -1;
    eval->add_option("--checkpoint", ev_ckpt, "Checkpoint JSON")->required();
    eval->add_option("--corpus", ev_corpus, "Corpus JSONL")->required();
    eval->add_option("--meta", ev_meta, "Meta JSON (default: next to corpus)");
    eval->add_option("--split", ev_split, "Task-split manifest")->required();
    eval->add_option("--upto", ev_upto, "Evaluate tasks 1..J (default: all covered)");

    // ablate -------------------------------------------------------------------
    auto* ablate = app.add_subcommand("ablate", "Run an ablation variant across seeds");
    std::string ab_flag = "full";
    std::string ab_corpus, ab_meta, ab_split, ab_out, ab_config;
    std::uint64_t ab_seed = 1;
    int ab_seeds = 5;
    bool ab_mi = false;
    ablate->add_option("--flag", ab_flag,
                       "full, no-fs, no-cp, no-adv, finetune-only or replay-only")
        ->capture_default_str();
    ablate->add_option("--corpus", ab_corpus, "Corpus JSONL")->required();
    ablate->add_option("--meta", ab_meta, "Meta JSON (default: next to corpus)");
    ablate->add_option("--split", ab_split, "Task-split manifest")->required();
    ablate->add_option("--out", ab_out, "Output directory")->required();
    ablate->add_option("--config", ab_config, "TrainConfig JSON file");
    ablate->add_option("--seed", ab_seed, "Base seed")->capture_default_str();
    ablate->add_option("--seeds", ab_seeds, "Number of seeds")->capture_default_str();
    ablate->add_flag("--mi", ab_mi, "Measure mutual information per run");

    // mi -------------------------------------------------------------------------
    auto* mi = app.add_subcommand("mi", "MINE mutual-information estimation");
    std::string mi_dump, mi_ckpt, mi_corpus, mi_meta, mi_split, mi_mode = "rep-label";
    std::string mi_out;
    int mi_epochs = 200, mi_batch = 128;
    double mi_lr = 0.05;
    std::uint64_t mi_seed = 1;
    mi->add_option("--dump", mi_dump, "Representation dump JSONL (rep-label mode)");
    mi->add_option("--checkpoint", mi_ckpt, "Checkpoint JSON (with --corpus)");
    mi->add_option("--corpus", mi_corpus, "Corpus JSONL");
    mi->add_option("--meta", mi_meta, "Meta JSON (default: next to corpus)");
    mi->add_option("--split", mi_split, "Task-split manifest (input-rep mode)");
    mi->add_option("--mode", mi_mode, "input-rep or rep-label")->capture_default_str();
    mi->add_option("--epochs", mi_epochs, "MINE epochs")->capture_default_str();
    mi->add_option("--batch", mi_batch, "MINE batch size")->capture_default_str();
    mi->add_option("--lr", mi_lr, "MINE learning rate")->capture_default_str();
    mi->add_option("--seed", mi_seed, "Estimation seed")->capture_default_str();
    mi->add_option("--out", mi_out, "Optional JSON output path");

    // report -----------------------------------------------------------------------
    auto* report = app.add_subcommand("report", "Aggregate completed run directories");
    std::vector<std::string> rp_runs;
    std::string rp_out = "report.csv";
    report->add_option("--runs", rp_runs, "Run directories")->required()->expected(-1);
    report->add_option("--out", rp_out, "Aggregate CSV path")->capture_default_str();

    std::vector<std::string> argv_copy = args;
    try {
        std::vector<const char*> argv;
        argv.push_back("contcl");
        for (const std::string& a : argv_copy) argv.push_back(a.c_str());
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& e) {
        std::cout << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    }

    try {
        if (gen->parsed()) {
            SyntheticSpec spec;
            if (gen_spec != "default") spec = spec_from_json_file(gen_spec);
            if (gen_seed_set) spec.seed = gen_seed;
            const fs::path out = resolve_out(gen_out);
            if (out.has_parent_path()) fs::create_directories(out.parent_path());
            const Dataset ds = generate_synthetic(spec);
            save_dataset(out, default_meta_path(out), ds);
            std::cout << "wrote " << out.string() << " ("
                      << ds.train.size() + ds.test.size() << " examples) and "
                      << default_meta_path(out).string() << "\n";
            return 0;
        }

        if (split->parsed()) {
            const Dataset probe = [&] {
                // Only the meta file is needed for class ids and pairs.
                std::ifstream in(split_meta);
                if (!in) throw input_error("split: cannot open " + split_meta);
                nlohmann::json j;
                in >> j;
                Dataset d;
                d.meta.classes = j.at("classes").get<int>();
                d.meta.analogous_pairs =
                    j.at("analogous_pairs").get<std::vector<std::pair<int, int>>>();
                return d;
            }();
            std::vector<int> classes(static_cast<std::size_t>(probe.meta.classes));
            for (int i = 0; i < probe.meta.classes; ++i) classes[static_cast<std::size_t>(i)] = i;
            const TaskSequence seq =
                split_tasks(classes, split_k, split_seed, probe.meta.analogous_pairs);
            const fs::path out = resolve_out(split_out);
            if (out.has_parent_path()) fs::create_directories(out.parent_path());
            save_split(out, seq);
            std::cout << "wrote " << out.string() << " (" << seq.size() << " tasks)\n";
            return 0;
        }

        if (train->parsed()) {
            TrainInputs in;
            if (!tr_manifest.empty()) {
                in = inputs_from_manifest(tr_manifest);
                if (!tr_out.empty()) in.out_dir = resolve_out(tr_out);
            } else {
                if (tr_corpus.empty() || tr_split.empty() || tr_out.empty()) {
                    throw config_error(
                        "train: --corpus, --split and --out are required (or --from-manifest)");
                }
                in.corpus = tr_corpus;
                in.meta = tr_meta.empty() ? default_meta_path(tr_corpus) : fs::path(tr_meta);
                in.split = tr_split;
                in.out_dir = resolve_out(tr_out);
                in.config = tr_config.empty() ? TrainConfig{} : config_from_json_file(tr_config);
                in.measure_mi = tr_mi;
                if (tr_no_fs) in.config.flags.no_fs = true;
                if (tr_no_cp) in.config.flags.no_cp = true;
                if (tr_no_adv) in.config.flags.no_adv = true;
                if (tr_finetune) in.config.flags.finetune_only = true;
                if (tr_replay) in.config.flags.replay_only = true;
                if (tr_budget >= 0) in.config.memory_budget = tr_budget;
                if (tr_epochs_new >= 0) in.config.epochs_new_task = tr_epochs_new;
                if (tr_epochs_replay >= 0) in.config.epochs_replay = tr_epochs_replay;
                if (tr_batch >= 0) in.config.batch_size = tr_batch;
                if (tr_seeds < 1) throw config_error("train: --seeds must be >= 1");
                for (int i = 0; i < tr_seeds; ++i) {
                    in.seeds.push_back(tr_seed + static_cast<std::uint64_t>(i));
                }
            }
            in.config.validate();
            run_training(in);
            return 0;
        }

        if (eval->parsed()) {
            const fs::path meta =
                ev_meta.empty() ? default_meta_path(ev_corpus) : fs::path(ev_meta);
            const Dataset dataset = load_dataset(ev_corpus, meta);
            const TaskSequence seq = load_split(ev_split);
            auto [enc, cls] = load_checkpoint(ev_ckpt);
            TrainerState state{std::move(enc), SlowEncoder{}, std::move(cls),
                               RepresentationQueue(1), MemoryBank(0), PastRepStore{}};

            std::size_t upto = 0;
            if (ev_upto > 0) {
                upto = static_cast<std::size_t>(ev_upto) - 1;
            } else {
                // Largest prefix fully covered by the checkpoint's classes.
                std::size_t covered = 0;
                for (std::size_t t = 0; t < seq.size(); ++t) {
                    bool all = true;
                    for (int c : seq.tasks[t]) all = all && state.classifier.class_index(c) >= 0;
                    if (!all) break;
                    covered = t + 1;
                }
                if (covered == 0) throw input_error("evaluate: checkpoint covers no task");
                upto = covered - 1;
            }
            const CheckpointMetrics m = evaluate(state, dataset, seq, upto);
            nlohmann::json j{{"task_index", m.task_index},
                             {"per_task_acc", m.per_task_acc},
                             {"acc", m.pooled_acc}};
            std::cout << j.dump(2) << "\n";
            return 0;
        }

        if (ablate->parsed()) {
            TrainInputs in;
            in.corpus = ab_corpus;
            in.meta = ab_meta.empty() ? default_meta_path(ab_corpus) : fs::path(ab_meta);
            in.split = ab_split;
            in.out_dir = resolve_out(ab_out);
            in.config = ab_config.empty() ? TrainConfig{} : config_from_json_file(ab_config);
            in.measure_mi = ab_mi;
            apply_flag_name(in.config, ab_flag);
            if (ab_seeds < 1) throw config_error("ablate: --seeds must be >= 1");
            for (int i = 0; i < ab_seeds; ++i) {
                in.seeds.push_back(ab_seed + static_cast<std::uint64_t>(i));
            }
            in.config.validate();
            run_training(in);
            return 0;
        }

        if (mi->parsed()) {
            MineOptions opts;
            opts.epochs = mi_epochs;
            opts.batch = mi_batch;
            opts.lr = mi_lr;
            MiEstimate estimate;
            if (!mi_dump.empty()) {
                std::ifstream in(mi_dump);
                if (!in) throw input_error("mi: cannot open " + mi_dump);
                std::vector<std::pair<int, std::vector<double>>> records;
                std::string line;
                std::size_t line_no = 0;
                while (std::getline(in, line)) {
                    ++line_no;
                    if (line.empty()) continue;
                    try {
                        const nlohmann::json j = nlohmann::json::parse(line);
                        records.emplace_back(j.at("label").get<int>(),
                                             j.at("z").get<std::vector<double>>());
                    } catch (const nlohmann::json::exception& e) {
                        throw parse_error(std::string("bad dump record: ") + e.what(), line_no);
                    }
                }
                estimate = mine_estimate(rep_label_samples(records), opts, mi_seed);
            } else if (!mi_ckpt.empty()) {
                if (mi_corpus.empty()) throw config_error("mi: --corpus required with --checkpoint");
                const fs::path meta =
                    mi_meta.empty() ? default_meta_path(mi_corpus) : fs::path(mi_meta);
                const Dataset dataset = load_dataset(mi_corpus, meta);
                auto [enc, cls] = load_checkpoint(mi_ckpt);
                std::vector<const Example*> examples;
                if (mi_mode == "input-rep") {
                    if (mi_split.empty()) {
                        throw config_error("mi: --split required for input-rep mode");
                    }
                    const TaskSequence seq = load_split(mi_split);
                    for (int c : seq.tasks.at(0)) {
                        for (const Example& e : dataset.test) {
                            if (e.label == c) examples.push_back(&e);
                        }
                    }
                    estimate = measure_representation_mi(enc, examples,
                                                         MiMode::InputRepresentation, opts,
                                                         mi_seed);
                } else if (mi_mode == "rep-label") {
                    for (const Example& e : dataset.test) examples.push_back(&e);
                    estimate = measure_representation_mi(enc, examples,
                                                         MiMode::RepresentationLabel, opts,
                                                         mi_seed);
                } else {
                    throw config_error("mi: --mode must be input-rep or rep-label");
                }
            } else {
                throw config_error("mi: either --dump or --checkpoint is required");
            }
            if (estimate.degenerate) {
                std::cerr << "warning: degenerate (constant) inputs, estimate pinned to 0\n";
            }
            const nlohmann::json j = estimate_json(estimate);
            std::cout << j.dump(2) << "\n";
            if (!mi_out.empty()) {
                std::ofstream out(resolve_out(mi_out));
                out << j.dump(2) << "\n";
            }
            return 0;
        }

        if (report->parsed()) {
            return cmd_report(rp_runs, resolve_out(rp_out));
        }
    } catch (const config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}

}  // namespace contcl::cli
