#include <doctest.h>

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "cli.hpp"
#include "contcl/data.hpp"
#include "contcl/runner.hpp"

namespace fs = std::filesystem;
using contcl::cli::dispatch;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("contcl_cli_test_" + std::to_string(::getpid()) + "_" +
                std::to_string(counter()++));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    static int& counter() {
        static int c = 0;
        return c;
    }
    std::string str(const std::string& name) const { return (path / name).string(); }
};

std::string read_file(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_tiny_spec(const fs::path& p) {
    std::ofstream out(p);
    out << R"({"classes": 4, "analogous_pair_count": 1, "vocab": 40,
               "tokens_per_example": 6, "shared_fraction": 0.8,
               "train_per_class": 10, "test_per_class": 5, "seed": 3})";
}

// gen-data + split, returning (corpus, split) paths.
std::pair<std::string, std::string> prepare_inputs(const TempDir& dir) {
    write_tiny_spec(dir.path / "spec.json");
    REQUIRE(dispatch({"gen-data", "--spec", dir.str("spec.json"), "--seed", "7", "--out",
                      dir.str("corpus.jsonl")}) == 0);
    REQUIRE(dispatch({"split", "--meta", dir.str("corpus.meta.json"), "--k", "2", "--seed",
                      "5", "--out", dir.str("split.json")}) == 0);
    return {dir.str("corpus.jsonl"), dir.str("split.json")};
}

std::vector<std::string> tiny_train_args(const TempDir& dir, const std::string& corpus,
                                         const std::string& split, const std::string& out,
                                         std::vector<std::string> extra = {}) {
    std::vector<std::string> args{
        "train",          "--corpus", corpus,       "--split",        split,
        "--out",          dir.str(out), "--seed",   "3",
        "--epochs-new",   "2",        "--epochs-replay", "2",
        "--batch",        "8",        "--budget",   "3"};
    args.insert(args.end(), extra.begin(), extra.end());
    return args;
}

}  // namespace

TEST_CASE("gen-data writes corpus and meta") {
    TempDir dir;
    write_tiny_spec(dir.path / "spec.json");
    CHECK(dispatch({"gen-data", "--spec", dir.str("spec.json"), "--seed", "7", "--out",
                    dir.str("corpus.jsonl")}) == 0);
    CHECK(fs::exists(dir.path / "corpus.jsonl"));
    CHECK(fs::exists(dir.path / "corpus.meta.json"));
    const contcl::Dataset ds =
        contcl::load_dataset(dir.path / "corpus.jsonl", dir.path / "corpus.meta.json");
    CHECK(ds.meta.classes == 4);
    CHECK(ds.train.size() == 40);
}

TEST_CASE("unknown flags and subcommands are usage errors") {
    CHECK(dispatch({"frobnicate"}) == 2);
    CHECK(dispatch({"gen-data", "--bogus", "1"}) == 2);
    CHECK(dispatch({}) == 2);
}

TEST_CASE("bad config values exit with code 3") {
    TempDir dir;
    auto [corpus, split] = prepare_inputs(dir);
    std::ofstream(dir.path / "bad.json") << R"({"lambda1": -0.5})";
    CHECK(dispatch({"train", "--corpus", corpus, "--split", split, "--out", dir.str("run"),
                    "--config", dir.str("bad.json")}) == 3);
    std::ofstream(dir.path / "unknown.json") << R"({"nope": 1})";
    CHECK(dispatch({"train", "--corpus", corpus, "--split", split, "--out", dir.str("run"),
                    "--config", dir.str("unknown.json")}) == 3);
}

TEST_CASE("missing inputs exit with code 1") {
    TempDir dir;
    CHECK(dispatch({"split", "--meta", dir.str("nope.json"), "--out",
                    dir.str("split.json")}) == 1);
}

TEST_CASE("train writes the full run directory and evaluate reads it back") {
    TempDir dir;
    auto [corpus, split] = prepare_inputs(dir);
    REQUIRE(dispatch(tiny_train_args(dir, corpus, split, "run")) == 0);

    for (const char* name : {"manifest.json", "config.json", "metrics.csv", "class_acc.csv",
                             "reps.jsonl", "memory.json", "past_reps.jsonl",
                             "checkpoint.json", "analogous.json", "summary.json"}) {
        INFO(name);
        CHECK(fs::exists(dir.path / "run" / name));
    }
    CHECK(dispatch({"evaluate", "--checkpoint", dir.str("run/checkpoint.json"), "--corpus",
                    corpus, "--split", split}) == 0);
}

TEST_CASE("rerunning from the manifest reproduces metrics byte-for-byte") {
    TempDir dir;
    auto [corpus, split] = prepare_inputs(dir);
    REQUIRE(dispatch(tiny_train_args(dir, corpus, split, "run")) == 0);
    REQUIRE(dispatch({"train", "--from-manifest", dir.str("run/manifest.json"), "--out",
                      dir.str("rerun")}) == 0);
    CHECK(read_file(dir.path / "run" / "metrics.csv") ==
          read_file(dir.path / "rerun" / "metrics.csv"));
    CHECK(read_file(dir.path / "run" / "class_acc.csv") ==
          read_file(dir.path / "rerun" / "class_acc.csv"));
}

TEST_CASE("ablate fans out seeds and aggregates") {
    TempDir dir;
    auto [corpus, split] = prepare_inputs(dir);
    REQUIRE(dispatch({"ablate", "--flag", "no-fs", "--corpus", corpus, "--split", split,
                      "--out", dir.str("ab"), "--epochs-new", "1"}) == 2);  // unknown option
    REQUIRE(dispatch({"ablate", "--flag", "no-fs", "--corpus", corpus, "--split", split,
                      "--out", dir.str("ab"), "--seeds", "2", "--seed", "4"}) == 0);
    CHECK(fs::exists(dir.path / "ab" / "seed_4" / "metrics.csv"));
    CHECK(fs::exists(dir.path / "ab" / "seed_5" / "metrics.csv"));
    CHECK(fs::exists(dir.path / "ab" / "aggregate.csv"));
    CHECK(dispatch({"ablate", "--flag", "bogus", "--corpus", corpus, "--split", split,
                    "--out", dir.str("ab2")}) == 3);
}

TEST_CASE("report aggregates runs and rejects mixed configs") {
    TempDir dir;
    auto [corpus, split] = prepare_inputs(dir);
    REQUIRE(dispatch(tiny_train_args(dir, corpus, split, "runs/a")) == 0);
    REQUIRE(dispatch(tiny_train_args(dir, corpus, split, "runs/b",
                                     {"--replay-only"})) == 0);
    REQUIRE(dispatch({"report", "--runs", dir.str("runs/a"), dir.str("runs/b"), "--out",
                      dir.str("report.csv")}) == 0);
    const std::string report = read_file(dir.path / "report.csv");
    CHECK(report.find("accuracy,full") != std::string::npos);
    CHECK(report.find("accuracy,replay-only") != std::string::npos);
    CHECK(report.find("ablation,replay-only") != std::string::npos);

    // A run with a different batch size is a mixed-config error.
    REQUIRE(dispatch(tiny_train_args(dir, corpus, split, "runs/c", {"--batch", "4"})) == 0);
    CHECK(dispatch({"report", "--runs", dir.str("runs/a"), dir.str("runs/c"), "--out",
                    dir.str("report2.csv")}) == 1);
}

TEST_CASE("single-run report has an all-zero std column") {
    TempDir dir;
    auto [corpus, split] = prepare_inputs(dir);
    REQUIRE(dispatch(tiny_train_args(dir, corpus, split, "solo")) == 0);
    REQUIRE(dispatch({"report", "--runs", dir.str("solo"), "--out",
                      dir.str("solo_report.csv")}) == 0);
    std::ifstream in(dir.path / "solo_report.csv");
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
        if (line.rfind("accuracy,", 0) != 0) continue;
        // section,variant,task_index,metric,mean,std,n,delta
        std::stringstream ss(line);
        std::string field;
        for (int i = 0; i < 6; ++i) std::getline(ss, field, ',');
        CHECK(field == "0");
    }
}

TEST_CASE("mi runs on a representation dump") {
    TempDir dir;
    auto [corpus, split] = prepare_inputs(dir);
    REQUIRE(dispatch(tiny_train_args(dir, corpus, split, "run")) == 0);
    CHECK(dispatch({"mi", "--dump", dir.str("run/reps.jsonl"), "--epochs", "10", "--out",
                    dir.str("mi.json")}) == 0);
    CHECK(fs::exists(dir.path / "mi.json"));
    CHECK(dispatch({"mi"}) == 3);  // neither --dump nor --checkpoint
}
