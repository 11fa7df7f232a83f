#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <fstream>

#include <json.hpp>

#include "treeseg/core.hpp"
#include "treeseg/evalharness.hpp"
#include "treeseg/ingest.hpp"

#include "test_support.hpp"

using namespace treeseg;
using testsupport::TmpDir;

namespace {

const std::string kCli = TREESEG_CLI_PATH;

struct RunResult {
    int exit_code;
    std::string output;
};

RunResult run_cli(const TmpDir& dir, const std::string& args) {
    std::filesystem::path log = dir.path() / "cli_output.txt";
    std::string cmd = "\"" + kCli + "\" " + args + " > \"" + log.string() + "\" 2>&1";
    int status = std::system(cmd.c_str());
    int code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return {code, testsupport::read_file(log)};
}

void write_item(const std::filesystem::path& dir, const std::string& id, int len,
                const std::vector<int>& cuts) {
    std::ofstream t(dir / (id + ".jsonl"));
    write_transcript(t, testsupport::synthetic_timeline(len, id));
    std::ofstream a(dir / (id + ".annotation.json"));
    write_annotation(a, testsupport::depth1_tree(FlatPartition::from_boundaries(len, cuts)));
}

}  // namespace

TEST_CASE("segment subcommand writes a loadable tree and a reusable cache") {
    TmpDir dir("cli_segment");
    write_item(dir.path(), "t0", 40, {20});
    std::string base = "segment --input \"" + (dir.path() / "t0.jsonl").string() +
                       "\" --backend hash --dim 16 --window 2 --min-size 5 --cache \"" +
                       (dir.path() / "cache.jsonl").string() + "\"";

    RunResult first = run_cli(dir, base + " --out \"" + (dir.path() / "a.json").string() + "\"");
    CHECK(first.exit_code == 0);
    PartitionTree tree = PartitionTree::from_json(
        nlohmann::json::parse(testsupport::read_file(dir.path() / "a.json")));
    CHECK(tree.total() == 40);
    CHECK(tree.leaf_count() >= 2);
    for (const Segment& s : tree.leaves().segments) CHECK(s.size() >= 5);

    std::string cache_once = testsupport::read_file(dir.path() / "cache.jsonl");
    CHECK_FALSE(cache_once.empty());

    // Second run: identical tree bytes, unchanged cache bytes.
    RunResult second = run_cli(dir, base + " --out \"" + (dir.path() / "b.json").string() + "\"");
    CHECK(second.exit_code == 0);
    CHECK(testsupport::read_file(dir.path() / "a.json") ==
          testsupport::read_file(dir.path() / "b.json"));
    CHECK(testsupport::read_file(dir.path() / "cache.jsonl") == cache_once);
}

TEST_CASE("segment supports plain text input and the --k cap") {
    TmpDir dir("cli_text");
    std::ofstream in(dir.path() / "plain.txt");
    for (int i = 0; i < 30; ++i) in << "line number " << i << "\n";
    in.close();
    RunResult res = run_cli(dir, "segment --input \"" + (dir.path() / "plain.txt").string() +
                                     "\" --backend hash --dim 8 --min-size 3 --k 3 --out \"" +
                                     (dir.path() / "tree.json").string() + "\"");
    CHECK(res.exit_code == 0);
    PartitionTree tree = PartitionTree::from_json(
        nlohmann::json::parse(testsupport::read_file(dir.path() / "tree.json")));
    CHECK(tree.leaf_count() <= 3);
}

TEST_CASE("baseline segmentation writes flat partition files") {
    TmpDir dir("cli_baseline");
    write_item(dir.path(), "t0", 24, {12});
    RunResult equi = run_cli(dir, "segment --input \"" + (dir.path() / "t0.jsonl").string() +
                                      "\" --method equi --k 3 --out \"" +
                                      (dir.path() / "flat.json").string() + "\"");
    CHECK(equi.exit_code == 0);
    FlatPartition p =
        flat_from_json(nlohmann::json::parse(testsupport::read_file(dir.path() / "flat.json")));
    CHECK(p.segments == std::vector<Segment>{{0, 8}, {8, 16}, {16, 24}});

    // Baselines require --k.
    RunResult missing_k = run_cli(dir, "segment --input \"" +
                                           (dir.path() / "t0.jsonl").string() +
                                           "\" --method random --out \"" +
                                           (dir.path() / "r.json").string() + "\"");
    CHECK(missing_k.exit_code != 0);
}

TEST_CASE("score subcommand prints per-level and overall metrics") {
    TmpDir dir("cli_score");
    write_item(dir.path(), "t0", 40, {20});
    // A perfectly matching flat hypothesis.
    std::ofstream hyp(dir.path() / "hyp.json");
    hyp << flat_to_json(FlatPartition::from_boundaries(40, {20})).dump();
    hyp.close();
    RunResult res = run_cli(dir, "score --ref \"" +
                                     (dir.path() / "t0.annotation.json").string() +
                                     "\" --hyp \"" + (dir.path() / "hyp.json").string() + "\"");
    CHECK(res.exit_code == 0);
    CHECK(res.output.find("level 1") != std::string::npos);
    CHECK(res.output.find("Pk=0.0000") != std::string::npos);
    CHECK(res.output.find("overall") != std::string::npos);
}

TEST_CASE("score accepts tree hypotheses") {
    TmpDir dir("cli_score_tree");
    write_item(dir.path(), "t0", 40, {20});
    PartitionTree tree = PartitionTree::single_leaf(40, 5);
    tree.split_leaf(0, 20, 0);
    std::ofstream hyp(dir.path() / "tree.json");
    hyp << tree.to_json().dump();
    hyp.close();
    RunResult res = run_cli(dir, "score --ref \"" +
                                     (dir.path() / "t0.annotation.json").string() +
                                     "\" --hyp \"" + (dir.path() / "tree.json").string() + "\"");
    CHECK(res.exit_code == 0);
    CHECK(res.output.find("WinDiff=0.0000") != std::string::npos);
}

TEST_CASE("stats subcommand renders the corpus table") {
    TmpDir dir("cli_stats");
    write_item(dir.path(), "t0", 30, {15});
    write_item(dir.path(), "t1", 50, {10, 30});
    RunResult res = run_cli(dir, "stats --corpus \"" + dir.path().string() + "\"");
    CHECK(res.exit_code == 0);
    CHECK(res.output.find("transcripts: 2") != std::string::npos);
    CHECK(res.output.find("L1") != std::string::npos);
}

TEST_CASE("eval subcommand writes a reproducible report") {
    TmpDir dir("cli_eval");
    std::filesystem::path corpus = dir.path() / "corpus";
    std::filesystem::create_directories(corpus);
    for (int i = 0; i < 3; ++i)
        write_item(corpus, "t" + std::to_string(i), 60 + 10 * i, {25, 45});

    std::string cmd = "eval --corpus \"" + corpus.string() +
                      "\" --methods treeseg,equi,random --backend hash --dim 8 --window 1 "
                      "--seed 7 --random-reps 10 --include-dev --out \"" +
                      (dir.path() / "report.json").string() + "\"";
    RunResult res = run_cli(dir, cmd);
    CHECK(res.exit_code == 0);
    CHECK(res.output.find("treeseg") != std::string::npos);
    EvalReport report = read_report(dir.path() / "report.json");
    CHECK(report.rows.size() == 9);  // 3 transcripts x 1 level x 3 methods
    std::string bytes_a = testsupport::read_file(dir.path() / "report.json");

    RunResult rerun = run_cli(dir, cmd);
    CHECK(rerun.exit_code == 0);
    CHECK(testsupport::read_file(dir.path() / "report.json") == bytes_a);
}

TEST_CASE("bad invocations exit nonzero") {
    TmpDir dir("cli_bad");
    CHECK(run_cli(dir, "segment").exit_code != 0);
    CHECK(run_cli(dir, "score --ref missing.json --hyp missing.json").exit_code != 0);
    CHECK(run_cli(dir, "eval --corpus /nonexistent --methods equi").exit_code != 0);
    CHECK(run_cli(dir, "nonsense").exit_code != 0);
}
