// Command-line front end: segment transcripts, score hypotheses against
// hierarchical annotations, print corpus statistics, run corpus evaluations.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "treeseg/baselines.hpp"
#include "treeseg/core.hpp"
#include "treeseg/embedding.hpp"
#include "treeseg/evalharness.hpp"
#include "treeseg/ingest.hpp"
#include "treeseg/metrics.hpp"
#include "treeseg/remote.hpp"

namespace {

struct EmbedOptions {
    std::string backend = "hash";
    int dim = 64;
    std::string url;
    std::string model = "text-embedding-ada-002";
    std::string cache_path;
    int window = 5;
    int batch = 64;
    int in_flight = 4;
    bool include_speakers = false;
};

void add_embed_flags(CLI::App* cmd, EmbedOptions& opts) {
    cmd->add_option("--window", opts.window, "Utterance block width W")->capture_default_str();
    cmd->add_option("--backend", opts.backend, "Embedding backend: hash or remote")
        ->check(CLI::IsMember({"hash", "remote"}))
        ->capture_default_str();
    cmd->add_option("--dim", opts.dim, "Hash backend dimension")->capture_default_str();
    cmd->add_option("--embed-url", opts.url, "Embeddings endpoint URL (remote backend)");
    cmd->add_option("--embed-model", opts.model, "Embedding model id")->capture_default_str();
    cmd->add_option("--cache", opts.cache_path, "Embedding cache file (JSONL)");
    cmd->add_option("--batch", opts.batch, "Texts per embeddings request")->capture_default_str();
    cmd->add_option("--in-flight", opts.in_flight, "Max concurrent embedding batches")
        ->capture_default_str();
    cmd->add_flag("--embed-speakers", opts.include_speakers,
                  "Prepend speaker labels to embedded block text");
}

std::unique_ptr<treeseg::EmbeddingBackend> make_backend(const EmbedOptions& opts) {
    if (opts.backend == "hash")
        return std::make_unique<treeseg::HashEmbeddingBackend>(opts.dim);
    treeseg::RemoteConfig cfg;
    cfg.url = opts.url;
    cfg.model_id = opts.model;
    if (const char* key = std::getenv("TREESEG_EMBED_KEY")) cfg.api_key = key;
    if (cfg.url.empty())
        throw treeseg::ConfigError("remote backend needs --embed-url");
    return std::make_unique<treeseg::RemoteEmbeddingBackend>(cfg);
}

treeseg::EmbedConfig embed_config(const EmbedOptions& opts) {
    treeseg::EmbedConfig cfg;
    cfg.window = opts.window;
    cfg.batch_size = opts.batch;
    cfg.max_in_flight = opts.in_flight;
    cfg.include_speakers = opts.include_speakers;
    return cfg;
}

std::optional<treeseg::TranscriptFormat> parse_format(const std::string& name) {
    if (name == "auto") return std::nullopt;
    if (name == "jsonl") return treeseg::TranscriptFormat::jsonl;
    return treeseg::TranscriptFormat::text;
}

int run_segment(const std::string& input, const std::string& format_name,
                const std::string& method, int k, int min_size, uint64_t seed,
                const std::string& split_score, const EmbedOptions& embed_opts,
                const std::string& out_path) {
    treeseg::Timeline timeline = treeseg::load_transcript(input, parse_format(format_name));

    if (method == "equi" || method == "random") {
        if (k < 1) throw treeseg::ConfigError("--k is required for the " + method + " baseline");
        treeseg::FlatPartition part = method == "equi"
                                          ? treeseg::equi_seg(timeline.size(), k)
                                          : treeseg::random_seg(timeline.size(), k, seed);
        std::ofstream out(out_path, std::ios::trunc);
        if (!out) throw treeseg::ConfigError("cannot write " + out_path);
        out << treeseg::flat_to_json(part).dump(2) << '\n';
        std::cout << method << ": " << part.size() << " segments -> " << out_path << "\n";
        return 0;
    }

    std::unique_ptr<treeseg::EmbeddingBackend> backend = make_backend(embed_opts);
    treeseg::EmbeddingCache cache;
    if (!embed_opts.cache_path.empty()) cache.load(embed_opts.cache_path);
    treeseg::EmbeddingTimeline embeddings = treeseg::embed_timeline(
        timeline, *backend, embed_opts.cache_path.empty() ? nullptr : &cache,
        embed_config(embed_opts));
    if (!embed_opts.cache_path.empty()) cache.save(embed_opts.cache_path);

    int k_max = k >= 1 ? k : timeline.size();
    treeseg::PartitionTree tree = treeseg::divide(embeddings, k_max, min_size, nullptr,
                                                  treeseg::split_score_from_string(split_score));
    std::ofstream out(out_path, std::ios::trunc);
    if (!out) throw treeseg::ConfigError("cannot write " + out_path);
    out << tree.to_json().dump(2) << '\n';
    std::cout << "treeseg: " << tree.leaf_count() << " leaves -> " << out_path << "\n";
    return 0;
}

int run_score(const std::string& ref_path, const std::string& hyp_path, int k_override,
              int min_size) {
    std::ifstream hyp_in(hyp_path);
    if (!hyp_in) throw treeseg::ParseError("cannot open hypothesis file " + hyp_path);
    nlohmann::json hyp_json = nlohmann::json::parse(hyp_in, nullptr, false);
    if (hyp_json.is_discarded())
        throw treeseg::ParseError("hypothesis file is not valid JSON");

    std::optional<treeseg::PartitionTree> hyp_tree;
    std::optional<treeseg::FlatPartition> hyp_flat;
    int total;
    if (hyp_json.contains("root")) {
        hyp_tree = treeseg::PartitionTree::from_json(hyp_json);
        total = hyp_tree->total();
    } else {
        hyp_flat = treeseg::flat_from_json(hyp_json);
        total = hyp_flat->total;
    }

    treeseg::GroundTruthTree gt = treeseg::load_annotation(ref_path, total);
    std::optional<int> k = k_override >= 1 ? std::optional<int>(k_override) : std::nullopt;

    double pk_sum = 0.0, wd_sum = 0.0;
    int rows = 0;
    for (const treeseg::LevelQuery& q :
         treeseg::ground_truth_levels(gt, min_size)) {
        treeseg::BoundarySeq ref_b = treeseg::BoundarySeq::from_partition(q.reference);
        treeseg::FlatPartition hyp_part =
            hyp_tree ? hyp_tree->leaves_at_k(std::min(q.k, hyp_tree->leaf_count())) : *hyp_flat;
        treeseg::BoundarySeq hyp_b = treeseg::BoundarySeq::from_partition(hyp_part);
        double p = treeseg::pk(ref_b, hyp_b, k);
        double w = treeseg::windiff(ref_b, hyp_b, k);
        std::printf("level %d  K=%-4d Pk=%.4f  WinDiff=%.4f\n", q.level, q.k, p, w);
        pk_sum += p;
        wd_sum += w;
        ++rows;
    }
    if (rows == 0) {
        std::cout << "no scoreable levels (all collapse to one segment after pruning)\n";
        return 1;
    }
    std::printf("overall  Pk=%.4f  WinDiff=%.4f  (%d levels)\n", pk_sum / rows, wd_sum / rows,
                rows);
    return 0;
}

int run_stats(const std::string& corpus_dir, int min_size) {
    std::vector<std::string> warnings;
    treeseg::Corpus corpus = treeseg::load_corpus(corpus_dir, &warnings);
    for (const std::string& w : warnings) std::cerr << "warning: " << w << "\n";
    treeseg::CorpusStats stats = treeseg::corpus_stats(corpus, min_size);
    stats.skipped = static_cast<int>(warnings.size());
    std::cout << treeseg::render_stats_table(stats);
    return 0;
}

int run_eval(const std::string& corpus_dir, const std::vector<std::string>& methods,
             int min_size, uint64_t seed, int random_reps, bool include_dev,
             const std::string& dataset, const std::string& split_score,
             const EmbedOptions& embed_opts, const std::string& out_path,
             const std::vector<int>& tune_windows) {
    std::vector<std::string> warnings;
    treeseg::Corpus corpus = treeseg::load_corpus(corpus_dir, &warnings);
    if (!dataset.empty()) corpus.dataset = dataset;
    for (const std::string& w : warnings) std::cerr << "warning: " << w << "\n";

    treeseg::EvalConfig config;
    config.methods = methods;
    config.window = embed_opts.window;
    config.min_size = min_size;
    config.seed = seed;
    config.random_reps = random_reps;
    config.include_dev = include_dev;
    config.split_score = treeseg::split_score_from_string(split_score);

    std::unique_ptr<treeseg::EmbeddingBackend> backend;
    treeseg::EmbeddingCache cache;
    bool wants_treeseg =
        std::find(methods.begin(), methods.end(), "treeseg") != methods.end();
    if (wants_treeseg || !tune_windows.empty()) {
        backend = make_backend(embed_opts);
        if (!embed_opts.cache_path.empty()) cache.load(embed_opts.cache_path);
    }
    auto embed_item = [&](const treeseg::CorpusItem& item, int window) {
        treeseg::EmbedConfig cfg = embed_config(embed_opts);
        cfg.window = window;
        return treeseg::embed_timeline(item.timeline, *backend,
                                       embed_opts.cache_path.empty() ? nullptr : &cache, cfg);
    };

    if (!tune_windows.empty()) {
        treeseg::TuneResult tuned = treeseg::tune_window(corpus, tune_windows, config, embed_item);
        std::cout << "window tuning (dev split, mean TreeSeg Pk):\n";
        for (const auto& [w, score] : tuned.dev_pk)
            std::printf("  W=%-3d Pk=%.4f\n", w, score);
        std::cout << "selected W=" << tuned.best_window << "\n";
        config.window = tuned.best_window;
    }

    treeseg::EvalReport report = treeseg::evaluate_corpus(
        corpus, config,
        [&](const treeseg::CorpusItem& item) { return embed_item(item, config.window); });
    if (!embed_opts.cache_path.empty() && backend) cache.save(embed_opts.cache_path);

    for (const std::string& w : report.warnings) std::cerr << "warning: " << w << "\n";
    std::cout << treeseg::render_overall_table(report) << "\n"
              << treeseg::render_level_table(report);
    if (!out_path.empty()) {
        treeseg::write_report(report, out_path);
        std::cout << "report -> " << out_path << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hierarchical topic segmentation of transcripts by divisive clustering"};
    app.require_subcommand(1);

    // segment
    auto* segment = app.add_subcommand("segment", "Segment one transcript");
    std::string seg_input, seg_format = "auto", seg_method = "treeseg", seg_out = "tree.json";
    std::string seg_split_score = "gain";
    int seg_k = 0, seg_min_size = 5;
    uint64_t seg_seed = 0;
    EmbedOptions seg_embed;
    segment->add_option("--input", seg_input, "Transcript file (JSONL records or plain text)")
        ->required();
    segment->add_option("--format", seg_format, "Input format: auto, jsonl, text")
        ->check(CLI::IsMember({"auto", "jsonl", "text"}))
        ->capture_default_str();
    segment->add_option("--method", seg_method, "treeseg, equi or random")
        ->check(CLI::IsMember({"treeseg", "equi", "random"}))
        ->capture_default_str();
    segment->add_option("--k", seg_k, "Target segment count (0 = divide until the size rule)")
        ->capture_default_str();
    segment->add_option("--min-size", seg_min_size, "Minimum viable segment size M")
        ->capture_default_str();
    segment->add_option("--seed", seg_seed, "Seed for the random baseline")
        ->capture_default_str();
    segment->add_option("--split-score", seg_split_score,
                        "Leaf scoring for divisions: gain or loss")
        ->check(CLI::IsMember({"gain", "loss"}))
        ->capture_default_str();
    segment->add_option("--out", seg_out, "Output file")->capture_default_str();
    add_embed_flags(segment, seg_embed);

    // score
    auto* score = app.add_subcommand("score", "Score a hypothesis against an annotation");
    std::string score_ref, score_hyp;
    int score_k = 0, score_min_size = 5;
    score->add_option("--ref", score_ref, "Ground-truth annotation file")->required();
    score->add_option("--hyp", score_hyp, "Hypothesis: tree JSON or flat partition JSON")
        ->required();
    score->add_option("--k", score_k, "Probe width override (0 = per-level default)")
        ->capture_default_str();
    score->add_option("--min-size", score_min_size, "Pruning threshold for ground truth")
        ->capture_default_str();

    // stats
    auto* stats = app.add_subcommand("stats", "Corpus annotation statistics");
    std::string stats_corpus;
    int stats_min_size = 5;
    stats->add_option("--corpus", stats_corpus, "Corpus directory")->required();
    stats->add_option("--min-size", stats_min_size, "Pruning threshold")->capture_default_str();

    // eval
    auto* eval = app.add_subcommand("eval", "Evaluate methods over a corpus");
    std::string eval_corpus, eval_out, eval_dataset, eval_split_score = "gain";
    std::vector<std::string> eval_methods{"treeseg", "equi", "random"};
    std::vector<int> eval_tune;
    int eval_min_size = 5, eval_reps = 100;
    uint64_t eval_seed = 0;
    bool eval_include_dev = false;
    EmbedOptions eval_embed;
    eval->add_option("--corpus", eval_corpus, "Corpus directory")->required();
    eval->add_option("--methods", eval_methods, "Methods to evaluate")
        ->delimiter(',')
        ->capture_default_str();
    eval->add_option("--min-size", eval_min_size, "Pruning threshold and TreeSeg M")
        ->capture_default_str();
    eval->add_option("--seed", eval_seed, "Master seed for RandomSeg")->capture_default_str();
    eval->add_option("--random-reps", eval_reps, "RandomSeg repetitions per row")
        ->capture_default_str();
    eval->add_flag("--include-dev", eval_include_dev, "Count dev transcripts in aggregates");
    eval->add_option("--dataset", eval_dataset, "Dataset name override for the report");
    eval->add_option("--out", eval_out, "Report output file (JSON)");
    eval->add_option("--tune-window", eval_tune, "Candidate windows for dev-split tuning")
        ->delimiter(',');
    eval->add_option("--split-score", eval_split_score,
                     "Leaf scoring for divisions: gain or loss")
        ->check(CLI::IsMember({"gain", "loss"}))
        ->capture_default_str();
    add_embed_flags(eval, eval_embed);

    CLI11_PARSE(app, argc, argv);

    try {
        if (segment->parsed())
            return run_segment(seg_input, seg_format, seg_method, seg_k, seg_min_size, seg_seed,
                               seg_split_score, seg_embed, seg_out);
        if (score->parsed()) return run_score(score_ref, score_hyp, score_k, score_min_size);
        if (stats->parsed()) return run_stats(stats_corpus, stats_min_size);
        if (eval->parsed())
            return run_eval(eval_corpus, eval_methods, eval_min_size, eval_seed, eval_reps,
                            eval_include_dev, eval_dataset, eval_split_score, eval_embed,
                            eval_out, eval_tune);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
