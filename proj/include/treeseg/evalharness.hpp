#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "treeseg/baselines.hpp"
#include "treeseg/common.hpp"
#include "treeseg/core.hpp"
#include "treeseg/ingest.hpp"
#include "treeseg/metrics.hpp"
#include "treeseg/partition.hpp"

namespace treeseg {

// TreeSeg behind the Segmenter interface: the partition tree is built once,
// at the largest K the caller will request; every resolution is then served
// by replaying the division sequence.
class TreeSegmenter : public Segmenter {
public:
    TreeSegmenter(EmbeddingTimeline embeddings, int min_segment,
                  SplitScore score = SplitScore::gain)
        : embeddings_(std::move(embeddings)), min_segment_(min_segment), score_(score) {}

    // Wraps an already-built tree (a loaded tree file, a hand-built tree).
    explicit TreeSegmenter(PartitionTree tree) : tree_(std::move(tree)) {}

    std::string name() const override { return "treeseg"; }

    void prepare(int max_k) override {
        if (!tree_) tree_ = divide(*embeddings_, std::max(1, max_k), min_segment_, nullptr, score_);
    }

    FlatPartition query(int k) override {
        if (k < 1) throw std::invalid_argument("K must be >= 1");
        if (!tree_) prepare(k);
        return tree_->leaves_at_k(std::min(k, tree_->leaf_count()));
    }

    const PartitionTree& tree() const {
        if (!tree_) throw Error("tree not built yet; call prepare()");
        return *tree_;
    }

private:
    std::optional<EmbeddingTimeline> embeddings_;
    int min_segment_ = 5;
    SplitScore score_ = SplitScore::gain;
    std::optional<PartitionTree> tree_;
};

// ---------------------------------------------------------------------------
// The per-depth evaluation protocol
// ---------------------------------------------------------------------------

struct LevelQuery {
    int level = 0;
    int k = 0;                 // ground-truth K after pruning
    FlatPartition reference;   // pruned ground-truth partition at this level
};

// Derives the pruned ground-truth flat partition for every level 1..D(P).
// Levels whose pruned partition collapses to a single segment carry no signal
// and are skipped; *skipped_levels counts them.
inline std::vector<LevelQuery> ground_truth_levels(const GroundTruthTree& gt, int min_size,
                                                   int* skipped_levels = nullptr) {
    std::vector<LevelQuery> levels;
    for (int tau = 1; tau <= gt.depth(); ++tau) {
        FlatPartition pruned = prune_flat(flatten_at_depth(gt, tau), min_size);
        if (pruned.size() < 2) {
            if (skipped_levels) ++*skipped_levels;
            continue;
        }
        levels.push_back({tau, pruned.size(), std::move(pruned)});
    }
    return levels;
}

struct EvalRow {
    std::string transcript_id;
    int level = 0;
    std::string method;
    int k_requested = 0;
    int k_attained = 0;  // < k_requested when size constraints bind
    double pk = 0.0;
    double windiff = 0.0;
    bool dev = false;

    bool shortfall() const { return k_attained < k_requested; }
    bool operator==(const EvalRow&) const = default;
};

// Queries the segmenter with the ground-truth K of every level and scores the
// result against the pruned ground-truth partition. Rows where the segmenter
// could not reach K are emitted with the attained K, never dropped.
inline std::vector<EvalRow> evaluate_transcript(const std::string& transcript_id,
                                                Segmenter& segmenter, const GroundTruthTree& gt,
                                                int min_size = 5,
                                                int* skipped_levels = nullptr) {
    std::vector<LevelQuery> levels = ground_truth_levels(gt, min_size, skipped_levels);
    if (levels.empty()) return {};
    int max_k = 0;
    for (const LevelQuery& q : levels) max_k = std::max(max_k, q.k);
    segmenter.prepare(max_k);

    std::vector<EvalRow> rows;
    rows.reserve(levels.size());
    for (const LevelQuery& q : levels) {
        FlatPartition hyp = segmenter.query(q.k);
        BoundarySeq ref_b = BoundarySeq::from_partition(q.reference);
        BoundarySeq hyp_b = BoundarySeq::from_partition(hyp);
        EvalRow row;
        row.transcript_id = transcript_id;
        row.level = q.level;
        row.method = segmenter.name();
        row.k_requested = q.k;
        row.k_attained = hyp.size();
        row.pk = pk(ref_b, hyp_b);
        row.windiff = windiff(ref_b, hyp_b);
        rows.push_back(std::move(row));
    }
    return rows;
}

// Seed schedule for RandomSeg repetitions: reproducible bit-for-bit given the
// master seed, yet decorrelated across transcripts, levels and repetitions.
inline uint64_t rep_seed(uint64_t master, const std::string& transcript_id, int level, int rep) {
    std::string material = transcript_id;
    material += ':';
    material += std::to_string(level);
    material += ':';
    material += std::to_string(rep);
    return master ^ fnv1a64(material);
}

// RandomSeg rows: `reps` seeded draws per level, metrics averaged.
inline std::vector<EvalRow> evaluate_random_averaged(const std::string& transcript_id,
                                                     const GroundTruthTree& gt, int min_size,
                                                     uint64_t master_seed, int reps,
                                                     int* skipped_levels = nullptr) {
    if (reps < 1) throw std::invalid_argument("repetitions must be >= 1");
    std::vector<LevelQuery> levels = ground_truth_levels(gt, min_size, skipped_levels);
    std::vector<EvalRow> rows;
    rows.reserve(levels.size());
    int total = gt.timeline_len();
    for (const LevelQuery& q : levels) {
        BoundarySeq ref_b = BoundarySeq::from_partition(q.reference);
        double pk_sum = 0.0, wd_sum = 0.0;
        for (int r = 0; r < reps; ++r) {
            FlatPartition hyp =
                random_seg(total, q.k, rep_seed(master_seed, transcript_id, q.level, r));
            BoundarySeq hyp_b = BoundarySeq::from_partition(hyp);
            pk_sum += pk(ref_b, hyp_b);
            wd_sum += windiff(ref_b, hyp_b);
        }
        EvalRow row;
        row.transcript_id = transcript_id;
        row.level = q.level;
        row.method = "random";
        row.k_requested = q.k;
        row.k_attained = q.k;
        row.pk = pk_sum / reps;
        row.windiff = wd_sum / reps;
        rows.push_back(std::move(row));
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Corpus-level evaluation and reports
// ---------------------------------------------------------------------------

struct EvalConfig {
    std::vector<std::string> methods;  // subset of {"treeseg", "equi", "random"}
    int window = 5;
    int min_size = 5;  // pruning threshold and TreeSeg's minimum segment M
    uint64_t seed = 0;
    int random_reps = 100;
    bool include_dev = false;
    int dev_count = 5;  // first N transcripts (by id) form the dev split
    SplitScore split_score = SplitScore::gain;

    bool operator==(const EvalConfig&) const = default;
};

struct EvalReport {
    std::string dataset;
    EvalConfig config;
    int skipped_transcripts = 0;
    int skipped_levels = 0;
    std::vector<std::string> warnings;
    std::vector<EvalRow> rows;

    bool operator==(const EvalReport&) const = default;
};

struct Aggregate {
    double pk = 0.0;
    double windiff = 0.0;
    int rows = 0;
};

namespace detail {

inline bool row_counted(const EvalReport& report, const EvalRow& row) {
    return report.config.include_dev || !row.dev;
}

}  // namespace detail

// Arithmetic mean over contributing rows; dev rows are excluded unless the
// report was configured with include_dev.
inline Aggregate overall_aggregate(const EvalReport& report, const std::string& method) {
    Aggregate agg;
    double pk_sum = 0.0, wd_sum = 0.0;
    for (const EvalRow& row : report.rows) {
        if (row.method != method || !detail::row_counted(report, row)) continue;
        pk_sum += row.pk;
        wd_sum += row.windiff;
        ++agg.rows;
    }
    if (agg.rows > 0) {
        agg.pk = pk_sum / agg.rows;
        agg.windiff = wd_sum / agg.rows;
    }
    return agg;
}

inline Aggregate level_aggregate(const EvalReport& report, const std::string& method, int level) {
    Aggregate agg;
    double pk_sum = 0.0, wd_sum = 0.0;
    for (const EvalRow& row : report.rows) {
        if (row.method != method || row.level != level || !detail::row_counted(report, row))
            continue;
        pk_sum += row.pk;
        wd_sum += row.windiff;
        ++agg.rows;
    }
    if (agg.rows > 0) {
        agg.pk = pk_sum / agg.rows;
        agg.windiff = wd_sum / agg.rows;
    }
    return agg;
}

inline std::vector<int> levels_present(const EvalReport& report) {
    std::set<int> levels;
    for (const EvalRow& row : report.rows)
        if (detail::row_counted(report, row)) levels.insert(row.level);
    return {levels.begin(), levels.end()};
}

// Produces embeddings for a transcript; wired up by the caller from backend,
// cache and window configuration.
using EmbeddingProvider = std::function<EmbeddingTimeline(const CorpusItem&)>;

// Evaluates every requested method on every transcript and level. Transcripts
// whose embedding computation fails are logged, counted in the header and
// excluded entirely.
inline EvalReport evaluate_corpus(const Corpus& corpus, const EvalConfig& config,
                                  const EmbeddingProvider& provider = {}) {
    if (config.methods.empty()) throw ConfigError("no evaluation methods requested");
    for (const std::string& m : config.methods)
        if (m != "treeseg" && m != "equi" && m != "random")
            throw ConfigError("unknown method '" + m + "'");
    bool wants_treeseg =
        std::find(config.methods.begin(), config.methods.end(), "treeseg") !=
        config.methods.end();
    if (wants_treeseg && !provider)
        throw ConfigError("treeseg evaluation needs an embedding provider");

    EvalReport report;
    report.dataset = corpus.dataset;
    report.config = config;

    std::vector<const CorpusItem*> items;
    items.reserve(corpus.items.size());
    for (const CorpusItem& item : corpus.items) items.push_back(&item);
    std::sort(items.begin(), items.end(),
              [](const CorpusItem* a, const CorpusItem* b) { return a->id < b->id; });

    for (size_t idx = 0; idx < items.size(); ++idx) {
        const CorpusItem& item = *items[idx];
        bool dev = static_cast<int>(idx) < config.dev_count;

        std::optional<TreeSegmenter> treeseg_segmenter;
        if (wants_treeseg) {
            try {
                treeseg_segmenter.emplace(provider(item), config.min_size, config.split_score);
            } catch (const std::exception& e) {
                report.warnings.push_back(item.id + ": " + e.what());
                ++report.skipped_transcripts;
                continue;
            }
        }

        // Count skipped levels once per transcript, not once per method.
        int level_skips = 0;
        for (const std::string& method : config.methods) {
            std::vector<EvalRow> rows;
            int* skip_ptr = method == config.methods.front() ? &level_skips : nullptr;
            if (method == "treeseg") {
                rows = evaluate_transcript(item.id, *treeseg_segmenter, item.annotation,
                                           config.min_size, skip_ptr);
            } else if (method == "equi") {
                EquiSegmenter segmenter(item.annotation.timeline_len());
                rows = evaluate_transcript(item.id, segmenter, item.annotation, config.min_size,
                                           skip_ptr);
            } else {
                rows = evaluate_random_averaged(item.id, item.annotation, config.min_size,
                                                config.seed, config.random_reps, skip_ptr);
            }
            for (EvalRow& row : rows) row.dev = dev;
            report.rows.insert(report.rows.end(), rows.begin(), rows.end());
        }
        report.skipped_levels += level_skips;
    }
    return report;
}

// ---------------------------------------------------------------------------
// Report serialization and rendering
// ---------------------------------------------------------------------------

inline nlohmann::json report_to_json(const EvalReport& report) {
    nlohmann::json j;
    j["dataset"] = report.dataset;
    nlohmann::json cfg;
    cfg["methods"] = report.config.methods;
    cfg["window"] = report.config.window;
    cfg["min_size"] = report.config.min_size;
    cfg["seed"] = report.config.seed;
    cfg["random_reps"] = report.config.random_reps;
    cfg["include_dev"] = report.config.include_dev;
    cfg["dev_count"] = report.config.dev_count;
    cfg["split_score"] = to_string(report.config.split_score);
    j["config"] = cfg;
    j["skipped"] = report.skipped_transcripts;
    j["skipped_levels"] = report.skipped_levels;
    j["warnings"] = report.warnings;
    j["rows"] = nlohmann::json::array();
    for (const EvalRow& row : report.rows) {
        nlohmann::json r;
        r["transcript"] = row.transcript_id;
        r["level"] = row.level;
        r["method"] = row.method;
        r["k"] = row.k_requested;
        r["k_attained"] = row.k_attained;
        r["pk"] = row.pk;
        r["windiff"] = row.windiff;
        r["dev"] = row.dev;
        j["rows"].push_back(std::move(r));
    }
    // Derived, emitted for downstream consumers; parse recomputes them.
    nlohmann::json aggregates;
    for (const std::string& method : report.config.methods) {
        Aggregate overall = overall_aggregate(report, method);
        nlohmann::json m;
        m["pk"] = overall.pk;
        m["windiff"] = overall.windiff;
        m["rows"] = overall.rows;
        nlohmann::json per_level = nlohmann::json::object();
        for (int level : levels_present(report)) {
            Aggregate agg = level_aggregate(report, method, level);
            if (agg.rows == 0) continue;
            nlohmann::json l;
            l["pk"] = agg.pk;
            l["windiff"] = agg.windiff;
            l["rows"] = agg.rows;
            per_level[std::to_string(level)] = std::move(l);
        }
        m["per_level"] = std::move(per_level);
        aggregates[method] = std::move(m);
    }
    j["aggregates"] = std::move(aggregates);
    return j;
}

inline EvalReport report_from_json(const nlohmann::json& j) {
    EvalReport report;
    try {
        report.dataset = j.at("dataset").get<std::string>();
        const nlohmann::json& cfg = j.at("config");
        report.config.methods = cfg.at("methods").get<std::vector<std::string>>();
        report.config.window = cfg.at("window").get<int>();
        report.config.min_size = cfg.at("min_size").get<int>();
        report.config.seed = cfg.at("seed").get<uint64_t>();
        report.config.random_reps = cfg.at("random_reps").get<int>();
        report.config.include_dev = cfg.at("include_dev").get<bool>();
        report.config.dev_count = cfg.at("dev_count").get<int>();
        report.config.split_score = split_score_from_string(cfg.at("split_score").get<std::string>());
        report.skipped_transcripts = j.at("skipped").get<int>();
        report.skipped_levels = j.at("skipped_levels").get<int>();
        report.warnings = j.at("warnings").get<std::vector<std::string>>();
        for (const nlohmann::json& r : j.at("rows")) {
            EvalRow row;
            row.transcript_id = r.at("transcript").get<std::string>();
            row.level = r.at("level").get<int>();
            row.method = r.at("method").get<std::string>();
            row.k_requested = r.at("k").get<int>();
            row.k_attained = r.at("k_attained").get<int>();
            row.pk = r.at("pk").get<double>();
            row.windiff = r.at("windiff").get<double>();
            row.dev = r.at("dev").get<bool>();
            report.rows.push_back(std::move(row));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("bad report file: ") + e.what());
    }
    return report;
}

inline void write_report(const EvalReport& report, const std::filesystem::path& path) {
    if (report.config.methods.empty()) throw ConfigError("report has no methods");
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ConfigError("cannot write report file " + path.string());
    out << report_to_json(report).dump(2) << '\n';
}

inline EvalReport read_report(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open report file " + path.string());
    nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ParseError("report file is not valid JSON");
    return report_from_json(j);
}

// Overall table: one body row per method, Pk / WinDiff / row count.
inline std::string render_overall_table(const EvalReport& report) {
    if (report.config.methods.empty()) throw ConfigError("report has no methods");
    std::ostringstream out;
    out << "dataset: " << report.dataset;
    if (report.skipped_transcripts > 0) out << "  (skipped transcripts: " << report.skipped_transcripts << ")";
    if (report.skipped_levels > 0) out << "  (skipped levels: " << report.skipped_levels << ")";
    out << "\n";
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%-10s %8s %8s %6s", "method", "Pk", "Wd", "rows");
    out << buf << "\n";
    for (const std::string& method : report.config.methods) {
        Aggregate agg = overall_aggregate(report, method);
        std::snprintf(buf, sizeof(buf), "%-10s %8.3f %8.3f %6d", method.c_str(), agg.pk,
                      agg.windiff, agg.rows);
        out << buf << "\n";
    }
    return out.str();
}

// Per-level table: methods x levels, one block per metric.
inline std::string render_level_table(const EvalReport& report) {
    if (report.config.methods.empty()) throw ConfigError("report has no methods");
    std::vector<int> levels = levels_present(report);
    std::ostringstream out;
    char buf[64];
    for (const char* metric : {"Pk", "Wd"}) {
        out << metric << " per level\n";
        std::snprintf(buf, sizeof(buf), "%-10s", "method");
        out << buf;
        for (int level : levels) {
            std::snprintf(buf, sizeof(buf), " %7s", ("L" + std::to_string(level)).c_str());
            out << buf;
        }
        out << "\n";
        for (const std::string& method : report.config.methods) {
            std::snprintf(buf, sizeof(buf), "%-10s", method.c_str());
            out << buf;
            for (int level : levels) {
                Aggregate agg = level_aggregate(report, method, level);
                if (agg.rows == 0) {
                    std::snprintf(buf, sizeof(buf), " %7s", "-");
                } else {
                    std::snprintf(buf, sizeof(buf), " %7.3f",
                                  std::string(metric) == "Pk" ? agg.pk : agg.windiff);
                }
                out << buf;
            }
            out << "\n";
        }
    }
    return out.str();
}

// ---------------------------------------------------------------------------
// Window tuning on the dev split
// ---------------------------------------------------------------------------

struct TuneResult {
    int best_window = 0;
    std::vector<std::pair<int, double>> dev_pk;  // (window, mean dev Pk)
};

// Grid search over candidate windows, scored by mean TreeSeg Pk on the dev
// transcripts only. The embedder is called per (item, window).
inline TuneResult tune_window(
    const Corpus& corpus, const std::vector<int>& windows, const EvalConfig& base,
    const std::function<EmbeddingTimeline(const CorpusItem&, int window)>& embedder) {
    if (windows.empty()) throw ConfigError("no candidate windows");
    if (!embedder) throw ConfigError("window tuning needs an embedder");

    Corpus dev;
    dev.dataset = corpus.dataset + "-dev";
    std::vector<const CorpusItem*> items;
    for (const CorpusItem& item : corpus.items) items.push_back(&item);
    std::sort(items.begin(), items.end(),
              [](const CorpusItem* a, const CorpusItem* b) { return a->id < b->id; });
    for (size_t i = 0; i < items.size() && static_cast<int>(i) < base.dev_count; ++i)
        dev.items.push_back(*items[i]);
    if (dev.items.empty()) throw DegenerateInputError("corpus has no dev transcripts");

    TuneResult result;
    double best_pk = std::numeric_limits<double>::infinity();
    for (int w : windows) {
        EvalConfig cfg = base;
        cfg.methods = {"treeseg"};
        cfg.window = w;
        cfg.include_dev = true;
        cfg.dev_count = static_cast<int>(dev.items.size());
        EvalReport report = evaluate_corpus(
            dev, cfg, [&](const CorpusItem& item) { return embedder(item, w); });
        Aggregate agg = overall_aggregate(report, "treeseg");
        result.dev_pk.emplace_back(w, agg.pk);
        if (agg.rows > 0 && agg.pk < best_pk) {
            best_pk = agg.pk;
            result.best_window = w;
        }
    }
    return result;
}

}  // namespace treeseg
