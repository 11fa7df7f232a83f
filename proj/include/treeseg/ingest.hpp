#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "treeseg/common.hpp"
#include "treeseg/partition.hpp"

namespace treeseg {

// One transcript entry, the atomic segmentation unit.
struct Utterance {
    int index = 0;
    std::optional<std::string> speaker;
    std::string text;
    std::optional<double> start_time;
    std::optional<double> end_time;

    bool operator==(const Utterance&) const = default;
};

// An ordered utterance sequence with consecutive indices from 0.
class Timeline {
public:
    Timeline() = default;

    explicit Timeline(std::vector<Utterance> utterances) : utterances_(std::move(utterances)) {
        if (utterances_.empty()) throw DegenerateInputError("timeline has no utterances");
        for (size_t i = 0; i < utterances_.size(); ++i) {
            if (utterances_[i].index != static_cast<int>(i))
                throw StructureError("utterance index " + std::to_string(utterances_[i].index) +
                                     " at position " + std::to_string(i) +
                                     " is not consecutive from 0");
            if (trimmed(utterances_[i].text).empty())
                throw StructureError("utterance " + std::to_string(i) + " has empty text");
        }
    }

    int size() const { return static_cast<int>(utterances_.size()); }
    const Utterance& at(int i) const { return utterances_.at(static_cast<size_t>(i)); }
    const std::vector<Utterance>& utterances() const { return utterances_; }

    bool operator==(const Timeline&) const = default;

    static std::string trimmed(const std::string& s) {
        size_t b = s.find_first_not_of(" \t\r\n");
        if (b == std::string::npos) return {};
        size_t e = s.find_last_not_of(" \t\r\n");
        return s.substr(b, e - b + 1);
    }

private:
    std::vector<Utterance> utterances_;
};

enum class TranscriptFormat { jsonl, text };

namespace detail {

inline Utterance record_from_json(const nlohmann::json& rec, long line) {
    if (!rec.is_object()) throw ParseError("record is not a JSON object", line);
    Utterance u;
    try {
        u.index = rec.at("index").get<int>();
        if (rec.contains("speaker") && !rec["speaker"].is_null())
            u.speaker = rec["speaker"].get<std::string>();
        u.text = rec.at("text").get<std::string>();
        if (rec.contains("start") && !rec["start"].is_null())
            u.start_time = rec["start"].get<double>();
        if (rec.contains("end") && !rec["end"].is_null())
            u.end_time = rec["end"].get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("bad transcript record: ") + e.what(), line);
    }
    if (Timeline::trimmed(u.text).empty()) throw ParseError("record has empty text", line);
    return u;
}

}  // namespace detail

// Parse a transcript stream: either one JSON record per line or plain text
// with one utterance per line. Blank lines are skipped in both formats.
inline Timeline parse_transcript(std::istream& in, TranscriptFormat format) {
    std::vector<Utterance> utterances;
    std::string line;
    long line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        std::string stripped = Timeline::trimmed(line);
        if (stripped.empty()) continue;
        if (format == TranscriptFormat::jsonl) {
            nlohmann::json rec = nlohmann::json::parse(stripped, nullptr, false);
            if (rec.is_discarded()) throw ParseError("invalid JSON record", line_number);
            Utterance u = detail::record_from_json(rec, line_number);
            if (u.index != static_cast<int>(utterances.size()))
                throw ParseError("index " + std::to_string(u.index) + " breaks the 0.." +
                                 std::to_string(utterances.size()) + " sequence",
                                 line_number);
            utterances.push_back(std::move(u));
        } else {
            Utterance u;
            u.index = static_cast<int>(utterances.size());
            u.text = stripped;
            utterances.push_back(std::move(u));
        }
    }
    if (utterances.empty()) throw DegenerateInputError("transcript contains no utterances");
    return Timeline(std::move(utterances));
}

inline Timeline load_transcript(const std::filesystem::path& path,
                                std::optional<TranscriptFormat> format = {}) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open transcript file " + path.string());
    if (!format) {
        // Sniff: a JSONL transcript's first non-blank line is a JSON object.
        std::string line;
        std::streampos pos = in.tellg();
        while (std::getline(in, line)) {
            std::string stripped = Timeline::trimmed(line);
            if (!stripped.empty()) {
                format = stripped.front() == '{' ? TranscriptFormat::jsonl
                                                 : TranscriptFormat::text;
                break;
            }
        }
        in.clear();
        in.seekg(pos);
        if (!format) format = TranscriptFormat::text;
    }
    return parse_transcript(in, *format);
}

inline void write_transcript(std::ostream& out, const Timeline& timeline) {
    for (const Utterance& u : timeline.utterances()) {
        nlohmann::json rec;
        rec["index"] = u.index;
        rec["speaker"] = u.speaker ? nlohmann::json(*u.speaker) : nlohmann::json(nullptr);
        rec["text"] = u.text;
        rec["start"] = u.start_time ? nlohmann::json(*u.start_time) : nlohmann::json(nullptr);
        rec["end"] = u.end_time ? nlohmann::json(*u.end_time) : nlohmann::json(nullptr);
        out << rec.dump() << '\n';
    }
}

// ---------------------------------------------------------------------------
// Annotation files: recursive {"start", "end", "children"} spans.
// ---------------------------------------------------------------------------

inline constexpr int kMaxAnnotationDepth = 4;

namespace detail {

inline AnnotationNode annotation_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ParseError("annotation node is not a JSON object");
    AnnotationNode node;
    try {
        node.start = j.at("start").get<int>();
        node.end = j.at("end").get<int>();
        if (j.contains("children")) {
            for (const nlohmann::json& c : j.at("children"))
                node.children.push_back(annotation_from_json(c));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("bad annotation node: ") + e.what());
    }
    return node;
}

inline nlohmann::json annotation_to_json(const AnnotationNode& node) {
    nlohmann::json j;
    j["start"] = node.start;
    j["end"] = node.end;
    j["children"] = nlohmann::json::array();
    for (const AnnotationNode& c : node.children) j["children"].push_back(annotation_to_json(c));
    return j;
}

}  // namespace detail

inline GroundTruthTree parse_annotation(std::istream& in, int timeline_len) {
    nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ParseError("annotation file is not valid JSON");
    AnnotationNode root = detail::annotation_from_json(j);
    GroundTruthTree tree = GroundTruthTree::from_node(std::move(root), timeline_len);
    if (tree.depth() > kMaxAnnotationDepth)
        throw StructureError("annotation depth " + std::to_string(tree.depth()) +
                             " exceeds the supported maximum of " +
                             std::to_string(kMaxAnnotationDepth));
    return tree;
}

inline GroundTruthTree load_annotation(const std::filesystem::path& path, int timeline_len) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open annotation file " + path.string());
    return parse_annotation(in, timeline_len);
}

inline void write_annotation(std::ostream& out, const GroundTruthTree& tree) {
    out << detail::annotation_to_json(tree.root()).dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Flat partition files: {"T": int, "segments": [{"start", "end"}, ...]}.
// The output format of the naive baselines and an accepted hypothesis format
// for scoring.
// ---------------------------------------------------------------------------

inline nlohmann::json flat_to_json(const FlatPartition& partition) {
    nlohmann::json j;
    j["T"] = partition.total;
    j["segments"] = nlohmann::json::array();
    for (const Segment& s : partition.segments) {
        nlohmann::json seg;
        seg["start"] = s.start;
        seg["end"] = s.end;
        j["segments"].push_back(std::move(seg));
    }
    return j;
}

inline FlatPartition flat_from_json(const nlohmann::json& j) {
    int total;
    std::vector<Segment> segs;
    try {
        total = j.at("T").get<int>();
        for (const nlohmann::json& s : j.at("segments"))
            segs.push_back({s.at("start").get<int>(), s.at("end").get<int>()});
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("bad flat partition file: ") + e.what());
    }
    return FlatPartition::from_segments(total, std::move(segs));
}

// ---------------------------------------------------------------------------
// Corpora: directories of <stem>.jsonl transcripts paired with
// <stem>.annotation.json ground truth.
// ---------------------------------------------------------------------------

struct CorpusItem {
    std::string id;
    Timeline timeline;
    GroundTruthTree annotation;
};

struct Corpus {
    std::string dataset;
    std::vector<CorpusItem> items;  // sorted by id
};

inline constexpr const char* kTranscriptSuffix = ".jsonl";
inline constexpr const char* kAnnotationSuffix = ".annotation.json";

// Loads every transcript/annotation pair under dir. Unreadable or invalid
// pairs are skipped; one message per skip lands in *warnings when given.
inline Corpus load_corpus(const std::filesystem::path& dir,
                          std::vector<std::string>* warnings = nullptr) {
    if (!std::filesystem::is_directory(dir))
        throw ConfigError("corpus directory " + dir.string() + " does not exist");
    Corpus corpus;
    corpus.dataset = dir.filename().string();
    if (corpus.dataset.empty()) corpus.dataset = dir.parent_path().filename().string();

    std::vector<std::filesystem::path> transcripts;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const std::filesystem::path& p = entry.path();
        if (p.filename().string().ends_with(kTranscriptSuffix) &&
            !p.filename().string().ends_with(kAnnotationSuffix))
            transcripts.push_back(p);
    }
    std::sort(transcripts.begin(), transcripts.end());

    for (const std::filesystem::path& tpath : transcripts) {
        std::string stem = tpath.filename().string();
        stem.resize(stem.size() - std::string(kTranscriptSuffix).size());
        std::filesystem::path apath = tpath.parent_path() / (stem + kAnnotationSuffix);
        try {
            Timeline timeline = load_transcript(tpath, TranscriptFormat::jsonl);
            GroundTruthTree annotation = load_annotation(apath, timeline.size());
            corpus.items.push_back({stem, std::move(timeline), std::move(annotation)});
        } catch (const std::exception& e) {
            if (warnings) warnings->push_back(stem + ": " + e.what());
        }
    }
    if (corpus.items.empty())
        throw DegenerateInputError("corpus " + dir.string() + " has no loadable transcripts");
    return corpus;
}

// ---------------------------------------------------------------------------
// Corpus statistics: per-level transcript counts, average timeline length,
// average post-pruning segment counts.
// ---------------------------------------------------------------------------

struct LevelStats {
    int transcripts = 0;        // transcripts annotated at this level
    double avg_segments = 0.0;  // mean post-pruning segment count
};

struct CorpusStats {
    std::string dataset;
    int transcripts = 0;
    double avg_timeline_len = 0.0;
    std::vector<LevelStats> levels;  // levels[0] = L1
    int skipped = 0;
};

inline CorpusStats corpus_stats(const Corpus& corpus, int min_size = 5) {
    if (corpus.items.empty()) throw DegenerateInputError("empty corpus");
    CorpusStats stats;
    stats.dataset = corpus.dataset;
    stats.transcripts = static_cast<int>(corpus.items.size());
    double len_sum = 0.0;
    int max_depth = 0;
    for (const CorpusItem& item : corpus.items)
        max_depth = std::max(max_depth, item.annotation.depth());
    stats.levels.resize(static_cast<size_t>(max_depth));
    std::vector<long> segment_sums(static_cast<size_t>(max_depth), 0);
    for (const CorpusItem& item : corpus.items) {
        len_sum += item.timeline.size();
        for (int level = 1; level <= item.annotation.depth(); ++level) {
            FlatPartition pruned = prune_flat(flatten_at_depth(item.annotation, level), min_size);
            stats.levels[static_cast<size_t>(level - 1)].transcripts += 1;
            segment_sums[static_cast<size_t>(level - 1)] += pruned.size();
        }
    }
    stats.avg_timeline_len = len_sum / stats.transcripts;
    for (size_t i = 0; i < stats.levels.size(); ++i) {
        if (stats.levels[i].transcripts > 0)
            stats.levels[i].avg_segments =
                static_cast<double>(segment_sums[i]) / stats.levels[i].transcripts;
    }
    return stats;
}

inline CorpusStats corpus_stats(const std::filesystem::path& dir, int min_size = 5) {
    std::vector<std::string> warnings;
    Corpus corpus = load_corpus(dir, &warnings);
    CorpusStats stats = corpus_stats(corpus, min_size);
    stats.skipped = static_cast<int>(warnings.size());
    return stats;
}

inline std::string render_stats_table(const CorpusStats& stats) {
    std::ostringstream out;
    out << "dataset: " << stats.dataset << "\n";
    out << "transcripts: " << stats.transcripts;
    if (stats.skipped > 0) out << "  (skipped " << stats.skipped << ")";
    out << "\n";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.1f", stats.avg_timeline_len);
    out << "avg timeline length: " << buf << "\n";
    out << "level  transcripts  avg segments (pruned)\n";
    for (size_t i = 0; i < stats.levels.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "L%-5zu %-12d %.2f", i + 1,
                      stats.levels[i].transcripts, stats.levels[i].avg_segments);
        out << buf << "\n";
    }
    return out.str();
}

}  // namespace treeseg
