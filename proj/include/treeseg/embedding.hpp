#pragma once

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <sstream>
#include <string>
#include <thread>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "treeseg/common.hpp"
#include "treeseg/ingest.hpp"

namespace treeseg {

// An overlapping utterance block anchored at one utterance: the anchor plus
// up to `window` utterances of immediate past, joined by newlines. The anchor
// is always the last line.
struct Block {
    int anchor = 0;
    int first = 0;
    std::string text;

    bool operator==(const Block&) const = default;
};

inline std::vector<Block> extract_blocks(const Timeline& timeline, int window,
                                         bool include_speakers = false) {
    if (window < 0) throw std::invalid_argument("window must be >= 0");
    std::vector<Block> blocks;
    blocks.reserve(static_cast<size_t>(timeline.size()));
    for (int t = 0; t < timeline.size(); ++t) {
        Block b;
        b.anchor = t;
        b.first = std::max(0, t - window);
        std::string text;
        for (int i = b.first; i <= t; ++i) {
            const Utterance& u = timeline.at(i);
            if (i > b.first) text += '\n';
            if (include_speakers && u.speaker) {
                text += *u.speaker;
                text += ": ";
            }
            text += u.text;
        }
        b.text = std::move(text);
        blocks.push_back(std::move(b));
    }
    return blocks;
}

// One embedding vector per utterance, all of the same dimension, in timeline
// order. Immutable after construction.
class EmbeddingTimeline {
public:
    EmbeddingTimeline() = default;

    EmbeddingTimeline(std::vector<std::vector<double>> vectors, std::string model_id, int window)
        : vectors_(std::move(vectors)), model_id_(std::move(model_id)), window_(window) {
        if (vectors_.empty()) throw DegenerateInputError("embedding timeline is empty");
        size_t dim = vectors_.front().size();
        if (dim == 0) throw IntegrityError("embedding dimension is zero");
        for (size_t t = 0; t < vectors_.size(); ++t) {
            if (vectors_[t].size() != dim)
                throw IntegrityError("embedding dimension mismatch at index " + std::to_string(t) +
                                     " (" + std::to_string(vectors_[t].size()) + " vs " +
                                     std::to_string(dim) + ")");
            for (double v : vectors_[t])
                if (!std::isfinite(v))
                    throw IntegrityError("non-finite embedding value at index " +
                                         std::to_string(t));
        }
    }

    int size() const { return static_cast<int>(vectors_.size()); }
    int dim() const { return vectors_.empty() ? 0 : static_cast<int>(vectors_.front().size()); }
    const std::vector<double>& at(int t) const { return vectors_.at(static_cast<size_t>(t)); }
    const std::vector<std::vector<double>>& vectors() const { return vectors_; }
    const std::string& model_id() const { return model_id_; }
    int window() const { return window_; }

    bool operator==(const EmbeddingTimeline&) const = default;

private:
    std::vector<std::vector<double>> vectors_;
    std::string model_id_;
    int window_ = 0;
};

// Maps a batch of texts to embedding vectors, in order. Implementations must
// be safe to call from multiple threads.
class EmbeddingBackend {
public:
    virtual ~EmbeddingBackend() = default;
    virtual std::string model_id() const = 0;
    virtual std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) = 0;
};

// Deterministic test double: text is hashed to seed a SplitMix64 stream that
// fills a unit-norm vector. Identical text always maps to the identical
// vector, on every platform.
class HashEmbeddingBackend : public EmbeddingBackend {
public:
    explicit HashEmbeddingBackend(int dim) : dim_(dim) {
        if (dim < 1) throw std::invalid_argument("embedding dimension must be >= 1");
    }

    std::string model_id() const override { return "hash-" + std::to_string(dim_); }

    std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) override {
        std::vector<std::vector<double>> out;
        out.reserve(texts.size());
        for (const std::string& text : texts) out.push_back(embed_one(text));
        return out;
    }

    std::vector<double> embed_one(const std::string& text) const {
        SplitMix64 rng(fnv1a64(text));
        std::vector<double> v(static_cast<size_t>(dim_));
        double norm_sq = 0.0;
        for (double& x : v) {
            x = rng.next_double() * 2.0 - 1.0;
            norm_sq += x * x;
        }
        if (norm_sq == 0.0) {
            v[0] = 1.0;
            return v;
        }
        double inv = 1.0 / std::sqrt(norm_sq);
        for (double& x : v) x *= inv;
        return v;
    }

private:
    int dim_;
};

// ---------------------------------------------------------------------------
// Persistent embedding cache. One JSON record per line:
//   {"key": hex, "model": str, "dim": int, "vec": [float]}
// Keys bind (model, window, block text), so changing either invalidates
// cleanly. Concurrent readers, serialized writers.
// ---------------------------------------------------------------------------

class EmbeddingCache {
public:
    static std::string key_for(const std::string& model_id, int window, const std::string& text) {
        std::string material = model_id;
        material += '\x1f';
        material += std::to_string(window);
        material += '\x1f';
        material += text;
        return to_hex16(fnv1a64(material));
    }

    std::optional<std::vector<double>> lookup(const std::string& key) const {
        std::shared_lock lock(mutex_);
        auto it = entries_.find(key);
        if (it == entries_.end()) return std::nullopt;
        return it->second.vec;
    }

    void insert(const std::string& key, const std::string& model, std::vector<double> vec) {
        std::unique_lock lock(mutex_);
        entries_[key] = Entry{model, std::move(vec)};
    }

    size_t size() const {
        std::shared_lock lock(mutex_);
        return entries_.size();
    }

    // Missing file loads as an empty cache; malformed lines are a ParseError.
    void load(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) return;
        std::unique_lock lock(mutex_);
        std::string line;
        long line_number = 0;
        while (std::getline(in, line)) {
            ++line_number;
            if (line.empty()) continue;
            nlohmann::json rec = nlohmann::json::parse(line, nullptr, false);
            if (rec.is_discarded()) throw ParseError("invalid cache record", line_number);
            try {
                Entry e;
                std::string key = rec.at("key").get<std::string>();
                e.model = rec.at("model").get<std::string>();
                size_t dim = rec.at("dim").get<size_t>();
                e.vec = rec.at("vec").get<std::vector<double>>();
                if (e.vec.size() != dim)
                    throw ParseError("cache record dim disagrees with vector length", line_number);
                entries_[key] = std::move(e);
            } catch (const nlohmann::json::exception& ex) {
                throw ParseError(std::string("bad cache record: ") + ex.what(), line_number);
            }
        }
    }

    // Canonical form: records sorted by key, so equal contents always produce
    // byte-identical files.
    void save(const std::filesystem::path& path) const {
        std::shared_lock lock(mutex_);
        std::map<std::string, const Entry*> ordered;
        for (const auto& [key, entry] : entries_) ordered[key] = &entry;
        std::ofstream out(path, std::ios::trunc);
        if (!out) throw ConfigError("cannot write cache file " + path.string());
        for (const auto& [key, entry] : ordered) {
            nlohmann::json rec;
            rec["key"] = key;
            rec["model"] = entry->model;
            rec["dim"] = entry->vec.size();
            rec["vec"] = entry->vec;
            out << rec.dump() << '\n';
        }
    }

private:
    struct Entry {
        std::string model;
        std::vector<double> vec;
    };

    mutable std::shared_mutex mutex_;
    std::unordered_map<std::string, Entry> entries_;
};

// ---------------------------------------------------------------------------
// embed_timeline: blocks -> vectors through cache and backend.
// ---------------------------------------------------------------------------

struct EmbedConfig {
    int window = 5;
    int batch_size = 64;
    int max_in_flight = 4;  // concurrent backend batches
    bool include_speakers = false;
};

// Embeds every block of the timeline, consulting the cache first and updating
// it afterwards. Uncached blocks go to the backend in batches of
// cfg.batch_size, at most cfg.max_in_flight batches concurrently; results are
// assembled strictly in anchor order.
inline EmbeddingTimeline embed_timeline(const Timeline& timeline, EmbeddingBackend& backend,
                                        EmbeddingCache* cache, const EmbedConfig& cfg = {}) {
    if (cfg.batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (cfg.max_in_flight < 1) throw std::invalid_argument("max_in_flight must be >= 1");

    std::vector<Block> blocks = extract_blocks(timeline, cfg.window, cfg.include_speakers);
    const std::string model = backend.model_id();

    std::vector<std::vector<double>> vectors(blocks.size());
    std::vector<std::string> keys(blocks.size());
    std::vector<int> missing;
    for (size_t t = 0; t < blocks.size(); ++t) {
        keys[t] = EmbeddingCache::key_for(model, cfg.window, blocks[t].text);
        std::optional<std::vector<double>> hit =
            cache ? cache->lookup(keys[t]) : std::nullopt;
        if (hit)
            vectors[t] = std::move(*hit);
        else
            missing.push_back(static_cast<int>(t));
    }

    if (!missing.empty()) {
        struct Batch {
            size_t begin;  // range into `missing`
            size_t end;
        };
        std::vector<Batch> batches;
        for (size_t b = 0; b < missing.size(); b += static_cast<size_t>(cfg.batch_size))
            batches.push_back({b, std::min(missing.size(), b + static_cast<size_t>(cfg.batch_size))});

        std::mutex failure_mutex;
        std::vector<int> failed_anchors;
        std::atomic<size_t> next_batch{0};

        auto worker = [&] {
            for (;;) {
                size_t bi = next_batch.fetch_add(1);
                if (bi >= batches.size()) return;
                const Batch& batch = batches[bi];
                std::vector<std::string> texts;
                texts.reserve(batch.end - batch.begin);
                for (size_t j = batch.begin; j < batch.end; ++j)
                    texts.push_back(blocks[static_cast<size_t>(missing[j])].text);
                try {
                    std::vector<std::vector<double>> result = backend.embed(texts);
                    if (result.size() != texts.size())
                        throw BackendError("backend returned " + std::to_string(result.size()) +
                                           " vectors for " + std::to_string(texts.size()) +
                                           " texts");
                    for (size_t j = batch.begin; j < batch.end; ++j)
                        vectors[static_cast<size_t>(missing[j])] =
                            std::move(result[j - batch.begin]);
                } catch (const std::exception&) {
                    std::lock_guard lock(failure_mutex);
                    for (size_t j = batch.begin; j < batch.end; ++j)
                        failed_anchors.push_back(missing[j]);
                }
            }
        };

        size_t threads = std::min<size_t>(static_cast<size_t>(cfg.max_in_flight), batches.size());
        if (threads <= 1) {
            worker();
        } else {
            std::vector<std::thread> pool;
            pool.reserve(threads);
            for (size_t i = 0; i < threads; ++i) pool.emplace_back(worker);
            for (std::thread& t : pool) t.join();
        }

        if (!failed_anchors.empty()) {
            std::sort(failed_anchors.begin(), failed_anchors.end());
            std::string msg = "embedding failed for anchors";
            for (int a : failed_anchors) msg += " " + std::to_string(a);
            throw BackendError(msg);
        }

        if (cache) {
            for (int t : missing)
                cache->insert(keys[static_cast<size_t>(t)], model,
                              vectors[static_cast<size_t>(t)]);
        }
    }

    // EmbeddingTimeline's constructor enforces the shared-dimension and
    // all-finite invariants.
    return EmbeddingTimeline(std::move(vectors), model, cfg.window);
}

}  // namespace treeseg
