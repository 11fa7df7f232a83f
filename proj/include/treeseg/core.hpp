#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <queue>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "treeseg/common.hpp"
#include "treeseg/embedding.hpp"
#include "treeseg/partition.hpp"

namespace treeseg {

// Cumulative vector sums and squared-norm sums over an embedding timeline.
// sum(a, b) of any segment is S1[b] - S1[a]; together with S2 this gives the
// segment SSE in O(dim) instead of O(len * dim).
class PrefixSums {
public:
    explicit PrefixSums(const std::vector<std::vector<double>>& vectors) {
        if (vectors.empty()) throw DegenerateInputError("no embedding vectors");
        n_ = static_cast<int>(vectors.size());
        dim_ = static_cast<int>(vectors.front().size());
        sum_.assign(static_cast<size_t>(n_ + 1) * static_cast<size_t>(dim_), 0.0);
        sqnorm_.assign(static_cast<size_t>(n_) + 1, 0.0);
        // Fixed ascending summation order keeps results reproducible.
        for (int t = 0; t < n_; ++t) {
            const std::vector<double>& v = vectors[static_cast<size_t>(t)];
            if (static_cast<int>(v.size()) != dim_)
                throw IntegrityError("embedding dimension mismatch at index " + std::to_string(t));
            const double* prev = row(t);
            double* next = row(t + 1);
            double sq = 0.0;
            for (int j = 0; j < dim_; ++j) {
                next[j] = prev[j] + v[static_cast<size_t>(j)];
                sq += v[static_cast<size_t>(j)] * v[static_cast<size_t>(j)];
            }
            sqnorm_[static_cast<size_t>(t) + 1] = sqnorm_[static_cast<size_t>(t)] + sq;
        }
    }

    explicit PrefixSums(const EmbeddingTimeline& timeline) : PrefixSums(timeline.vectors()) {}

    int size() const { return n_; }
    int dim() const { return dim_; }

    // SSE of [a, b): sum over the segment of squared distance to the segment
    // mean, computed as (S2[b]-S2[a]) - |S1[b]-S1[a]|^2 / (b-a). Near-zero
    // negatives from cancellation are clamped; anything below -1e-6 is a
    // genuine inconsistency.
    double segment_sse(int a, int b) const {
        if (a < 0 || a >= b || b > n_)
            throw std::invalid_argument("bad segment [" + std::to_string(a) + ", " +
                                        std::to_string(b) + ")");
        const double* sa = row(a);
        const double* sb = row(b);
        double mean_term = 0.0;
        for (int j = 0; j < dim_; ++j) {
            double d = sb[j] - sa[j];
            mean_term += d * d;
        }
        double sse = (sqnorm_[static_cast<size_t>(b)] - sqnorm_[static_cast<size_t>(a)]) -
                     mean_term / static_cast<double>(b - a);
        if (sse < 0.0) {
            if (sse < -1e-6)
                throw IntegrityError("segment SSE " + std::to_string(sse) +
                                     " below the cancellation guard on [" + std::to_string(a) +
                                     ", " + std::to_string(b) + ")");
            sse = 0.0;
        }
        return sse;
    }

    // Loss of splitting [a, b) at i: SSE of [a, i) plus SSE of [i, b).
    double split_loss(int a, int b, int i) const {
        if (i <= a || i >= b)
            throw std::invalid_argument("split point " + std::to_string(i) +
                                        " leaves an empty side of [" + std::to_string(a) + ", " +
                                        std::to_string(b) + ")");
        return segment_sse(a, i) + segment_sse(i, b);
    }

private:
    const double* row(int t) const {
        return sum_.data() + static_cast<size_t>(t) * static_cast<size_t>(dim_);
    }
    double* row(int t) {
        return sum_.data() + static_cast<size_t>(t) * static_cast<size_t>(dim_);
    }

    int n_ = 0;
    int dim_ = 0;
    std::vector<double> sum_;     // (n+1) x dim, row 0 all zeros
    std::vector<double> sqnorm_;  // n+1, sqnorm_[0] = 0
};

// The best admissible split of one span: split index, its loss, and the SSE
// reduction it buys.
struct SplitCandidate {
    int start = 0;
    int end = 0;
    int split = 0;
    double loss = 0.0;
    double gain = 0.0;
};

// Minimizes the split loss over all points leaving both children at least
// min_segment utterances; ties break toward the smallest split index. Returns
// nothing when the span is too small to split (size < 2 * min_segment).
// Single linear pass; *loss_evals counts loss evaluations when provided.
inline std::optional<SplitCandidate> best_split(const PrefixSums& ps, int start, int end,
                                                int min_segment,
                                                uint64_t* loss_evals = nullptr) {
    if (start < 0 || start >= end || end > ps.size())
        throw std::invalid_argument("bad span [" + std::to_string(start) + ", " +
                                    std::to_string(end) + ")");
    if (min_segment < 1) throw std::invalid_argument("min_segment must be >= 1");
    int lo = start + min_segment;
    int hi = end - min_segment;  // inclusive
    if (lo > hi) return std::nullopt;
    SplitCandidate best;
    best.start = start;
    best.end = end;
    best.split = -1;
    best.loss = std::numeric_limits<double>::infinity();
    for (int i = lo; i <= hi; ++i) {
        double loss = ps.split_loss(start, end, i);
        if (loss_evals) ++*loss_evals;
        if (loss < best.loss) {
            best.loss = loss;
            best.split = i;
        }
    }
    best.gain = ps.segment_sse(start, end) - best.loss;
    if (best.gain < 0.0) best.gain = 0.0;
    return best;
}

// ---------------------------------------------------------------------------
// Partition trees
// ---------------------------------------------------------------------------

struct TreeNode {
    int start = 0;
    int end = 0;
    int split = -1;  // boundary position, -1 for leaves
    int order = -1;  // division rank, 0 = first split performed
    int left = -1;   // child node indices
    int right = -1;
};

// A binary partition tree over [0, T). Nodes live in a flat array with the
// root at index 0. split_order values are unique and consecutive from 0, so
// any prefix of the division sequence can be replayed.
class PartitionTree {
public:
    static PartitionTree single_leaf(int total, int min_segment) {
        PartitionTree t;
        t.total_ = total;
        t.min_segment_ = min_segment;
        t.nodes_.push_back({0, total, -1, -1, -1, -1});
        t.leaf_count_ = 1;
        return t;
    }

    const TreeNode& node(int i) const { return nodes_.at(static_cast<size_t>(i)); }
    const TreeNode& root() const { return nodes_.front(); }
    int node_count() const { return static_cast<int>(nodes_.size()); }
    int total() const { return total_; }
    int min_segment() const { return min_segment_; }
    int leaf_count() const { return leaf_count_; }

    // Splits the leaf at node index `at`; returns {left, right} child indices.
    // Exposed for construction; divide() is the normal producer.
    std::pair<int, int> split_leaf(int at, int split_point, int order) {
        TreeNode& n = nodes_.at(static_cast<size_t>(at));
        if (n.split >= 0) throw StructureError("node is already split");
        if (split_point <= n.start || split_point >= n.end)
            throw StructureError("split point " + std::to_string(split_point) +
                                 " outside node (" + std::to_string(n.start) + ", " +
                                 std::to_string(n.end) + ")");
        int left = static_cast<int>(nodes_.size());
        int right = left + 1;
        int start = n.start, end = n.end;
        n.split = split_point;
        n.order = order;
        n.left = left;
        n.right = right;
        nodes_.push_back({start, split_point, -1, -1, -1, -1});
        nodes_.push_back({split_point, end, -1, -1, -1, -1});
        ++leaf_count_;
        return {left, right};
    }

    FlatPartition leaves() const { return leaves_at_k(leaf_count_); }

    // Replays the first K-1 divisions in split order and returns the K
    // resulting leaves. No re-clustering: boundaries are nested in K.
    FlatPartition leaves_at_k(int k) const {
        if (k < 1 || k > leaf_count_)
            throw std::invalid_argument("K " + std::to_string(k) + " out of range 1.." +
                                        std::to_string(leaf_count_));
        std::vector<Segment> segs;
        segs.reserve(static_cast<size_t>(k));
        collect_leaves(0, k - 1, segs);
        return FlatPartition::from_segments(total_, std::move(segs));
    }

    bool operator==(const PartitionTree& other) const {
        return total_ == other.total_ && min_segment_ == other.min_segment_ &&
               equal_subtree(*this, 0, other, 0);
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["T"] = total_;
        j["M"] = min_segment_;
        j["K"] = leaf_count_;
        j["root"] = node_to_json(0);
        return j;
    }

    static PartitionTree from_json(const nlohmann::json& j) {
        PartitionTree t;
        try {
            t.total_ = j.at("T").get<int>();
            t.min_segment_ = j.at("M").get<int>();
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(std::string("bad tree file: ") + e.what());
        }
        if (t.total_ <= 0) throw StructureError("tree timeline length must be positive");
        t.leaf_count_ = 0;
        t.node_from_json(j.at("root"));
        t.leaf_count_ = (static_cast<int>(t.nodes_.size()) + 1) / 2;
        t.validate();
        if (j.contains("K") && j.at("K").get<int>() != t.leaf_count_)
            throw StructureError("tree file K disagrees with its leaf count");
        return t;
    }

private:
    void collect_leaves(int idx, int max_splits, std::vector<Segment>& out) const {
        const TreeNode& n = nodes_[static_cast<size_t>(idx)];
        if (n.split < 0 || n.order >= max_splits) {
            out.push_back({n.start, n.end});
            return;
        }
        collect_leaves(n.left, max_splits, out);
        collect_leaves(n.right, max_splits, out);
    }

    static bool equal_subtree(const PartitionTree& a, int ai, const PartitionTree& b, int bi) {
        const TreeNode& na = a.nodes_[static_cast<size_t>(ai)];
        const TreeNode& nb = b.nodes_[static_cast<size_t>(bi)];
        if (na.start != nb.start || na.end != nb.end || na.split != nb.split ||
            na.order != nb.order)
            return false;
        if (na.split < 0) return true;
        return equal_subtree(a, na.left, b, nb.left) && equal_subtree(a, na.right, b, nb.right);
    }

    nlohmann::json node_to_json(int idx) const {
        const TreeNode& n = nodes_[static_cast<size_t>(idx)];
        nlohmann::json j;
        j["start"] = n.start;
        j["end"] = n.end;
        j["split"] = n.split >= 0 ? nlohmann::json(n.split) : nlohmann::json(nullptr);
        j["order"] = n.order >= 0 ? nlohmann::json(n.order) : nlohmann::json(nullptr);
        j["children"] = nlohmann::json::array();
        if (n.split >= 0) {
            j["children"].push_back(node_to_json(n.left));
            j["children"].push_back(node_to_json(n.right));
        }
        return j;
    }

    int node_from_json(const nlohmann::json& j) {
        TreeNode n;
        try {
            n.start = j.at("start").get<int>();
            n.end = j.at("end").get<int>();
            if (j.contains("split") && !j["split"].is_null()) n.split = j["split"].get<int>();
            if (j.contains("order") && !j["order"].is_null()) n.order = j["order"].get<int>();
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(std::string("bad tree node: ") + e.what());
        }
        int idx = static_cast<int>(nodes_.size());
        nodes_.push_back(n);
        const nlohmann::json& children = j.contains("children") ? j["children"]
                                                                : nlohmann::json::array();
        if (n.split >= 0) {
            if (children.size() != 2)
                throw StructureError("split node [" + std::to_string(n.start) + ", " +
                                     std::to_string(n.end) + ") must have two children");
            int left = node_from_json(children[0]);
            int right = node_from_json(children[1]);
            nodes_[static_cast<size_t>(idx)].left = left;
            nodes_[static_cast<size_t>(idx)].right = right;
        } else if (!children.empty()) {
            throw StructureError("leaf node [" + std::to_string(n.start) + ", " +
                                 std::to_string(n.end) + ") has children but no split");
        }
        return idx;
    }

    void validate() const {
        if (nodes_.empty()) throw StructureError("tree has no nodes");
        if (root().start != 0 || root().end != total_)
            throw StructureError("tree root does not span the timeline");
        int internal = (static_cast<int>(nodes_.size()) - 1) / 2;
        std::vector<bool> order_seen(static_cast<size_t>(internal), false);
        for (const TreeNode& n : nodes_) {
            if (n.split < 0) {
                if (n.order >= 0)
                    throw StructureError("leaf node carries a split order");
                continue;
            }
            const TreeNode& l = nodes_.at(static_cast<size_t>(n.left));
            const TreeNode& r = nodes_.at(static_cast<size_t>(n.right));
            if (l.start != n.start || l.end != n.split || r.start != n.split || r.end != n.end)
                throw StructureError("children of [" + std::to_string(n.start) + ", " +
                                     std::to_string(n.end) + ") do not match its split point");
            if (n.order < 0 || n.order >= internal ||
                order_seen[static_cast<size_t>(n.order)])
                throw StructureError("split orders are not a permutation of 0.." +
                                     std::to_string(internal - 1));
            order_seen[static_cast<size_t>(n.order)] = true;
        }
    }

    std::vector<TreeNode> nodes_;
    int total_ = 0;
    int min_segment_ = 1;
    int leaf_count_ = 1;
};

struct DivideStats {
    uint64_t loss_evals = 0;        // total split-loss evaluations
    uint64_t candidate_spans = 0;   // sum of span sizes over scanned nodes
};

// How leaves compete for the next division: by SSE gain (default), or by raw
// split loss, which favors small homogeneous leaves regardless of benefit.
enum class SplitScore { gain, loss };

inline SplitScore split_score_from_string(const std::string& name) {
    if (name == "gain") return SplitScore::gain;
    if (name == "loss") return SplitScore::loss;
    throw ConfigError("unknown split score '" + name + "'");
}

inline std::string to_string(SplitScore score) {
    return score == SplitScore::gain ? "gain" : "loss";
}

// Best-first divisive clustering. Every leaf's optimal split is computed
// exactly once, when the leaf is created, and parked in a priority queue
// keyed by the leaf score; the best-scoring leaf is split until k_max leaves
// are reached or every leaf is below 2 * min_segment. Ties break toward the
// leaf with the smallest start.
inline PartitionTree divide(const PrefixSums& ps, int k_max, int min_segment,
                            DivideStats* stats = nullptr,
                            SplitScore score = SplitScore::gain) {
    if (k_max < 1) throw std::invalid_argument("k_max must be >= 1");
    if (min_segment < 1) throw std::invalid_argument("min_segment must be >= 1");

    PartitionTree tree = PartitionTree::single_leaf(ps.size(), min_segment);

    struct HeapEntry {
        double key;  // gain, or negated loss; larger is better either way
        int start;
        int node;
        int split;
        bool operator<(const HeapEntry& other) const {
            if (key != other.key) return key < other.key;
            return start > other.start;
        }
    };
    std::priority_queue<HeapEntry> heap;

    uint64_t* evals = stats ? &stats->loss_evals : nullptr;
    auto push_candidate = [&](int node_idx) {
        const TreeNode& n = tree.node(node_idx);
        if (stats) stats->candidate_spans += static_cast<uint64_t>(n.end - n.start);
        std::optional<SplitCandidate> cand = best_split(ps, n.start, n.end, min_segment, evals);
        if (cand)
            heap.push({score == SplitScore::gain ? cand->gain : -cand->loss, cand->start,
                       node_idx, cand->split});
    };

    push_candidate(0);
    int order = 0;
    while (tree.leaf_count() < k_max && !heap.empty()) {
        HeapEntry top = heap.top();
        heap.pop();
        auto [left, right] = tree.split_leaf(top.node, top.split, order++);
        push_candidate(left);
        push_candidate(right);
    }
    return tree;
}

inline PartitionTree divide(const EmbeddingTimeline& embeddings, int k_max, int min_segment,
                            DivideStats* stats = nullptr,
                            SplitScore score = SplitScore::gain) {
    return divide(PrefixSums(embeddings), k_max, min_segment, stats, score);
}

// Deepest tree the size rule allows: divide with an unreachable K.
inline PartitionTree divide_full(const EmbeddingTimeline& embeddings, int min_segment,
                                 DivideStats* stats = nullptr) {
    return divide(embeddings, embeddings.size(), min_segment, stats);
}

inline FlatPartition leaves_at_k(const PartitionTree& tree, int k) { return tree.leaves_at_k(k); }

}  // namespace treeseg
