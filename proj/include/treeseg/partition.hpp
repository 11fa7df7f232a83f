#pragma once

#include <algorithm>
#include <string>
#include <utility>
#include <vector>

#include "treeseg/common.hpp"

namespace treeseg {

// A contiguous utterance span, start inclusive, end exclusive.
struct Segment {
    int start = 0;
    int end = 0;

    int size() const { return end - start; }
    bool operator==(const Segment&) const = default;
};

// An ordered, disjoint, covering list of segments over a timeline [0, total).
struct FlatPartition {
    int total = 0;
    std::vector<Segment> segments;

    int size() const { return static_cast<int>(segments.size()); }
    bool operator==(const FlatPartition&) const = default;

    // Interior cut positions, strictly increasing, each in {1..total-1}.
    // A boundary at p separates utterance p-1 from p.
    std::vector<int> boundaries() const {
        std::vector<int> cuts;
        cuts.reserve(segments.size());
        for (size_t i = 1; i < segments.size(); ++i) cuts.push_back(segments[i].start);
        return cuts;
    }

    static FlatPartition from_segments(int total, std::vector<Segment> segments) {
        FlatPartition p{total, std::move(segments)};
        validate(p);
        return p;
    }

    static FlatPartition from_boundaries(int total, const std::vector<int>& cuts) {
        std::vector<Segment> segs;
        segs.reserve(cuts.size() + 1);
        int prev = 0;
        for (int c : cuts) {
            segs.push_back({prev, c});
            prev = c;
        }
        segs.push_back({prev, total});
        return from_segments(total, std::move(segs));
    }

    static void validate(const FlatPartition& p) {
        if (p.total <= 0) throw StructureError("partition over empty timeline");
        if (p.segments.empty()) throw StructureError("partition has no segments");
        if (p.segments.front().start != 0)
            throw StructureError("partition does not start at 0");
        for (size_t i = 0; i < p.segments.size(); ++i) {
            const Segment& s = p.segments[i];
            if (s.size() <= 0)
                throw StructureError("empty segment [" + std::to_string(s.start) + ", " +
                                     std::to_string(s.end) + ")");
            if (i + 1 < p.segments.size() && p.segments[i + 1].start != s.end)
                throw StructureError("gap or overlap at position " + std::to_string(s.end));
        }
        if (p.segments.back().end != p.total)
            throw StructureError("partition does not cover the timeline");
    }
};

// ---------------------------------------------------------------------------
// Ground-truth annotation trees
// ---------------------------------------------------------------------------

// One annotation node: a span plus the child spans that partition it.
struct AnnotationNode {
    int start = 0;
    int end = 0;
    std::vector<AnnotationNode> children;

    bool operator==(const AnnotationNode&) const = default;
};

namespace detail {

inline int validate_annotation(const AnnotationNode& node, int depth) {
    if (node.end <= node.start)
        throw StructureError("empty annotation node [" + std::to_string(node.start) + ", " +
                             std::to_string(node.end) + ")");
    int max_depth = depth;
    if (!node.children.empty()) {
        int cursor = node.start;
        for (const AnnotationNode& child : node.children) {
            if (child.start != cursor)
                throw StructureError("children of [" + std::to_string(node.start) + ", " +
                                     std::to_string(node.end) + ") leave a gap or overlap at " +
                                     std::to_string(cursor));
            cursor = child.end;
            max_depth = std::max(max_depth, validate_annotation(child, depth + 1));
        }
        if (cursor != node.end)
            throw StructureError("children of [" + std::to_string(node.start) + ", " +
                                 std::to_string(node.end) + ") do not cover it (stop at " +
                                 std::to_string(cursor) + ")");
    }
    return max_depth;
}

}  // namespace detail

// A validated hierarchical ground-truth partition. The root spans the whole
// timeline; children of every node partition the node's span.
class GroundTruthTree {
public:
    static GroundTruthTree from_node(AnnotationNode root, int timeline_len) {
        if (timeline_len <= 0) throw StructureError("annotation over empty timeline");
        if (root.start != 0 || root.end != timeline_len)
            throw StructureError("annotation root [" + std::to_string(root.start) + ", " +
                                 std::to_string(root.end) + ") does not span [0, " +
                                 std::to_string(timeline_len) + ")");
        int depth = detail::validate_annotation(root, 0);
        return GroundTruthTree(std::move(root), timeline_len, depth);
    }

    const AnnotationNode& root() const { return root_; }
    int timeline_len() const { return total_; }

    // Maximum node depth; the root has depth 0. A tree of depth d supports
    // resolution levels 1..d.
    int depth() const { return depth_; }

    bool operator==(const GroundTruthTree& other) const {
        return total_ == other.total_ && root_ == other.root_;
    }

private:
    GroundTruthTree(AnnotationNode root, int total, int depth)
        : root_(std::move(root)), total_(total), depth_(depth) {}

    AnnotationNode root_;
    int total_;
    int depth_;
};

// Flat partition induced by the sub-tree of all nodes of depth <= tau:
// leaves shallower than tau stay leaves, nodes at depth tau become the
// frontier.
inline FlatPartition flatten_at_depth(const GroundTruthTree& tree, int tau) {
    if (tau < 1 || tau > tree.depth())
        throw std::invalid_argument("depth level " + std::to_string(tau) +
                                    " out of range 1.." + std::to_string(tree.depth()));
    std::vector<Segment> segs;
    auto collect = [&](auto&& self, const AnnotationNode& node, int depth) -> void {
        if (depth == tau || node.children.empty()) {
            segs.push_back({node.start, node.end});
            return;
        }
        for (const AnnotationNode& child : node.children) self(self, child, depth + 1);
    };
    collect(collect, tree.root(), 0);
    return FlatPartition::from_segments(tree.timeline_len(), std::move(segs));
}

// Merge segments smaller than min_size into their immediate successor; an
// undersized final segment merges into its predecessor. Cascades left to
// right until stable. The result is either free of undersized segments or a
// single segment.
inline FlatPartition prune_flat(const FlatPartition& partition, int min_size = 5) {
    FlatPartition::validate(partition);
    if (min_size < 1) throw std::invalid_argument("min_size must be >= 1");
    std::vector<Segment> segs = partition.segments;
    size_t i = 0;
    while (segs.size() > 1 && i < segs.size()) {
        if (segs[i].size() >= min_size) {
            ++i;
            continue;
        }
        if (i + 1 < segs.size()) {
            segs[i + 1].start = segs[i].start;
            segs.erase(segs.begin() + static_cast<long>(i));
        } else {
            segs[i - 1].end = segs[i].end;
            segs.pop_back();
            i -= 1;
        }
    }
    return FlatPartition{partition.total, std::move(segs)};
}

}  // namespace treeseg
