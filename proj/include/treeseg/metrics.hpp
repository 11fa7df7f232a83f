#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "treeseg/common.hpp"
#include "treeseg/partition.hpp"

namespace treeseg {

// Canonical boundary form consumed by both metrics: a timeline length plus
// the sorted interior cut positions. A boundary at p separates utterance p-1
// from utterance p.
struct BoundarySeq {
    int total = 0;
    std::vector<int> positions;

    bool operator==(const BoundarySeq&) const = default;

    static BoundarySeq from_positions(int total, std::vector<int> positions) {
        if (total < 1) throw std::invalid_argument("timeline length must be >= 1");
        int prev = 0;
        for (int p : positions) {
            if (p <= prev || p >= total)
                throw std::invalid_argument("boundary " + std::to_string(p) +
                                            " out of order or outside {1.." +
                                            std::to_string(total - 1) + "}");
            prev = p;
        }
        return BoundarySeq{total, std::move(positions)};
    }

    static BoundarySeq from_partition(const FlatPartition& p) {
        FlatPartition::validate(p);
        return BoundarySeq{p.total, p.boundaries()};
    }

    // Number of boundaries q with a < q <= b.
    int count_in(int a, int b) const {
        auto lo = std::upper_bound(positions.begin(), positions.end(), a);
        auto hi = std::upper_bound(positions.begin(), positions.end(), b);
        return static_cast<int>(hi - lo);
    }
};

// Default probe width: half the mean reference segment length, rounded,
// floored at 1.
inline int default_probe_width(const BoundarySeq& ref) {
    int segments = static_cast<int>(ref.positions.size()) + 1;
    long k = std::lround(static_cast<double>(ref.total) / (2.0 * segments));
    return static_cast<int>(std::max(1L, k));
}

namespace detail {

inline int checked_probe_width(const BoundarySeq& ref, const BoundarySeq& hyp,
                               std::optional<int> k) {
    if (ref.total != hyp.total)
        throw std::invalid_argument("reference and hypothesis timeline lengths differ (" +
                                    std::to_string(ref.total) + " vs " +
                                    std::to_string(hyp.total) + ")");
    if (ref.total < 2) throw std::invalid_argument("metrics need a timeline of length >= 2");
    int width = k ? *k : default_probe_width(ref);
    if (width < 1) throw std::invalid_argument("probe width must be >= 1");
    if (width >= ref.total)
        throw DegenerateInputError("probe width " + std::to_string(width) +
                                   " >= timeline length " + std::to_string(ref.total));
    return width;
}

// Cumulative boundary counts: cum[p] = number of boundaries <= p.
inline std::vector<int> boundary_prefix(const BoundarySeq& b) {
    std::vector<int> cum(static_cast<size_t>(b.total) + 1, 0);
    for (int p : b.positions) cum[static_cast<size_t>(p)] = 1;
    for (size_t i = 1; i < cum.size(); ++i) cum[i] += cum[i - 1];
    return cum;
}

}  // namespace detail

// Pk (Beeferman et al. 1999): slide a probe pair (t, t+k) over the timeline
// and count positions where reference and hypothesis disagree on whether the
// two utterances share a segment.
inline double pk(const BoundarySeq& ref, const BoundarySeq& hyp, std::optional<int> k = {}) {
    int width = detail::checked_probe_width(ref, hyp, k);
    std::vector<int> ref_cum = detail::boundary_prefix(ref);
    std::vector<int> hyp_cum = detail::boundary_prefix(hyp);
    int probes = ref.total - width;
    int disagreements = 0;
    for (int t = 0; t < probes; ++t) {
        // Utterances t and t+width share a segment iff no boundary lies in (t, t+width].
        bool ref_same = ref_cum[static_cast<size_t>(t + width)] - ref_cum[static_cast<size_t>(t)] == 0;
        bool hyp_same = hyp_cum[static_cast<size_t>(t + width)] - hyp_cum[static_cast<size_t>(t)] == 0;
        if (ref_same != hyp_same) ++disagreements;
    }
    return static_cast<double>(disagreements) / static_cast<double>(probes);
}

// WinDiff (Pevzner & Hearst 2002): same sliding window, counting positions
// where the number of boundaries inside the window differs.
inline double windiff(const BoundarySeq& ref, const BoundarySeq& hyp, std::optional<int> k = {}) {
    int width = detail::checked_probe_width(ref, hyp, k);
    std::vector<int> ref_cum = detail::boundary_prefix(ref);
    std::vector<int> hyp_cum = detail::boundary_prefix(hyp);
    int probes = ref.total - width;
    int mismatches = 0;
    for (int t = 0; t < probes; ++t) {
        int ref_n = ref_cum[static_cast<size_t>(t + width)] - ref_cum[static_cast<size_t>(t)];
        int hyp_n = hyp_cum[static_cast<size_t>(t + width)] - hyp_cum[static_cast<size_t>(t)];
        if (ref_n != hyp_n) ++mismatches;
    }
    return static_cast<double>(mismatches) / static_cast<double>(probes);
}

}  // namespace treeseg
