#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "treeseg/common.hpp"
#include "treeseg/partition.hpp"

namespace treeseg {

// Common query interface for segmenters: ask for K segments, get a flat
// partition back. Implementations may return fewer segments than requested
// when size constraints make K unreachable.
class Segmenter {
public:
    virtual ~Segmenter() = default;

    virtual std::string name() const = 0;

    // Called once before any query; max_k is the largest K the caller will
    // request. Lets tree-based segmenters build their structure exactly once.
    virtual void prepare(int max_k) { (void)max_k; }

    virtual FlatPartition query(int k) = 0;
};

// Equidistant segmentation: segment b spans [floor(b*T/K), floor((b+1)*T/K)).
// Sizes differ by at most one.
inline FlatPartition equi_seg(int total, int k) {
    if (k < 1 || k > total)
        throw std::invalid_argument("segment count " + std::to_string(k) +
                                    " out of range 1.." + std::to_string(total));
    std::vector<Segment> segs;
    segs.reserve(static_cast<size_t>(k));
    for (int b = 0; b < k; ++b) {
        int start = static_cast<int>((static_cast<int64_t>(b) * total) / k);
        int end = static_cast<int>((static_cast<int64_t>(b) + 1) * total / k);
        segs.push_back({start, end});
    }
    return FlatPartition::from_segments(total, std::move(segs));
}

// Random segmentation: K-1 distinct boundaries drawn uniformly without
// replacement from {1..T-1} via a partial Fisher-Yates shuffle over a
// SplitMix64 stream. Deterministic given the seed.
inline FlatPartition random_seg(int total, int k, uint64_t seed) {
    if (k < 1 || k > total)
        throw std::invalid_argument("segment count " + std::to_string(k) +
                                    " out of range 1.." + std::to_string(total));
    std::vector<int> pool(static_cast<size_t>(total) - 1);
    std::iota(pool.begin(), pool.end(), 1);
    SplitMix64 rng(seed);
    std::vector<int> cuts;
    cuts.reserve(static_cast<size_t>(k) - 1);
    for (int j = 0; j < k - 1; ++j) {
        size_t pick = static_cast<size_t>(j) +
                      static_cast<size_t>(rng.next_below(pool.size() - static_cast<size_t>(j)));
        std::swap(pool[static_cast<size_t>(j)], pool[pick]);
        cuts.push_back(pool[static_cast<size_t>(j)]);
    }
    std::sort(cuts.begin(), cuts.end());
    return FlatPartition::from_boundaries(total, cuts);
}

class EquiSegmenter : public Segmenter {
public:
    explicit EquiSegmenter(int total) : total_(total) {}
    std::string name() const override { return "equi"; }
    FlatPartition query(int k) override { return equi_seg(total_, k); }

private:
    int total_;
};

// A single random draw per query. Repetition and averaging are the
// evaluation harness's job, not the baseline's.
class RandomSegmenter : public Segmenter {
public:
    RandomSegmenter(int total, uint64_t seed) : total_(total), seed_(seed) {}
    std::string name() const override { return "random"; }
    FlatPartition query(int k) override { return random_seg(total_, k, seed_); }

private:
    int total_;
    uint64_t seed_;
};

}  // namespace treeseg
