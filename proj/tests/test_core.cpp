#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "treeseg/core.hpp"

#include "test_support.hpp"

using namespace treeseg;
using testsupport::Vectors;

namespace {

Vectors scalar_series(const std::vector<double>& values) {
    Vectors e;
    for (double v : values) e.push_back({v});
    return e;
}

EmbeddingTimeline as_timeline(const Vectors& e) { return {e, "synthetic", 0}; }

}  // namespace

TEST_CASE("prefix sums of a single vector") {
    PrefixSums ps(Vectors{{3.0, 4.0}});
    CHECK(ps.size() == 1);
    CHECK(ps.dim() == 2);
    CHECK(ps.segment_sse(0, 1) == doctest::Approx(0.0));
}

TEST_CASE("prefix sums match the hand-computed 1-D series") {
    // E = [1, 2, 3] has S1 = [0,1,3,6], S2 = [0,1,5,14]; SSE over the whole
    // series is 14 - 36/3 = 2.
    PrefixSums ps(scalar_series({1, 2, 3}));
    CHECK(ps.segment_sse(0, 3) == doctest::Approx(2.0));
    CHECK(ps.segment_sse(0, 2) == doctest::Approx(0.5));
    CHECK(ps.segment_sse(1, 3) == doctest::Approx(0.5));
}

TEST_CASE("segment_sse of a constant segment is zero") {
    PrefixSums ps(scalar_series({7, 7, 7, 7}));
    CHECK(ps.segment_sse(0, 4) == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("segment_sse hand case: [0, 10] has SSE 50") {
    PrefixSums ps(scalar_series({0, 10}));
    CHECK(ps.segment_sse(0, 2) == doctest::Approx(50.0));
}

TEST_CASE("segment_sse matches the two-pass oracle on random segments") {
    SplitMix64 rng(31);
    for (int iter = 0; iter < 500; ++iter) {
        int n = 2 + static_cast<int>(rng.next_below(30));
        int dim = 1 + static_cast<int>(rng.next_below(4));
        Vectors e = testsupport::random_vectors(rng, n, dim, 10.0);
        PrefixSums ps(e);
        int a = static_cast<int>(rng.next_below(static_cast<uint64_t>(n)));
        int b = a + 1 +
                static_cast<int>(rng.next_below(static_cast<uint64_t>(n - a)));
        double fast = ps.segment_sse(a, b);
        double slow = testsupport::naive_sse(e, a, b);
        CHECK(fast == doctest::Approx(slow).epsilon(1e-7));
    }
}

TEST_CASE("segment_sse rejects bad spans") {
    PrefixSums ps(scalar_series({1, 2}));
    CHECK_THROWS_AS(static_cast<void>(ps.segment_sse(1, 1)), std::invalid_argument);
    CHECK_THROWS_AS(static_cast<void>(ps.segment_sse(0, 3)), std::invalid_argument);
}

TEST_CASE("split_loss hand cases on [0,0,0,10,10,10]") {
    PrefixSums ps(scalar_series({0, 0, 0, 10, 10, 10}));
    CHECK(ps.split_loss(0, 6, 3) == doctest::Approx(0.0));
    CHECK(ps.split_loss(0, 6, 2) == doctest::Approx(75.0));
    CHECK_THROWS_AS(static_cast<void>(ps.split_loss(0, 6, 0)), std::invalid_argument);
    CHECK_THROWS_AS(static_cast<void>(ps.split_loss(0, 6, 6)), std::invalid_argument);
}

TEST_CASE("split_loss is zero everywhere on constant series") {
    PrefixSums ps(scalar_series({4, 4, 4, 4, 4}));
    for (int i = 1; i < 5; ++i) CHECK(ps.split_loss(0, 5, i) == doctest::Approx(0.0));
}

TEST_CASE("best_split refuses spans smaller than 2M") {
    PrefixSums ps(scalar_series({1, 2, 3, 4, 5, 6, 7, 8, 9}));
    CHECK_FALSE(best_split(ps, 0, 9, 5).has_value());
    CHECK(best_split(ps, 0, 9, 4).has_value());
}

TEST_CASE("best_split finds the planted boundary") {
    PrefixSums ps(scalar_series({0, 0, 0, 10, 10, 10}));
    std::optional<SplitCandidate> cand = best_split(ps, 0, 6, 1);
    REQUIRE(cand.has_value());
    CHECK(cand->split == 3);
    CHECK(cand->loss == doctest::Approx(0.0));
    CHECK(cand->gain == doctest::Approx(150.0));
}

TEST_CASE("best_split respects the symmetric candidate range") {
    PrefixSums ps(scalar_series({0, 0, 10, 10, 10, 10}));
    // M = 3 leaves exactly one candidate, the midpoint, even though the
    // optimal unconstrained split would be at 2.
    std::optional<SplitCandidate> cand = best_split(ps, 0, 6, 3);
    REQUIRE(cand.has_value());
    CHECK(cand->split == 3);
}

TEST_CASE("best_split ties break toward the smallest split index") {
    PrefixSums ps(scalar_series({5, 5, 5, 5}));
    std::optional<SplitCandidate> cand = best_split(ps, 0, 4, 1);
    REQUIRE(cand.has_value());
    CHECK(cand->split == 1);
}

TEST_CASE("best_split equals exhaustive scan on random spans") {
    SplitMix64 rng(12);
    for (int iter = 0; iter < 300; ++iter) {
        int n = 2 + static_cast<int>(rng.next_below(36));
        int dim = 1 + static_cast<int>(rng.next_below(4));
        int m = 1 + static_cast<int>(rng.next_below(3));
        Vectors e = testsupport::random_vectors(rng, n, dim);
        PrefixSums ps(e);
        std::optional<SplitCandidate> fast = best_split(ps, 0, n, m);
        std::optional<testsupport::NaiveSplit> slow = testsupport::naive_best_split(e, 0, n, m);
        REQUIRE(fast.has_value() == slow.has_value());
        if (fast) {
            CHECK(fast->split == slow->split);
            CHECK(fast->loss == doctest::Approx(slow->loss).epsilon(1e-9));
        }
    }
}

TEST_CASE("divide with K_max=1 returns a single leaf") {
    PartitionTree tree = divide(as_timeline(scalar_series({1, 2, 3, 4})), 1, 1);
    CHECK(tree.leaf_count() == 1);
    CHECK(tree.root().split == -1);
    CHECK(tree.leaves().segments == std::vector<Segment>{{0, 4}});
}

TEST_CASE("divide terminates by the size rule") {
    // T = 9, M = 5: no admissible split at all.
    Vectors e = scalar_series({1, 9, 2, 8, 3, 7, 4, 6, 5});
    PartitionTree tree = divide(as_timeline(e), 100, 5);
    CHECK(tree.leaf_count() == 1);
}

TEST_CASE("divide recovers three constant runs") {
    std::vector<double> values;
    for (int i = 0; i < 10; ++i) values.push_back(0);
    for (int i = 0; i < 10; ++i) values.push_back(10);
    for (int i = 0; i < 10; ++i) values.push_back(20);
    PartitionTree tree = divide(as_timeline(scalar_series(values)), 3, 2);
    CHECK(tree.leaf_count() == 3);
    CHECK(tree.leaves().segments == std::vector<Segment>{{0, 10}, {10, 20}, {20, 30}});
}

TEST_CASE("divide matches the naive rescanning oracle") {
    SplitMix64 rng(99);
    const int min_sizes[] = {1, 2, 3, 5};
    for (int iter = 0; iter < 200; ++iter) {
        int n = 2 + static_cast<int>(rng.next_below(39));
        int dim = 1 + static_cast<int>(rng.next_below(4));
        int m = min_sizes[rng.next_below(4)];
        int k_max = 1 + static_cast<int>(rng.next_below(static_cast<uint64_t>(n)));
        Vectors e = testsupport::random_vectors(rng, n, dim);
        PartitionTree fast = divide(as_timeline(e), k_max, m);
        PartitionTree slow = testsupport::naive_divide(e, k_max, m);
        CHECK(fast == slow);
    }
}

TEST_CASE("every leaf respects the minimum segment size") {
    SplitMix64 rng(7);
    for (int iter = 0; iter < 100; ++iter) {
        int n = 2 + static_cast<int>(rng.next_below(60));
        int m = 1 + static_cast<int>(rng.next_below(5));
        Vectors e = testsupport::random_vectors(rng, n, 2);
        PartitionTree tree = divide(as_timeline(e), n, m);
        for (const Segment& s : tree.leaves().segments) CHECK(s.size() >= std::min(m, n));
    }
}

TEST_CASE("leaves_at_k replays the division sequence") {
    std::vector<double> values;
    for (int i = 0; i < 10; ++i) values.push_back(0);
    for (int i = 0; i < 10; ++i) values.push_back(10);
    for (int i = 0; i < 10; ++i) values.push_back(20);
    PartitionTree tree = divide(as_timeline(scalar_series(values)), 3, 2);
    CHECK(tree.leaves_at_k(1).segments == std::vector<Segment>{{0, 30}});
    // First split lands at 10 (equal losses at 10 and 20; the smaller index wins).
    CHECK(tree.leaves_at_k(2).segments == std::vector<Segment>{{0, 10}, {10, 30}});
    CHECK(tree.leaves_at_k(3) == tree.leaves());
    CHECK_THROWS_AS(static_cast<void>(tree.leaves_at_k(0)), std::invalid_argument);
    CHECK_THROWS_AS(static_cast<void>(tree.leaves_at_k(4)), std::invalid_argument);
}

TEST_CASE("boundaries nest across K and SSE is nonincreasing") {
    SplitMix64 rng(5);
    for (int iter = 0; iter < 100; ++iter) {
        int n = 4 + static_cast<int>(rng.next_below(40));
        Vectors e = testsupport::random_vectors(rng, n, 3);
        PrefixSums ps(e);
        PartitionTree tree = divide(as_timeline(e), n, 1);
        double prev_sse = std::numeric_limits<double>::infinity();
        std::vector<int> prev_cuts;
        for (int k = 1; k <= tree.leaf_count(); ++k) {
            FlatPartition p = tree.leaves_at_k(k);
            CHECK(p.size() == k);
            std::vector<int> cuts = p.boundaries();
            CHECK(std::includes(cuts.begin(), cuts.end(), prev_cuts.begin(), prev_cuts.end()));
            double sse = 0.0;
            for (const Segment& s : p.segments) sse += ps.segment_sse(s.start, s.end);
            CHECK(sse <= prev_sse + 1e-9);
            prev_sse = sse;
            prev_cuts = std::move(cuts);
        }
    }
}

TEST_CASE("candidate search is one linear pass per node") {
    SplitMix64 rng(17);
    for (int iter = 0; iter < 50; ++iter) {
        int n = 10 + static_cast<int>(rng.next_below(60));
        Vectors e = testsupport::random_vectors(rng, n, 2);
        DivideStats stats;
        divide(PrefixSums(e), n, 2, &stats);
        CHECK(stats.loss_evals <= stats.candidate_spans);
    }
}

TEST_CASE("split orders are unique and sequential") {
    SplitMix64 rng(23);
    Vectors e = testsupport::random_vectors(rng, 32, 2);
    PartitionTree tree = divide(as_timeline(e), 32, 2);
    std::vector<int> orders;
    for (int i = 0; i < tree.node_count(); ++i)
        if (tree.node(i).split >= 0) orders.push_back(tree.node(i).order);
    std::sort(orders.begin(), orders.end());
    for (size_t i = 0; i < orders.size(); ++i) CHECK(orders[i] == static_cast<int>(i));
    CHECK(orders.size() == static_cast<size_t>(tree.leaf_count() - 1));
}

TEST_CASE("tree JSON round-trip is lossless") {
    SplitMix64 rng(41);
    Vectors e = testsupport::random_vectors(rng, 24, 2);
    PartitionTree tree = divide(as_timeline(e), 5, 3);
    nlohmann::json j = tree.to_json();
    PartitionTree back = PartitionTree::from_json(j);
    CHECK(back == tree);
    CHECK(back.to_json().dump() == j.dump());
    CHECK(j.at("K").get<int>() == tree.leaf_count());
}

TEST_CASE("tree JSON parsing validates structure") {
    nlohmann::json bad = nlohmann::json::parse(R"({
        "T": 10, "M": 1, "K": 2,
        "root": {"start": 0, "end": 10, "split": 4, "order": 0, "children": [
            {"start": 0, "end": 5, "split": null, "order": null, "children": []},
            {"start": 5, "end": 10, "split": null, "order": null, "children": []}]}
    })");
    CHECK_THROWS_AS(static_cast<void>(PartitionTree::from_json(bad)), StructureError);

    nlohmann::json bad_order = nlohmann::json::parse(R"({
        "T": 10, "M": 1, "K": 2,
        "root": {"start": 0, "end": 10, "split": 5, "order": 3, "children": [
            {"start": 0, "end": 5, "split": null, "order": null, "children": []},
            {"start": 5, "end": 10, "split": null, "order": null, "children": []}]}
    })");
    CHECK_THROWS_AS(static_cast<void>(PartitionTree::from_json(bad_order)), StructureError);
}

TEST_CASE("split-score loss favors the lowest-loss leaf over the highest gain") {
    // After the first split the left leaf [0,1,8,9] offers gain 64 at loss 1,
    // the right leaf [100,100.1,100.2] offers gain 0.015 at loss 0.005.
    Vectors e = scalar_series({0, 1, 8, 9, 100, 100.1, 100.2});
    EmbeddingTimeline t = as_timeline(e);
    PartitionTree by_gain = divide(t, 3, 1);
    PartitionTree by_loss = divide(t, 3, 1, nullptr, SplitScore::loss);
    CHECK(by_gain.leaves_at_k(2) == by_loss.leaves_at_k(2));
    CHECK(by_gain.leaves_at_k(3).boundaries() == std::vector<int>{2, 4});
    std::vector<int> loss_cuts = by_loss.leaves_at_k(3).boundaries();
    REQUIRE(loss_cuts.size() == 2);
    CHECK(loss_cuts[0] == 4);
    CHECK((loss_cuts[1] == 5 || loss_cuts[1] == 6));
}

TEST_CASE("divide validates its arguments") {
    EmbeddingTimeline e = as_timeline(scalar_series({1, 2, 3}));
    CHECK_THROWS_AS(static_cast<void>(divide(e, 0, 1)), std::invalid_argument);
    CHECK_THROWS_AS(static_cast<void>(divide(e, 2, 0)), std::invalid_argument);
}
