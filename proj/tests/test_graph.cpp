#include <doctest.h>

#include <random>

#include "regnet/graph.hpp"
#include "regnet/matops.hpp"

using namespace regnet;
using namespace regnet::graph;

namespace {

Mat adjacency_from_edges(int nodes, const std::vector<std::array<int, 2>>& edges,
                         double weight = 1.0) {
    Mat a = Mat::Zero(nodes, nodes);
    for (const auto& e : edges) a(e[1], e[0]) = weight;   // e = {from, to}
    return a;
}

// Two-snapshot chain through node 0: neither snapshot is connected on its
// own, the union is the chain 0 -> 1 -> 2 -> 3 -> 4.
SwitchingDigraph chain_switching(double dwell = 10.0, bool periodic = true) {
    const Mat g1 = adjacency_from_edges(5, {{0, 1}, {2, 3}});
    const Mat g2 = adjacency_from_edges(5, {{1, 2}, {3, 4}});
    return SwitchingDigraph({g1, g2}, {{0, dwell}, {1, dwell}}, 0.5, periodic, true);
}

// Root set {0,1,2} is a closed 3-cycle feeding the chain 2 -> 3 -> 4.
SwitchingDigraph rooted_switching() {
    const Mat g1 = adjacency_from_edges(5, {{0, 1}, {2, 0}, {2, 3}});
    const Mat g2 = adjacency_from_edges(5, {{1, 2}, {3, 4}});
    return SwitchingDigraph({g1, g2}, {{0, 3.0}, {1, 3.0}}, 0.5, false, false);
}

} // namespace

TEST_CASE("laplacian: zero row sums and sign pattern") {
    const Mat a = adjacency_from_edges(3, {{0, 1}, {1, 2}, {2, 0}}, 2.0);
    const Mat L = laplacian(a);
    for (int i = 0; i < 3; ++i) CHECK(L.row(i).sum() == doctest::Approx(0.0));
    CHECK(L(1, 0) == -2.0);
    CHECK(L(1, 1) == 2.0);
}

TEST_CASE("reduced_laplacian: drops the reference row and column") {
    const Mat a = adjacency_from_edges(3, {{0, 1}, {1, 2}});
    const Mat Lr = reduced_laplacian(laplacian(a));
    REQUIRE(Lr.rows() == 2);
    CHECK(Lr(0, 0) == 1.0);
    CHECK(Lr(1, 0) == -1.0);
    CHECK(Lr(1, 1) == 1.0);
}

TEST_CASE("adjacency_at: right continuity and periodic wrap") {
    const SwitchingDigraph g = chain_switching(10.0);
    CHECK(g.period() == 20.0);
    CHECK(g.adjacency_at(0.0)(1, 0) == 1.0);        // snapshot 1 active
    CHECK(g.adjacency_at(9.9999)(1, 0) == 1.0);
    CHECK(g.adjacency_at(10.0)(2, 1) == 1.0);       // switch instant takes the new graph
    CHECK(g.adjacency_at(10.0)(1, 0) == 0.0);
    CHECK(g.adjacency_at(20.0)(1, 0) == 1.0);       // wraps to the first snapshot
    CHECK(g.adjacency_at(35.0)(2, 1) == 1.0);
    CHECK(g.next_switch_after(0.0) == doctest::Approx(10.0));
    CHECK(g.next_switch_after(10.0) == doctest::Approx(20.0));
    CHECK(g.next_switch_after(20.0) == doctest::Approx(30.0));
}

TEST_CASE("adjacency_at: periodicity over whole cycles") {
    const SwitchingDigraph g = chain_switching(10.0);
    for (double t : {0.0, 3.7, 10.0, 12.2, 19.99}) {
        CHECK((g.adjacency_at(t) - g.adjacency_at(t + g.period())).norm() == 0.0);
        CHECK((g.adjacency_at(t) - g.adjacency_at(t + 3 * g.period())).norm() == 0.0);
    }
}

TEST_CASE("contains_spanning_tree: single snapshots fail, the union succeeds") {
    const Mat g1 = adjacency_from_edges(5, {{0, 1}, {2, 3}});
    const Mat g2 = adjacency_from_edges(5, {{1, 2}, {3, 4}});
    CHECK_FALSE(contains_spanning_tree(g1, 0));
    CHECK_FALSE(contains_spanning_tree(g2, 0));
    CHECK(contains_spanning_tree(g1.cwiseMax(g2), 0));
    CHECK(contains_spanning_tree(g1.cwiseMax(g2)));   // unrooted variant agrees
}

TEST_CASE("uniformly_contains_spanning_tree: window must span both snapshots") {
    const SwitchingDigraph g = chain_switching(10.0);
    CHECK(uniformly_contains_spanning_tree(g, 0, g.period()).holds);
    CHECK(uniformly_contains_spanning_tree(g, 0, g.period() + 5.0).holds);
    const WindowedCheck tight = uniformly_contains_spanning_tree(g, 0, 10.0);
    CHECK_FALSE(tight.holds);
    CHECK(tight.failing_window_start >= 0.0);
}

TEST_CASE("uniformly_contains_spanning_tree: aperiodic schedules are flagged") {
    const SwitchingDigraph g = chain_switching(10.0, /*periodic=*/false);
    const WindowedCheck check = uniformly_contains_spanning_tree(g, 0, 20.0);
    CHECK(check.horizon_limited);
}

TEST_CASE("reduced laplacian time-average of a uniformly connected graph sits in the open right half plane") {
    const SwitchingDigraph g = chain_switching(10.0);
    REQUIRE(uniformly_contains_spanning_tree(g, 0, g.period()).holds);
    Mat avg = Mat::Zero(4, 4);
    double t = 0.0;
    for (const auto& e : g.schedule()) {
        avg += e.dwell * reduced_laplacian(laplacian(g.adjacency_at(t)));
        t += e.dwell;
    }
    avg /= g.period();
    const auto spec = matops::eig(avg);
    for (Eigen::Index i = 0; i < spec.eigenvalues.size(); ++i)
        CHECK(spec.eigenvalues[i].real() > 0.0);
}

TEST_CASE("reduced laplacian time-average property holds on random jointly connected graphs") {
    std::mt19937_64 rng(606);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 40; ++trial) {
        const int n = 3 + static_cast<int>(rng() % 5);
        // random spanning tree rooted at 0 plus noise edges, split over two snapshots
        std::vector<std::array<int, 2>> tree;
        for (int v = 1; v < n; ++v)
            tree.push_back({static_cast<int>(rng() % static_cast<unsigned long>(v)), v});
        std::vector<std::array<int, 2>> extra;
        for (int e = 0; e < n; ++e) {
            const int from = static_cast<int>(rng() % static_cast<unsigned long>(n));
            const int to = 1 + static_cast<int>(rng() % static_cast<unsigned long>(n - 1));
            if (from != to) extra.push_back({from, to});
        }
        std::vector<std::array<int, 2>> first, second;
        for (const auto& e : tree) (u(rng) < 0.5 ? first : second).push_back(e);
        for (const auto& e : extra) (u(rng) < 0.5 ? first : second).push_back(e);
        const Mat a1 = adjacency_from_edges(n, first);
        const Mat a2 = adjacency_from_edges(n, second);
        const SwitchingDigraph g({a1, a2}, {{0, 1.0}, {1, 1.0}}, 0.5, true, true);
        if (!uniformly_contains_spanning_tree(g, 0, g.period()).holds) continue;
        const Mat avg = 0.5 * (reduced_laplacian(laplacian(a1)) + reduced_laplacian(laplacian(a2)));
        const auto spec = matops::eig(avg);
        for (Eigen::Index i = 0; i < spec.eigenvalues.size(); ++i)
            CHECK(spec.eigenvalues[i].real() > 1e-12);
    }
}

TEST_CASE("rooted_component_check: closed root cycle passes, inbound edges break it") {
    const SwitchingDigraph good = rooted_switching();
    CHECK(rooted_component_check(good, {0, 1, 2}, good.period()).holds);
    CHECK_FALSE(rooted_component_check(good, {0, 1}, good.period()).holds);

    // an edge 3 -> 0 reaches into the root set, so it is no longer closed
    const Mat g1 = adjacency_from_edges(5, {{0, 1}, {2, 0}, {2, 3}, {3, 0}});
    const Mat g2 = adjacency_from_edges(5, {{1, 2}, {3, 4}});
    const SwitchingDigraph tainted({g1, g2}, {{0, 3.0}, {1, 3.0}}, 0.5, false, false);
    CHECK_FALSE(rooted_component_check(tainted, {0, 1, 2}, tainted.period()).holds);

    // two disjoint closed components: no unique source
    const Mat h1 = adjacency_from_edges(4, {{0, 1}, {1, 0}});
    const Mat h2 = adjacency_from_edges(4, {{2, 3}, {3, 2}});
    const SwitchingDigraph split({h1, h2}, {{0, 1.0}, {1, 1.0}}, 0.5, true, false);
    CHECK_FALSE(rooted_component_check(split, {0, 1}, split.period()).holds);
}

TEST_CASE("strongly_connected_components: cycle plus tail") {
    const Mat a = adjacency_from_edges(4, {{0, 1}, {1, 2}, {2, 0}, {2, 3}});
    const auto comps = strongly_connected_components(a);
    REQUIRE(comps.size() == 2);
    bool sawCycle = false, sawTail = false;
    for (const auto& c : comps) {
        if (c == std::vector<int>{0, 1, 2}) sawCycle = true;
        if (c == std::vector<int>{3}) sawTail = true;
    }
    CHECK(sawCycle);
    CHECK(sawTail);
}

TEST_CASE("SwitchingDigraph: validation failures") {
    const Mat ok = adjacency_from_edges(3, {{0, 1}, {1, 2}});

    Mat below = ok;
    below(1, 0) = 0.1;   // nonzero but under epsilon
    CHECK_THROWS_AS(SwitchingDigraph({below}, {{0, 1.0}}, 0.5, true, true),
                    std::invalid_argument);

    Mat selfLoop = ok;
    selfLoop(1, 1) = 1.0;
    CHECK_THROWS_AS(SwitchingDigraph({selfLoop}, {{0, 1.0}}, 0.5, true, true),
                    std::invalid_argument);

    Mat intoReference = ok;
    intoReference(0, 2) = 1.0;
    CHECK_THROWS_AS(SwitchingDigraph({intoReference}, {{0, 1.0}}, 0.5, true, true),
                    std::invalid_argument);
    CHECK_NOTHROW(SwitchingDigraph({intoReference}, {{0, 1.0}}, 0.5, true, false));

    CHECK_THROWS_AS(SwitchingDigraph({ok}, {}, 0.5, true, true), std::invalid_argument);
    CHECK_THROWS_AS(SwitchingDigraph({ok}, {{0, 0.0}}, 0.5, true, true), std::invalid_argument);
    CHECK_THROWS_AS(SwitchingDigraph({ok}, {{3, 1.0}}, 0.5, true, true), std::invalid_argument);
    CHECK_THROWS_AS(SwitchingDigraph({}, {{0, 1.0}}, 0.5, true, true), std::invalid_argument);
}
