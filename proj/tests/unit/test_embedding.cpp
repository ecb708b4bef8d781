#include <gtest/gtest.h>

#include <numeric>
#include <random>

#include "influence/embedding.hpp"
#include "influence/synthetic.hpp"
#include "support/oracles.hpp"

using namespace influence;

namespace {

const Date kDay = *parse_date("2022-03-01");
using Pair = std::pair<std::uint32_t, std::uint32_t>;

BipartiteGraph graph_of(std::size_t nu, std::size_t na, const std::vector<Pair>& edges) {
    synth::PlantedGraph pg;
    for (std::size_t i = 0; i < nu; ++i) pg.users.push_back(synth::numbered("u", i));
    for (std::size_t i = 0; i < na; ++i) pg.assertions.push_back(synth::numbered("a", i));
    pg.edges = edges;
    return synth::to_graph(pg, kDay);
}

NodeId U(std::size_t i) { return {NodeKind::User, synth::numbered("u", i)}; }
NodeId A(std::size_t i) { return {NodeKind::Assertion, synth::numbered("a", i)}; }

}  // namespace

TEST(Popular, StarHub) {
    auto g = graph_of(4, 4, {{2, 0}, {2, 1}, {2, 2}, {2, 3}, {0, 0}});
    auto p = select_popular(g, 1, 1);
    EXPECT_EQ(p.users, std::vector<std::uint32_t>{2});
    EXPECT_EQ(p.assertions, std::vector<std::uint32_t>{0});
}

TEST(Popular, TiesGoToSmallestKeys) {
    auto g = graph_of(4, 4, {{0, 0}, {1, 1}, {2, 2}, {3, 3}});
    auto p = select_popular(g, 2, 3);
    EXPECT_EQ(p.users, (std::vector<std::uint32_t>{0, 1}));
    EXPECT_EQ(p.assertions, (std::vector<std::uint32_t>{0, 1, 2}));
    EXPECT_EQ(select_popular(g, 100, 100).users.size(), 4u);
    EXPECT_THROW(select_popular(g, 0, 1), ConfigError);
}

TEST(Popular, ZipfCoverage) {
    std::mt19937_64 rng(3);
    const std::size_t nu = 500, na = 500;
    std::vector<double> w(nu);
    for (std::size_t i = 0; i < nu; ++i) w[i] = 1.0 / static_cast<double>(i + 1);
    std::discrete_distribution<std::size_t> zipf(w.begin(), w.end());
    std::set<Pair> edges;
    while (edges.size() < 4000)
        edges.insert({static_cast<std::uint32_t>(zipf(rng)), static_cast<std::uint32_t>(zipf(rng))});
    auto g = graph_of(nu, na, {edges.begin(), edges.end()});
    auto p = select_popular(g, nu / 10, na / 10);
    std::set<std::uint32_t> pu(p.users.begin(), p.users.end()), pa(p.assertions.begin(), p.assertions.end());
    std::size_t covered = 0;
    for (const auto& e : g.edges()) covered += pu.contains(e.user) || pa.contains(e.assertion);
    EXPECT_GE(static_cast<double>(covered), 0.5 * static_cast<double>(g.edges().size()));
}

TEST(Propagate, PathAndMean) {
    // u0 - a0 - u1
    auto g = graph_of(2, 1, {{0, 0}, {1, 0}});
    EmbeddingTable t(2);
    t.set(U(0), {1, 0}, Provenance::Trained);
    auto out = propagate_embeddings(t, g);
    EXPECT_EQ(*out.vector_of(A(0)), (std::vector<double>{1, 0}));
    EXPECT_EQ(*out.vector_of(U(1)), (std::vector<double>{1, 0}));
    EXPECT_EQ(out.find(U(1))->provenance, Provenance::Propagated);
    EXPECT_EQ(out.find(U(0))->provenance, Provenance::Trained);

    EmbeddingTable t2(2);
    t2.set(U(0), {1, 0}, Provenance::Trained);
    t2.set(U(1), {0, 1}, Provenance::Trained);
    EXPECT_EQ(*propagate_embeddings(t2, g).vector_of(A(0)), (std::vector<double>{0.5, 0.5}));
}

TEST(Propagate, MatchesBfsAndLevelMeans) {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> coord(0.0, 2.0);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t nu = 20 + rng() % 80, na = 20 + rng() % 80;
        std::set<Pair> es;
        const std::size_t m = (nu + na) * (1 + rng() % 2) / 2;
        for (std::size_t k = 0; k < m; ++k)
            es.insert({static_cast<std::uint32_t>(rng() % nu), static_cast<std::uint32_t>(rng() % na)});
        auto g = graph_of(nu, na, {es.begin(), es.end()});
        const std::size_t n = nu + na;
        oracle::Adj adj(n);
        for (auto [u, a] : es) {
            adj[u].push_back(nu + a);
            adj[nu + a].push_back(u);
        }
        for (auto& l : adj) std::sort(l.begin(), l.end());
        auto id_of = [&](std::size_t i) { return i < nu ? g.user_id(static_cast<std::uint32_t>(i))
                                                        : g.assertion_id(static_cast<std::uint32_t>(i - nu)); };

        EmbeddingTable trained(2);
        std::vector<std::size_t> sources;
        for (std::size_t i = 0; i < n; ++i)
            if (rng() % 5 == 0) {
                trained.set(id_of(i), {coord(rng), coord(rng)}, Provenance::Trained);
                sources.push_back(i);
            }
        if (sources.empty()) continue;
        const auto reach = oracle::bfs_reachable(adj, sources);
        auto out = propagate_embeddings(trained, g);
        ASSERT_EQ(out.size(), n);

        // BFS levels from the trained set
        std::vector<int> level(n, -1);
        std::vector<std::size_t> frontier = sources;
        for (auto s : sources) level[s] = 0;
        for (int l = 1; !frontier.empty(); ++l) {
            std::vector<std::size_t> next;
            for (auto v : frontier)
                for (auto w : adj[v])
                    if (level[w] < 0) {
                        level[w] = l;
                        next.push_back(w);
                    }
            frontier = std::move(next);
        }
        for (std::size_t i = 0; i < n; ++i) {
            const auto* e = out.find(id_of(i));
            ASSERT_NE(e, nullptr);
            EXPECT_EQ(e->present(), static_cast<bool>(reach[i]));
            if (e->provenance != Provenance::Propagated) continue;
            // mean over the neighbors embedded one sweep earlier
            std::vector<double> sum(2, 0.0);
            std::size_t cnt = 0;
            for (auto w : adj[i])
                if (level[w] == level[i] - 1) {
                    const auto& v = *out.vector_of(id_of(w));
                    sum[0] += v[0];
                    sum[1] += v[1];
                    ++cnt;
                }
            ASSERT_GT(cnt, 0u);
            EXPECT_EQ(e->coords[0], sum[0] / static_cast<double>(cnt));
            EXPECT_EQ(e->coords[1], sum[1] / static_cast<double>(cnt));
        }
        // fixed point: feeding the result back changes nothing
        auto again = propagate_embeddings(out, g);
        for (const auto& [id, e] : out.entries()) {
            const auto* f = again.find(id);
            ASSERT_NE(f, nullptr);
            EXPECT_EQ(f->coords, e.coords);
        }
        EXPECT_EQ(propagate_embeddings(trained, g), out);
    }
}

TEST(Align, SwapIdentityAndMultiset) {
    EmbeddingTable prev(2);
    prev.set(U(0), {1.0, 0.1}, Provenance::Trained);
    prev.set(U(1), {0.2, 0.9}, Provenance::Trained);
    prev.set(U(2), {0.5, 0.4}, Provenance::Trained);
    const std::vector<std::size_t> swap = {1, 0};
    auto cur = permute_axes(prev, swap);
    auto r = align_axes(prev, cur);
    EXPECT_EQ(r.permutation, swap);
    EXPECT_EQ(r.table, prev);
    auto id = align_axes(prev, prev);
    EXPECT_EQ(id.permutation, (std::vector<std::size_t>{0, 1}));
    EXPECT_FALSE(id.no_shared_nodes);
    for (const auto& [node, e] : cur.entries()) {
        auto a = e.coords, b = r.table.find(node)->coords;
        std::sort(a.begin(), a.end());
        std::sort(b.begin(), b.end());
        EXPECT_EQ(a, b);
    }
}

TEST(Align, NoSharedNodes) {
    EmbeddingTable prev(2), cur(2);
    prev.set(U(0), {1, 0}, Provenance::Trained);
    cur.set(U(1), {0, 1}, Provenance::Trained);
    auto r = align_axes(prev, cur);
    EXPECT_TRUE(r.no_shared_nodes);
    EXPECT_EQ(r.table, cur);
}

TEST(Align, NoisyPermutationRecovered) {
    std::mt19937_64 rng(12);
    std::normal_distribution<double> noise(0.0, 0.05);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    for (std::size_t d : {2u, 3u, 4u}) {
        for (int trial = 0; trial < 10; ++trial) {
            EmbeddingTable prev(d);
            for (std::size_t i = 0; i < 60; ++i) {
                // each node loads mostly on one axis
                std::vector<double> c(d);
                for (auto& x : c) x = 0.1 * u01(rng);
                c[i % d] += 0.5 + u01(rng);
                prev.set(U(i), c, Provenance::Trained);
            }
            std::vector<std::size_t> perm(d);
            std::iota(perm.begin(), perm.end(), std::size_t{0});
            std::shuffle(perm.begin(), perm.end(), rng);
            EmbeddingTable cur(d);
            for (const auto& [node, e] : prev.entries()) {
                std::vector<double> c(d);
                for (std::size_t k = 0; k < d; ++k) c[k] = std::max(0.0, e.coords[perm[k]] + noise(rng));
                cur.set(node, c, Provenance::Trained);
            }
            // cur axis k holds prev axis perm[k]; undoing it takes inverse
            std::vector<std::size_t> inv(d);
            for (std::size_t k = 0; k < d; ++k) inv[perm[k]] = k;
            EXPECT_EQ(align_axes(prev, cur).permutation, inv);
        }
    }
}

TEST(Table, RejectsNegativeAndWrongDimension) {
    EmbeddingTable t(2);
    EXPECT_THROW(t.set(U(0), {-0.1, 0}, Provenance::Trained), FormatError);
    EXPECT_THROW(t.set(U(0), {0.1}, Provenance::Trained), FormatError);
    EXPECT_THROW(t.set(U(0), {NAN, 0}, Provenance::Trained), FormatError);
    t.set(U(0), {-0.0, 1}, Provenance::Trained);
    EXPECT_FALSE(std::signbit(t.vector_of(U(0))->at(0)));
}
