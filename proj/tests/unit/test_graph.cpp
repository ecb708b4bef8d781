#include <gtest/gtest.h>

#include <random>
#include <set>

#include "influence/graph.hpp"
#include "influence/graph_io.hpp"
#include "influence/synthetic.hpp"
#include "support/oracles.hpp"

using namespace influence;

namespace {

Instant at(const char* s) { return *parse_instant(s); }

Post make_post(std::string id, std::string author, const char* ts, std::string text = {}) {
    Post p;
    p.post_id = std::move(id);
    p.author_id = std::move(author);
    p.timestamp = at(ts);
    p.text = std::move(text);
    return p;
}

using EdgeKey = std::tuple<std::string, std::string, EdgeKind, Instant>;

std::set<EdgeKey> edge_keys(const BipartiteGraph& g) {
    std::set<EdgeKey> out;
    for (const auto& e : g.edges())
        out.insert({g.users()[e.user], g.assertions()[e.assertion].key, e.kind, e.timestamp});
    return out;
}

// 30 days, a few posts per day, with reposts of earlier posts.
std::vector<Post> thirty_day_batch(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<Post> posts;
    for (int d = 0; d < 30; ++d)
        for (int k = 0; k < 4; ++k) {
            Post p;
            p.post_id = "p" + std::to_string(posts.size());
            p.author_id = "u" + std::to_string(rng() % 12);
            p.timestamp = Instant{*parse_date("2022-03-01") + std::chrono::days{d}} + std::chrono::hours{rng() % 24};
            if (!posts.empty() && rng() % 2) p.repost_of = posts[rng() % posts.size()].post_id;
            else p.text = "see https://site" + std::to_string(rng() % 3) + ".org/x";
            posts.push_back(std::move(p));
        }
    return posts;
}

}  // namespace

TEST(Graph, PostCitingUrl) {
    std::vector<Post> posts = {make_post("1", "u1", "2022-03-01T10:00:00Z", "https://reuters.com/a")};
    auto g = build_graph(posts);
    EXPECT_EQ(g.users().size(), 1u);
    EXPECT_EQ(g.assertions().size(), 2u);
    EXPECT_EQ(g.edges().size(), 2u);
    auto url = g.find_assertion("https://reuters.com/a");
    ASSERT_TRUE(url);
    EXPECT_EQ(g.assertions()[*url].kind, AssertionKind::Url);
}

TEST(Graph, RepostEdgeAndStubs) {
    std::vector<Post> posts = {make_post("1", "u1", "2022-03-01T10:00:00Z", "orig"),
                               make_post("2", "u2", "2022-03-01T11:00:00Z"),
                               make_post("3", "u3", "2022-03-01T12:00:00Z", "reply")};
    posts[1].repost_of = "1";
    posts[2].reply_to = "missing";
    auto g = build_graph(posts);
    auto u2 = g.find_user("u2");
    auto p1 = g.find_assertion("1");
    ASSERT_TRUE(u2 && p1);
    EXPECT_TRUE(g.has_edge(*u2, *p1));
    auto stub = g.find_assertion("missing");
    ASSERT_TRUE(stub);
    EXPECT_EQ(g.assertions()[*stub].kind, AssertionKind::Stub);
    EXPECT_EQ(g.users().size(), 3u);  // users only: no user-user edges exist
    for (const auto& e : g.edges()) {
        EXPECT_LT(e.user, g.users().size());
        EXPECT_LT(e.assertion, g.assertions().size());
    }
}

TEST(Graph, LaterDefinitionUpgradesStub) {
    std::vector<Post> posts = {make_post("2", "u2", "2022-03-01T11:00:00Z"),
                               make_post("1", "u1", "2022-03-01T10:00:00Z", "orig")};
    posts[0].repost_of = "1";
    auto g = build_graph(posts);
    auto p1 = g.find_assertion("1");
    EXPECT_EQ(g.assertions()[*p1].kind, AssertionKind::Post);
    EXPECT_EQ(g.assertions()[*p1].author, "u1");
}

TEST(Graph, RangeRestriction) {
    std::vector<Post> posts = {make_post("1", "u1", "2022-03-01T10:00:00Z"),
                               make_post("2", "u2", "2022-03-05T10:00:00Z")};
    DateRange only{*parse_date("2022-03-04"), *parse_date("2022-03-06")};
    auto g = build_graph(posts, only);
    EXPECT_EQ(g.users(), std::vector<std::string>{"u2"});
    EXPECT_EQ(g.date_range(), only);
    EXPECT_EQ(build_graph(posts).date_range()->days(), 5);
}

TEST(Graph, CanonicalConstructionRejectsBadInput) {
    EXPECT_THROW(BipartiteGraph({"u"}, {}, {{0, 0, EdgeKind::Post, {}}}, std::nullopt), FormatError);
    EXPECT_THROW(BipartiteGraph({"u", "u"}, {}, {}, std::nullopt), FormatError);
    DateRange r{*parse_date("2022-03-01"), *parse_date("2022-03-01")};
    EXPECT_THROW(BipartiteGraph({"u"}, {{"a", AssertionKind::Url, {}, {}, {}}},
                                {{0, 0, EdgeKind::CiteURL, at("2022-03-02T00:00:00Z")}}, r),
                 FormatError);
}

TEST(Windows, Construction) {
    DateRange r{*parse_date("2022-03-01"), *parse_date("2022-04-07")};  // 38 days
    auto w = make_windows(r, 20, 2);
    ASSERT_EQ(w.size(), 10u);
    EXPECT_EQ(format_date(w.back().start), "2022-03-19");
    EXPECT_EQ(w.back().end(), r.last + std::chrono::days{1});
    EXPECT_EQ(make_windows({r.first, r.first}, 20, 1).size(), 1u);
    EXPECT_THROW(make_windows(r, 0, 1), ConfigError);
}

TEST(WindowSlice, EmptyAndIdentity) {
    auto posts = thirty_day_batch(3);
    auto g = build_graph(posts);
    TimeWindow none{*parse_date("2021-01-01"), 5, 0};
    EXPECT_TRUE(window_slice(g, none).edges().empty());
    EXPECT_TRUE(window_slice(g, none).empty());
    TimeWindow all{g.date_range()->first, g.date_range()->days(), 0};
    auto s = window_slice(g, all);
    EXPECT_EQ(s.users(), g.users());
    EXPECT_EQ(s.assertions(), g.assertions());
    EXPECT_EQ(s.edges(), g.edges());
}

TEST(WindowSlice, OverlapSetAlgebra) {
    auto posts = thirty_day_batch(11);
    auto g = build_graph(posts);
    const Date d0 = g.date_range()->first;
    TimeWindow w0{d0, 20, 0}, w1{d0 + std::chrono::days{1}, 20, 1};
    auto e0 = edge_keys(window_slice(g, w0));
    auto e1 = edge_keys(window_slice(g, w1));
    std::set<EdgeKey> expected_shared, shared;
    for (const auto& k : edge_keys(g)) {
        const Date d = day_of(std::get<3>(k));
        if (d >= d0 + std::chrono::days{1} && d < d0 + std::chrono::days{20}) expected_shared.insert(k);
    }
    std::set_intersection(e0.begin(), e0.end(), e1.begin(), e1.end(), std::inserter(shared, shared.end()));
    EXPECT_FALSE(shared.empty());
    EXPECT_EQ(shared, expected_shared);
}

TEST(WindowSlice, SubsetAndUnion) {
    auto posts = thirty_day_batch(5);
    auto g = build_graph(posts);
    auto all = edge_keys(g);
    std::set<EdgeKey> uni;
    for (const auto& w : make_windows(*g.date_range(), 7, 7)) {
        auto s = edge_keys(window_slice(g, w));
        for (const auto& k : s) EXPECT_TRUE(all.contains(k));
        uni.insert(s.begin(), s.end());
    }
    // windows of 7 over 30 days leave the last 2 days uncovered; add them
    TimeWindow tail{g.date_range()->first + std::chrono::days{28}, 2, 99};
    auto t = edge_keys(window_slice(g, tail));
    uni.insert(t.begin(), t.end());
    EXPECT_EQ(uni, all);
}

TEST(Projection, RepostCountsAndSelfLoops) {
    std::vector<Post> posts = {make_post("1", "u1", "2022-03-01T10:00:00Z"),
                               make_post("2", "u2", "2022-03-01T11:00:00Z"),
                               make_post("3", "u2", "2022-03-01T12:00:00Z"),
                               make_post("4", "u1", "2022-03-01T13:00:00Z"),
                               make_post("5", "u3", "2022-03-01T14:00:00Z", "https://x.org/")};
    posts[1].repost_of = "1";
    posts[2].quote_of = "1";
    posts[3].repost_of = "1";  // own post
    auto ug = user_projection(build_graph(posts));
    auto u1 = ug.find("u1"), u2 = ug.find("u2"), u3 = ug.find("u3");
    ASSERT_TRUE(u1 && u2 && u3);
    EXPECT_EQ(ug.weight(*u1, *u2), 2u);
    EXPECT_EQ(ug.weight(*u2, *u1), 2u);
    EXPECT_EQ(ug.weight(*u1, *u1), 0u);
    EXPECT_EQ(ug.edges().size(), 1u);
}

TEST(Projection, PlantedSplitHasHighModularity) {
    synth::CorpusSpec spec;
    spec.users = 200;
    spec.posts = 3000;
    spec.communities = 2;
    spec.start = *parse_date("2022-03-01");
    spec.days = 20;
    auto corpus = synth::generate_corpus(spec);
    auto ug = user_projection(build_graph(corpus.posts));
    const std::size_t n = ug.size();
    std::vector<std::vector<double>> A(n, std::vector<double>(n, 0.0));
    for (std::uint32_t u = 0; u < n; ++u)
        for (std::uint32_t v = 0; v < n; ++v) A[u][v] = ug.weight(u, v);
    std::vector<int> label(n);
    for (std::uint32_t u = 0; u < n; ++u) {
        const auto idx = static_cast<std::size_t>(std::stoul(ug.users()[u].substr(4)));
        label[u] = static_cast<int>(corpus.user_community[idx]);
    }
    // symmetry
    for (std::uint32_t u = 0; u < n; ++u)
        for (std::uint32_t v = 0; v < n; ++v) ASSERT_EQ(A[u][v], A[v][u]);
    EXPECT_GT(oracle::modularity(A, label), 0.3);
}

TEST(Snapshot, RoundTripIsByteIdentical) {
    auto posts = thirty_day_batch(8);
    posts[3].text = "tab\there\nnewline \\ backslash";
    auto g = build_graph(posts);
    const std::string bytes = graph_to_string(g);
    auto back = graph_from_string(bytes);
    EXPECT_EQ(back, g);
    EXPECT_EQ(graph_to_string(back), bytes);
}

TEST(Snapshot, EmptyGraphAndCorruption) {
    BipartiteGraph empty;
    EXPECT_EQ(graph_from_string(graph_to_string(empty)), empty);
    EXPECT_THROW(graph_from_string("nope\n"), FormatError);
    auto s = graph_to_string(build_graph(thirty_day_batch(1)));
    s.insert(s.find("edges\t") + 6, "9");
    EXPECT_THROW(graph_from_string(s), FormatError);
}
