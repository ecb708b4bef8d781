#pragma once

// Link scoring and graph cleaning. A scorer rates (user, assertion) pairs in
// [0,1]; cleaning imputes high-scoring non-edges and drops low-scoring edges.
// The default scorer is neighborhood Jaccard:
//
//   N(u) = assertions engaged by u, excluding a
//   N(a) = assertions engaged by a's other engagers (users != u), excluding a
//   s(u,a) = |N(u) ∩ N(a)| / |N(u) ∪ N(a)|, 0 when the union is empty

#include <algorithm>
#include <concepts>
#include <cstdint>
#include <ostream>
#include <queue>
#include <set>
#include <span>
#include <vector>

#include "influence/error.hpp"
#include "influence/graph.hpp"
#include "influence/textio.hpp"

namespace influence {

struct LinkScore {
    NodeId user;
    NodeId assertion;
    double score = 0.0;
    bool existing = false;

    bool operator==(const LinkScore&) const = default;
};

// A scorer rates many users against one assertion at once.
template <typename S>
concept LinkScorer = requires(const S& s, std::uint32_t a, std::span<const std::uint32_t> users,
                              std::span<double> out) {
    { s.score_assertion(a, users, out) };
};

class NeighborhoodJaccardScorer {
public:
    explicit NeighborhoodJaccardScorer(const BipartiteGraph& g) : g_(&g) {}

    void score_assertion(std::uint32_t a, std::span<const std::uint32_t> users, std::span<double> out) const {
        const auto& g = *g_;
        // cnt[b]: number of a's engagers that engage b
        std::vector<std::uint32_t> touched;
        cnt_.resize(g.assertions().size(), 0);
        for (auto w : g.assertion_neighbors(a))
            for (auto b : g.user_neighbors(w))
                if (b != a && cnt_[b]++ == 0) touched.push_back(b);
        const auto base = touched.size();

        for (std::size_t i = 0; i < users.size(); ++i) {
            const auto u = users[i];
            const std::uint32_t self = g.has_edge(u, a) ? 1 : 0;
            std::size_t nu = 0, inter = 0, lost = 0;
            for (auto b : g.user_neighbors(u)) {
                if (b == a) continue;
                ++nu;
                const auto c = cnt_[b];
                if (c > self) ++inter;
                else if (c > 0) ++lost;  // only u engaged b among a's engagers
            }
            const std::size_t na = base - lost;
            const std::size_t uni = nu + na - inter;
            out[i] = uni == 0 ? 0.0 : std::clamp(static_cast<double>(inter) / static_cast<double>(uni), 0.0, 1.0);
        }
        for (auto b : touched) cnt_[b] = 0;
    }

    double score(std::uint32_t u, std::uint32_t a) const {
        double s = 0.0;
        score_assertion(a, std::span<const std::uint32_t>(&u, 1), std::span<double>(&s, 1));
        return s;
    }

private:
    const BipartiteGraph* g_;
    mutable std::vector<std::uint32_t> cnt_;
};

// Scores every existing (user, assertion) pair, plus the candidate_budget
// best-scoring non-edges. Non-edges are drawn from users within three hops of
// the assertion; all other pairs score zero under a neighborhood scorer.
template <LinkScorer Scorer>
std::vector<LinkScore> score_links(const BipartiteGraph& g, std::size_t candidate_budget, const Scorer& scorer) {
    if (candidate_budget == 0) throw ConfigError("candidate_budget", "must be positive");
    if (g.empty()) throw ConfigError("graph", "cannot score links of an empty graph");

    struct Candidate {
        double score;
        std::uint32_t u, a;
    };
    // Min-heap on rank: worst candidate at the top.
    auto better = [](const Candidate& x, const Candidate& y) {
        if (x.score != y.score) return x.score > y.score;
        return std::tie(x.u, x.a) < std::tie(y.u, y.a);
    };
    std::priority_queue<Candidate, std::vector<Candidate>, decltype(better)> heap(better);

    std::vector<LinkScore> existing;
    std::vector<std::uint32_t> users;
    std::vector<double> scores;
    std::vector<char> mark(g.users().size(), 0);
    for (std::uint32_t a = 0; a < g.assertions().size(); ++a) {
        auto engagers = g.assertion_neighbors(a);
        users.assign(engagers.begin(), engagers.end());
        for (auto u : users) mark[u] = 1;
        const std::size_t n_existing = users.size();
        for (auto w : engagers)
            for (auto b : g.user_neighbors(w)) {
                if (b == a) continue;
                for (auto u : g.assertion_neighbors(b))
                    if (!mark[u]) {
                        mark[u] = 1;
                        users.push_back(u);
                    }
            }
        for (auto u : users) mark[u] = 0;
        std::sort(users.begin() + static_cast<std::ptrdiff_t>(n_existing), users.end());
        scores.assign(users.size(), 0.0);
        scorer.score_assertion(a, users, scores);
        for (std::size_t i = 0; i < users.size(); ++i) {
            if (i < n_existing) {
                existing.push_back({g.user_id(users[i]), g.assertion_id(a), scores[i], true});
                continue;
            }
            if (scores[i] <= 0.0) continue;
            Candidate c{scores[i], users[i], a};
            if (heap.size() < candidate_budget) {
                heap.push(c);
            } else if (better(c, heap.top())) {
                heap.pop();
                heap.push(c);
            }
        }
    }

    std::sort(existing.begin(), existing.end(), [](const LinkScore& x, const LinkScore& y) {
        return std::tie(x.user, x.assertion) < std::tie(y.user, y.assertion);
    });
    std::vector<Candidate> cands;
    while (!heap.empty()) {
        cands.push_back(heap.top());
        heap.pop();
    }
    std::sort(cands.begin(), cands.end(), better);
    for (const auto& c : cands) existing.push_back({g.user_id(c.u), g.assertion_id(c.a), c.score, false});
    return existing;
}

inline std::vector<LinkScore> score_links(const BipartiteGraph& g, std::size_t candidate_budget) {
    return score_links(g, candidate_budget, NeighborhoodJaccardScorer(g));
}

// Non-edges scoring strictly above add_threshold become Imputed edges at the
// midpoint of the graph's date range; existing pairs scoring below
// remove_threshold lose their parallel edges. Never removed: Post
// (authorship) edges, and edges to an assertion with a single engager,
// whose neighborhood score carries no evidence.
namespace detail {
struct EdgeByPair {
    using Pair = std::pair<std::uint32_t, std::uint32_t>;
    bool operator()(const Edge& e, const Pair& p) const { return std::pair{e.user, e.assertion} < p; }
    bool operator()(const Pair& p, const Edge& e) const { return p < std::pair{e.user, e.assertion}; }
};
}  // namespace detail

inline BipartiteGraph apply_cleaning(const BipartiteGraph& g, std::span<const LinkScore> scores, double add_threshold,
                                     double remove_threshold) {
    if (!(add_threshold >= 0.0 && add_threshold <= 1.0)) throw ConfigError("add_threshold", "must lie in [0,1]");
    if (!(remove_threshold >= 0.0 && remove_threshold <= 1.0))
        throw ConfigError("remove_threshold", "must lie in [0,1]");

    std::set<std::pair<std::uint32_t, std::uint32_t>> drop;
    std::set<std::pair<std::uint32_t, std::uint32_t>> add;
    for (const auto& s : scores) {
        auto u = g.find_user(s.user.key);
        auto a = g.find_assertion(s.assertion.key);
        if (!u || !a) throw FormatError("score references a node absent from the graph");
        const bool present = g.has_edge(*u, *a);
        if (present && s.score < remove_threshold && g.assertion_neighbors(*a).size() > 1) drop.insert({*u, *a});
        if (!present && s.score > add_threshold) add.insert({*u, *a});
    }
    // pairs holding nothing but authorship edges stay as they are
    std::erase_if(drop, [&](const auto& pair) {
        auto [lo, hi] = std::equal_range(g.edges().begin(), g.edges().end(), pair, detail::EdgeByPair{});
        return std::all_of(lo, hi, [](const Edge& e) { return e.kind == EdgeKind::Post; });
    });
    if (drop.empty() && add.empty()) return g;

    std::vector<Edge> edges;
    edges.reserve(g.edges().size() + add.size());
    for (const auto& e : g.edges())
        if (e.kind == EdgeKind::Post || !drop.contains({e.user, e.assertion})) edges.push_back(e);
    if (!add.empty()) {
        const Instant t = g.date_range()->midpoint();
        for (auto [u, a] : add) edges.push_back({u, a, EdgeKind::Imputed, t});
    }
    return BipartiteGraph(g.users(), g.assertions(), std::move(edges), g.date_range());
}

inline void write_scores(std::ostream& out, std::span<const LinkScore> scores) {
    out << "user\tassertion\tscore\texisting\n";
    for (const auto& s : scores)
        out << textio::escape(s.user.key) << '\t' << textio::escape(s.assertion.key) << '\t'
            << textio::format_real(s.score) << '\t' << (s.existing ? 1 : 0) << '\n';
}

}  // namespace influence
