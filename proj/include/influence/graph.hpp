#pragma once

// Bipartite user/assertion interaction graph, time-window slicing and the
// user-user interaction projection.
//
// A BipartiteGraph is an immutable canonical snapshot: users and assertions
// are sorted by key, edges by (user, assertion, kind, timestamp). Equal
// inputs therefore produce identical graphs and identical snapshot bytes.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_map>
#include <utility>
#include <vector>

#include "influence/error.hpp"
#include "influence/ingest.hpp"
#include "influence/timeutil.hpp"

namespace influence {

enum class NodeKind : std::uint8_t { User, Assertion };

struct NodeId {
    NodeKind kind = NodeKind::User;
    std::string key;

    auto operator<=>(const NodeId&) const = default;
    bool operator==(const NodeId&) const = default;
};

enum class AssertionKind : std::uint8_t { Post, Url, Stub };
enum class EdgeKind : std::uint8_t { Post, Repost, Reply, Quote, CiteURL, Imputed };

inline std::string_view to_string(NodeKind k) { return k == NodeKind::User ? "user" : "assertion"; }

inline std::string_view to_string(AssertionKind k) {
    switch (k) {
        case AssertionKind::Post: return "post";
        case AssertionKind::Url: return "url";
        case AssertionKind::Stub: return "stub";
    }
    return "?";
}

inline std::string_view to_string(EdgeKind k) {
    switch (k) {
        case EdgeKind::Post: return "post";
        case EdgeKind::Repost: return "repost";
        case EdgeKind::Reply: return "reply";
        case EdgeKind::Quote: return "quote";
        case EdgeKind::CiteURL: return "cite_url";
        case EdgeKind::Imputed: return "imputed";
    }
    return "?";
}

inline std::optional<AssertionKind> assertion_kind_from(std::string_view s) {
    if (s == "post") return AssertionKind::Post;
    if (s == "url") return AssertionKind::Url;
    if (s == "stub") return AssertionKind::Stub;
    return std::nullopt;
}

inline std::optional<EdgeKind> edge_kind_from(std::string_view s) {
    for (auto k : {EdgeKind::Post, EdgeKind::Repost, EdgeKind::Reply, EdgeKind::Quote, EdgeKind::CiteURL,
                   EdgeKind::Imputed})
        if (to_string(k) == s) return k;
    return std::nullopt;
}

inline bool is_interaction(EdgeKind k) {
    return k == EdgeKind::Repost || k == EdgeKind::Reply || k == EdgeKind::Quote;
}

struct AssertionNode {
    std::string key;  // post id or normalized URL
    AssertionKind kind = AssertionKind::Post;
    std::string author;                // empty for URLs and stubs
    std::optional<Instant> timestamp;  // posts only
    std::string text;

    bool operator==(const AssertionNode&) const = default;
};

struct Edge {
    std::uint32_t user = 0;
    std::uint32_t assertion = 0;
    EdgeKind kind = EdgeKind::Post;
    Instant timestamp{};

    bool operator==(const Edge&) const = default;
};

// Inclusive range of UTC days.
struct DateRange {
    Date first{};
    Date last{};

    bool contains(Instant t) const { return day_of(t) >= first && day_of(t) <= last; }
    int days() const { return static_cast<int>((last - first).count()) + 1; }
    Instant midpoint() const {
        using namespace std::chrono;
        return Instant{first} + seconds{static_cast<std::int64_t>(days()) * 86400 / 2};
    }
    bool operator==(const DateRange&) const = default;
};

struct TimeWindow {
    Date start{};
    int length_days = 1;
    std::size_t index = 0;

    Date end() const { return start + std::chrono::days{length_days}; }  // exclusive
    bool contains(Instant t) const { return day_of(t) >= start && day_of(t) < end(); }
    bool contains(Date d) const { return d >= start && d < end(); }
    bool operator==(const TimeWindow&) const = default;
};

// Windows of length_days starting at range.first, advancing by shift_days,
// as long as the window fits in the range (always at least one window).
inline std::vector<TimeWindow> make_windows(const DateRange& range, int length_days, int shift_days) {
    if (length_days < 1) throw ConfigError("window_length_days", "must be >= 1");
    if (shift_days < 1) throw ConfigError("shift_days", "must be >= 1");
    std::vector<TimeWindow> out;
    Date start = range.first;
    do {
        out.push_back({start, length_days, out.size()});
        start += std::chrono::days{shift_days};
    } while (start + std::chrono::days{length_days} <= range.last + std::chrono::days{1});
    return out;
}

class BipartiteGraph;

// Accumulates nodes and edges by key; finish() yields a canonical graph.
class GraphBuilder {
public:
    std::uint32_t add_user(const std::string& key) {
        auto [it, fresh] = user_index_.try_emplace(key, static_cast<std::uint32_t>(users_.size()));
        if (fresh) users_.push_back(key);
        return it->second;
    }

    // Adds or upgrades an assertion. A Post definition replaces an earlier Stub.
    std::uint32_t add_assertion(AssertionNode node) {
        auto it = assertion_index_.find(node.key);
        if (it == assertion_index_.end()) {
            const auto idx = static_cast<std::uint32_t>(assertions_.size());
            assertion_index_.emplace(node.key, idx);
            assertions_.push_back(std::move(node));
            return idx;
        }
        auto& existing = assertions_[it->second];
        if (existing.kind == AssertionKind::Stub && node.kind != AssertionKind::Stub) existing = std::move(node);
        return it->second;
    }

    void add_edge(std::uint32_t user, std::uint32_t assertion, EdgeKind kind, Instant t) {
        edges_.push_back({user, assertion, kind, t});
    }

    BipartiteGraph finish(std::optional<DateRange> range) &&;

private:
    std::vector<std::string> users_;
    std::vector<AssertionNode> assertions_;
    std::vector<Edge> edges_;
    std::unordered_map<std::string, std::uint32_t> user_index_;
    std::unordered_map<std::string, std::uint32_t> assertion_index_;
};

class BipartiteGraph {
public:
    BipartiteGraph() = default;

    // Canonicalizes the given node/edge tables. Throws FormatError if an edge
    // references a missing node or lies outside the date range.
    BipartiteGraph(std::vector<std::string> users, std::vector<AssertionNode> assertions, std::vector<Edge> edges,
                   std::optional<DateRange> range)
        : range_(range) {
        std::vector<std::uint32_t> uorder(users.size()), aorder(assertions.size());
        for (std::uint32_t i = 0; i < uorder.size(); ++i) uorder[i] = i;
        for (std::uint32_t i = 0; i < aorder.size(); ++i) aorder[i] = i;
        std::sort(uorder.begin(), uorder.end(), [&](auto x, auto y) { return users[x] < users[y]; });
        std::sort(aorder.begin(), aorder.end(),
                  [&](auto x, auto y) { return assertions[x].key < assertions[y].key; });
        std::vector<std::uint32_t> uremap(users.size()), aremap(assertions.size());
        users_.reserve(users.size());
        assertions_.reserve(assertions.size());
        for (std::uint32_t i = 0; i < uorder.size(); ++i) {
            uremap[uorder[i]] = i;
            users_.push_back(std::move(users[uorder[i]]));
        }
        for (std::uint32_t i = 0; i < aorder.size(); ++i) {
            aremap[aorder[i]] = i;
            assertions_.push_back(std::move(assertions[aorder[i]]));
        }
        for (std::size_t i = 1; i < users_.size(); ++i)
            if (users_[i] == users_[i - 1]) throw FormatError("duplicate user key " + users_[i]);
        for (std::size_t i = 1; i < assertions_.size(); ++i)
            if (assertions_[i].key == assertions_[i - 1].key)
                throw FormatError("duplicate assertion key " + assertions_[i].key);

        edges_ = std::move(edges);
        for (auto& e : edges_) {
            if (e.user >= users_.size() || e.assertion >= assertions_.size())
                throw FormatError("edge references a missing node");
            e.user = uremap[e.user];
            e.assertion = aremap[e.assertion];
            if (range_ && !range_->contains(e.timestamp))
                throw FormatError("edge timestamp " + format_instant(e.timestamp) + " outside graph date range");
        }
        if (!edges_.empty() && !range_) throw FormatError("graph with edges needs a date range");
        std::sort(edges_.begin(), edges_.end(), [](const Edge& x, const Edge& y) {
            return std::tie(x.user, x.assertion, x.kind, x.timestamp) <
                   std::tie(y.user, y.assertion, y.kind, y.timestamp);
        });
        build_adjacency();
    }

    const std::vector<std::string>& users() const { return users_; }
    const std::vector<AssertionNode>& assertions() const { return assertions_; }
    const std::vector<Edge>& edges() const { return edges_; }
    const std::optional<DateRange>& date_range() const { return range_; }
    bool empty() const { return users_.empty() && assertions_.empty(); }

    std::optional<std::uint32_t> find_user(std::string_view key) const {
        auto it = std::lower_bound(users_.begin(), users_.end(), key,
                                   [](const std::string& a, std::string_view b) { return a < b; });
        if (it == users_.end() || *it != key) return std::nullopt;
        return static_cast<std::uint32_t>(it - users_.begin());
    }

    std::optional<std::uint32_t> find_assertion(std::string_view key) const {
        auto it = std::lower_bound(assertions_.begin(), assertions_.end(), key,
                                   [](const AssertionNode& a, std::string_view b) { return a.key < b; });
        if (it == assertions_.end() || it->key != key) return std::nullopt;
        return static_cast<std::uint32_t>(it - assertions_.begin());
    }

    // Distinct neighbors, ascending.
    std::span<const std::uint32_t> user_neighbors(std::uint32_t u) const {
        return {user_adj_.data() + user_off_[u], user_off_[u + 1] - user_off_[u]};
    }
    std::span<const std::uint32_t> assertion_neighbors(std::uint32_t a) const {
        return {assertion_adj_.data() + assertion_off_[a], assertion_off_[a + 1] - assertion_off_[a]};
    }

    // Degrees count parallel edges.
    std::size_t user_degree(std::uint32_t u) const { return user_degree_[u]; }
    std::size_t assertion_degree(std::uint32_t a) const { return assertion_degree_[a]; }

    bool has_edge(std::uint32_t u, std::uint32_t a) const {
        auto n = user_neighbors(u);
        return std::binary_search(n.begin(), n.end(), a);
    }

    NodeId user_id(std::uint32_t u) const { return {NodeKind::User, users_[u]}; }
    NodeId assertion_id(std::uint32_t a) const { return {NodeKind::Assertion, assertions_[a].key}; }

    bool operator==(const BipartiteGraph& o) const {
        return users_ == o.users_ && assertions_ == o.assertions_ && edges_ == o.edges_ && range_ == o.range_;
    }

private:
    void build_adjacency() {
        const auto nu = users_.size(), na = assertions_.size();
        user_degree_.assign(nu, 0);
        assertion_degree_.assign(na, 0);
        std::vector<std::vector<std::uint32_t>> ua(nu), au(na);
        for (const auto& e : edges_) {
            ++user_degree_[e.user];
            ++assertion_degree_[e.assertion];
            ua[e.user].push_back(e.assertion);
            au[e.assertion].push_back(e.user);
        }
        auto flatten = [](std::vector<std::vector<std::uint32_t>>& lists, std::vector<std::uint32_t>& adj,
                          std::vector<std::size_t>& off) {
            off.assign(lists.size() + 1, 0);
            adj.clear();
            for (std::size_t i = 0; i < lists.size(); ++i) {
                auto& l = lists[i];
                std::sort(l.begin(), l.end());
                l.erase(std::unique(l.begin(), l.end()), l.end());
                adj.insert(adj.end(), l.begin(), l.end());
                off[i + 1] = adj.size();
            }
        };
        flatten(ua, user_adj_, user_off_);
        flatten(au, assertion_adj_, assertion_off_);
    }

    std::vector<std::string> users_;
    std::vector<AssertionNode> assertions_;
    std::vector<Edge> edges_;
    std::optional<DateRange> range_;

    std::vector<std::uint32_t> user_adj_, assertion_adj_;
    std::vector<std::size_t> user_off_{0}, assertion_off_{0};
    std::vector<std::size_t> user_degree_, assertion_degree_;
};

inline BipartiteGraph GraphBuilder::finish(std::optional<DateRange> range) && {
    return BipartiteGraph(std::move(users_), std::move(assertions_), std::move(edges_), range);
}

// One Post edge per post; one interaction edge per repost/reply/quote
// reference (stub assertion when the referenced post is absent); one
// CiteURL edge per extracted URL. The date range spans the posts' days
// unless one is given, in which case posts outside it are skipped.
inline BipartiteGraph build_graph(std::span<const Post> posts, std::optional<DateRange> only = std::nullopt) {
    GraphBuilder b;
    std::optional<DateRange> range = only;
    if (!only)
        for (const auto& p : posts) {
            const Date d = day_of(p.timestamp);
            if (!range) range = DateRange{d, d};
            range->first = std::min(range->first, d);
            range->last = std::max(range->last, d);
        }
    for (const auto& p : posts) {
        if (only && !only->contains(p.timestamp)) continue;
        const auto u = b.add_user(p.author_id);
        const auto a = b.add_assertion({p.post_id, AssertionKind::Post, p.author_id, p.timestamp, p.text});
        b.add_edge(u, a, EdgeKind::Post, p.timestamp);
        const std::pair<const std::optional<std::string>*, EdgeKind> refs[] = {
            {&p.repost_of, EdgeKind::Repost}, {&p.reply_to, EdgeKind::Reply}, {&p.quote_of, EdgeKind::Quote}};
        for (auto [ref, kind] : refs) {
            if (!*ref) continue;
            const auto target = b.add_assertion({**ref, AssertionKind::Stub, {}, std::nullopt, {}});
            b.add_edge(u, target, kind, p.timestamp);
        }
        for (const auto& url : extract_urls(p)) {
            const auto target = b.add_assertion({url.url, AssertionKind::Url, {}, std::nullopt, {}});
            b.add_edge(u, target, EdgeKind::CiteURL, p.timestamp);
        }
    }
    return std::move(b).finish(range);
}

// Edges with timestamp in [window.start, window.end()) and their incident
// nodes. The slice's date range is the window itself.
inline BipartiteGraph window_slice(const BipartiteGraph& g, const TimeWindow& window) {
    if (window.length_days < 1) throw ConfigError("length_days", "must be >= 1");
    std::vector<std::int64_t> unew(g.users().size(), -1), anew(g.assertions().size(), -1);
    std::vector<std::string> users;
    std::vector<AssertionNode> assertions;
    std::vector<Edge> edges;
    for (const auto& e : g.edges()) {
        if (!window.contains(e.timestamp)) continue;
        if (unew[e.user] < 0) {
            unew[e.user] = static_cast<std::int64_t>(users.size());
            users.push_back(g.users()[e.user]);
        }
        if (anew[e.assertion] < 0) {
            anew[e.assertion] = static_cast<std::int64_t>(assertions.size());
            assertions.push_back(g.assertions()[e.assertion]);
        }
        edges.push_back({static_cast<std::uint32_t>(unew[e.user]), static_cast<std::uint32_t>(anew[e.assertion]),
                         e.kind, e.timestamp});
    }
    return BipartiteGraph(std::move(users), std::move(assertions), std::move(edges),
                          DateRange{window.start, window.end() - std::chrono::days{1}});
}

// Undirected weighted user-user graph.
class UserGraph {
public:
    struct WeightedEdge {
        std::uint32_t a = 0;  // a < b
        std::uint32_t b = 0;
        std::uint32_t weight = 0;
        bool operator==(const WeightedEdge&) const = default;
    };

    UserGraph() = default;
    UserGraph(std::vector<std::string> users, std::vector<WeightedEdge> edges)
        : users_(std::move(users)), edges_(std::move(edges)) {
        adj_.assign(users_.size(), {});
        for (const auto& e : edges_) {
            if (e.a == e.b) throw FormatError("self-loop in user graph");
            if (e.weight == 0) throw FormatError("zero-weight user edge");
            adj_[e.a].push_back({e.b, e.weight});
            adj_[e.b].push_back({e.a, e.weight});
        }
        for (auto& l : adj_) std::sort(l.begin(), l.end());
    }

    const std::vector<std::string>& users() const { return users_; }
    const std::vector<WeightedEdge>& edges() const { return edges_; }
    std::span<const std::pair<std::uint32_t, std::uint32_t>> neighbors(std::uint32_t u) const { return adj_[u]; }
    std::size_t size() const { return users_.size(); }

    std::uint32_t weight(std::uint32_t u, std::uint32_t v) const {
        for (auto [n, w] : adj_[u])
            if (n == v) return w;
        return 0;
    }

    std::optional<std::uint32_t> find(std::string_view key) const {
        auto it = std::lower_bound(users_.begin(), users_.end(), key,
                                   [](const std::string& a, std::string_view b) { return a < b; });
        if (it == users_.end() || *it != key) return std::nullopt;
        return static_cast<std::uint32_t>(it - users_.begin());
    }

private:
    std::vector<std::string> users_;  // sorted
    std::vector<WeightedEdge> edges_;
    std::vector<std::vector<std::pair<std::uint32_t, std::uint32_t>>> adj_;
};

// Each repost/reply/quote edge (u, a) whose assertion was authored by v != u
// adds 1 to {u, v}. Users are the graph's users plus any such authors.
inline UserGraph user_projection(const BipartiteGraph& g) {
    std::vector<std::string> users = g.users();
    for (const auto& a : g.assertions())
        if (!a.author.empty()) users.push_back(a.author);
    std::sort(users.begin(), users.end());
    users.erase(std::unique(users.begin(), users.end()), users.end());
    auto index_of = [&](const std::string& key) {
        return static_cast<std::uint32_t>(std::lower_bound(users.begin(), users.end(), key) - users.begin());
    };

    std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint32_t> weights;
    for (const auto& e : g.edges()) {
        if (!is_interaction(e.kind)) continue;
        const auto& author = g.assertions()[e.assertion].author;
        if (author.empty() || author == g.users()[e.user]) continue;
        auto u = index_of(g.users()[e.user]);
        auto v = index_of(author);
        ++weights[{std::min(u, v), std::max(u, v)}];
    }
    std::vector<UserGraph::WeightedEdge> edges;
    edges.reserve(weights.size());
    for (auto [key, w] : weights) edges.push_back({key.first, key.second, w});
    return UserGraph(std::move(users), std::move(edges));
}

}  // namespace influence
