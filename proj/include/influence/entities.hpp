#pragma once

// Communities, entities and per-entity time series.
//
// Entity ids: "physical:<event type>", "influencer:<user>",
// "community:<label>", "domain:<host>".

#include <algorithm>
#include <concepts>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "influence/embedding.hpp"
#include "influence/error.hpp"
#include "influence/graph.hpp"
#include "influence/ingest.hpp"
#include "influence/textio.hpp"

namespace influence {

// ---------------------------------------------------------------------------
// Community detection

struct Partition {
    static constexpr int unclustered = -1;
    std::map<std::string, int> label;  // every user of the user graph
    int communities = 0;               // labels 0..communities-1, largest first

    std::vector<std::string> members(int l) const {
        std::vector<std::string> out;
        for (const auto& [u, x] : label)
            if (x == l) out.push_back(u);
        return out;
    }
    bool operator==(const Partition&) const = default;
};

template <typename D>
concept CommunityDetector = requires(const D& d, const UserGraph& g) {
    { d(g) } -> std::same_as<Partition>;
};

// Synchronous weighted label propagation. Every node starts with its own
// label; each round it takes the label with the largest summed weight among
// its neighbors plus itself (own label counts weight 1), smallest label on
// ties. Communities smaller than min_size go to the unclustered pool.
struct LabelPropagation {
    std::size_t max_iters = 100;
    std::size_t min_size = 3;
    std::uint64_t seed = 0;  // unused: the update order is fixed

    Partition operator()(const UserGraph& g) const {
        const std::size_t n = g.size();
        std::vector<std::uint32_t> label(n), next(n);
        for (std::uint32_t i = 0; i < n; ++i) label[i] = i;
        std::map<std::uint32_t, std::uint64_t> tally;
        for (std::size_t it = 0; it < max_iters; ++it) {
            for (std::uint32_t u = 0; u < n; ++u) {
                tally.clear();
                tally[label[u]] += 1;
                for (auto [v, w] : g.neighbors(u)) tally[label[v]] += w;
                std::uint32_t best = label[u];
                std::uint64_t best_w = 0;
                for (auto [l, w] : tally)
                    if (w > best_w) {  // map order: first max is the smallest label
                        best = l;
                        best_w = w;
                    }
                next[u] = best;
            }
            if (next == label) break;
            label.swap(next);
        }

        std::map<std::uint32_t, std::vector<std::uint32_t>> groups;
        for (std::uint32_t u = 0; u < n; ++u) groups[label[u]].push_back(u);
        std::vector<std::vector<std::uint32_t>> kept;
        for (auto& [l, m] : groups)
            if (m.size() >= std::max<std::size_t>(1, min_size)) kept.push_back(std::move(m));
        // largest first
        std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.size() > b.size(); });

        Partition p;
        for (std::uint32_t u = 0; u < n; ++u) p.label[g.users()[u]] = Partition::unclustered;
        for (std::size_t c = 0; c < kept.size(); ++c)
            for (auto u : kept[c]) p.label[g.users()[u]] = static_cast<int>(c);
        p.communities = static_cast<int>(kept.size());
        return p;
    }
};

inline Partition detect_communities(const UserGraph& g, std::uint64_t seed, std::size_t max_iters,
                                    std::size_t min_size = 3) {
    if (max_iters == 0) throw ConfigError("entities.max_iters", "must be positive");
    return LabelPropagation{max_iters, min_size, seed}(g);
}

// ---------------------------------------------------------------------------
// Entities

enum class EntityKind : std::uint8_t { Physical, Influencer, Community, Domain };

inline std::string_view to_string(EntityKind k) {
    switch (k) {
        case EntityKind::Physical: return "physical";
        case EntityKind::Influencer: return "influencer";
        case EntityKind::Community: return "community";
        case EntityKind::Domain: return "domain";
    }
    return "?";
}

inline std::optional<EntityKind> entity_kind_from(std::string_view s) {
    for (auto k : {EntityKind::Physical, EntityKind::Influencer, EntityKind::Community, EntityKind::Domain})
        if (to_string(k) == s) return k;
    return std::nullopt;
}

struct Entity {
    std::string id;
    EntityKind kind = EntityKind::Physical;
    std::string label;
    std::vector<NodeId> members;  // users, or the host's URL assertions; empty for physical
    std::string event_type;       // physical only
    std::string host;             // domain only

    bool operator==(const Entity&) const = default;
};

struct EntityConfig {
    std::size_t influencer_count = 20;
    std::size_t domain_count = 20;
    std::size_t min_community_size = 3;
    std::size_t max_iters = 100;
    std::vector<std::string> event_types;

    void validate() const {
        if (min_community_size < 1) throw ConfigError("entities.min_community_size", "must be >= 1");
        if (max_iters < 1) throw ConfigError("entities.max_iters", "must be >= 1");
        std::set<std::string> seen;
        for (const auto& t : event_types) {
            if (t.empty()) throw ConfigError("entities.event_types", "empty event type");
            if (!seen.insert(t).second) throw ConfigError("entities.event_types", "duplicate event type " + t);
        }
    }
};

struct EntitySet {
    std::vector<Entity> entities;          // physical, influencer, community, domain
    std::vector<std::string> unclustered;  // users in no community and not influencers

    const Entity* find(std::string_view id) const {
        for (const auto& e : entities)
            if (e.id == id) return &e;
        return nullptr;
    }
    bool operator==(const EntitySet&) const = default;
};

inline std::string host_of(const std::string& url_key) {
    auto ref = normalize_url(url_key);
    return ref ? ref->host : std::string{};
}

// Influencers: top users by total degree (ties by key). Domains: top hosts by
// number of CiteURL edges. Communities: partition communities after removing
// influencers, kept when still at least min_community_size.
inline EntitySet build_entities(const BipartiteGraph& g, const Partition& partition, const EntityConfig& cfg) {
    cfg.validate();
    EntitySet out;

    for (const auto& t : cfg.event_types) {
        Entity e;
        e.id = "physical:" + t;
        e.kind = EntityKind::Physical;
        e.label = t;
        e.event_type = t;
        out.entities.push_back(std::move(e));
    }

    std::vector<std::uint32_t> by_degree(g.users().size());
    for (std::uint32_t i = 0; i < by_degree.size(); ++i) by_degree[i] = i;
    std::stable_sort(by_degree.begin(), by_degree.end(),
                     [&](auto a, auto b) { return g.user_degree(a) > g.user_degree(b); });
    std::set<std::string> influencers;
    for (std::size_t i = 0; i < std::min(cfg.influencer_count, by_degree.size()); ++i) {
        const auto& key = g.users()[by_degree[i]];
        if (g.user_degree(by_degree[i]) == 0) break;
        influencers.insert(key);
        Entity e;
        e.id = "influencer:" + key;
        e.kind = EntityKind::Influencer;
        e.label = key;
        e.members = {{NodeKind::User, key}};
        out.entities.push_back(std::move(e));
    }

    std::map<int, std::vector<std::string>> comm;
    std::set<std::string> placed = influencers;
    for (const auto& [user, l] : partition.label)
        if (l != Partition::unclustered && !influencers.contains(user)) comm[l].push_back(user);
    for (auto& [l, members] : comm) {
        if (members.size() < cfg.min_community_size) continue;
        Entity e;
        e.id = "community:" + std::to_string(l);
        e.kind = EntityKind::Community;
        e.label = "community " + std::to_string(l) + " (" + std::to_string(members.size()) + " users)";
        for (auto& m : members) {
            placed.insert(m);
            e.members.push_back({NodeKind::User, std::move(m)});
        }
        out.entities.push_back(std::move(e));
    }
    for (const auto& u : g.users())
        if (!placed.contains(u)) out.unclustered.push_back(u);
    for (const auto& [user, l] : partition.label)
        if (!placed.contains(user) && !g.find_user(user)) out.unclustered.push_back(user);
    std::sort(out.unclustered.begin(), out.unclustered.end());
    out.unclustered.erase(std::unique(out.unclustered.begin(), out.unclustered.end()), out.unclustered.end());

    std::map<std::string, std::size_t> citations;
    std::map<std::string, std::vector<NodeId>> host_urls;
    for (std::uint32_t a = 0; a < g.assertions().size(); ++a) {
        const auto& node = g.assertions()[a];
        if (node.kind != AssertionKind::Url) continue;
        auto host = host_of(node.key);
        if (host.empty()) continue;
        host_urls[host].push_back(g.assertion_id(a));
        citations[host];
    }
    for (const auto& e : g.edges())
        if (e.kind == EdgeKind::CiteURL) {
            auto host = host_of(g.assertions()[e.assertion].key);
            if (!host.empty()) ++citations[host];
        }
    std::vector<std::pair<std::string, std::size_t>> hosts(citations.begin(), citations.end());
    std::stable_sort(hosts.begin(), hosts.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    for (std::size_t i = 0; i < std::min(cfg.domain_count, hosts.size()); ++i) {
        if (hosts[i].second == 0) break;
        Entity e;
        e.id = "domain:" + hosts[i].first;
        e.kind = EntityKind::Domain;
        e.label = hosts[i].first;
        e.host = hosts[i].first;
        e.members = host_urls[hosts[i].first];
        out.entities.push_back(std::move(e));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Entity series

struct EntitySeries {
    std::string entity_id;
    bool scalar = false;
    std::size_t dim = 1;  // 1 for scalar series
    std::vector<std::optional<std::vector<double>>> values;  // per window

    // One coordinate as a series of optional reals.
    std::vector<std::optional<double>> axis(std::size_t k) const {
        std::vector<std::optional<double>> out;
        out.reserve(values.size());
        for (const auto& v : values) out.push_back(v ? std::optional<double>((*v)[k]) : std::nullopt);
        return out;
    }
    bool operator==(const EntitySeries&) const = default;
};

// Mean over the entity's members present in each window; physical entities
// sum event counts by window.
inline EntitySeries entity_series(const Entity& entity, const EmbeddingSeries& series,
                                  std::span<const EventRecord> events) {
    EntitySeries s;
    s.entity_id = entity.id;
    if (entity.kind == EntityKind::Physical) {
        s.scalar = true;
        s.dim = 1;
        for (const auto& w : series.windows) {
            std::int64_t total = 0;
            for (const auto& r : events)
                if (r.event_type == entity.event_type && w.window.contains(r.date)) total += r.count;
            s.values.push_back(std::vector<double>{static_cast<double>(total)});
        }
        return s;
    }
    s.dim = series.dim;
    for (const auto& w : series.windows) {
        std::vector<double> sum(series.dim, 0.0);
        std::size_t n = 0;
        for (const auto& m : entity.members)
            if (const auto* v = w.table.vector_of(m)) {
                for (std::size_t k = 0; k < series.dim; ++k) sum[k] += (*v)[k];
                ++n;
            }
        if (n == 0) {
            s.values.push_back(std::nullopt);
            continue;
        }
        for (auto& x : sum) x /= static_cast<double>(n);
        s.values.push_back(std::move(sum));
    }
    return s;
}

inline std::vector<EntitySeries> all_entity_series(const EntitySet& set, const EmbeddingSeries& series,
                                                   std::span<const EventRecord> events) {
    std::vector<EntitySeries> out;
    out.reserve(set.entities.size());
    for (const auto& e : set.entities) out.push_back(entity_series(e, series, events));
    return out;
}

// ---------------------------------------------------------------------------
// Files
//
// Entities:
//   influence-entities	1
//   X	<id>	<kind>	<member count>	<label>	<event type|->	<host|->
//   M	<id>	<node kind>	<node key>
//   L	<unclustered user>
//
// Series:
//   influence-series	1
//   W	<index>	<start>	<length_days>
//   S	<id>	<scalar|vector>	<dim>	<window>	<v_1> ... | MISSING

inline void write_entities(std::ostream& out, const EntitySet& set) {
    using textio::escape;
    out << "influence-entities\t1\n";
    for (const auto& e : set.entities)
        out << "X\t" << escape(e.id) << '\t' << to_string(e.kind) << '\t' << e.members.size() << '\t'
            << escape(e.label) << '\t' << (e.event_type.empty() ? "-" : escape(e.event_type)) << '\t'
            << (e.host.empty() ? "-" : escape(e.host)) << '\n';
    for (const auto& e : set.entities)
        for (const auto& m : e.members)
            out << "M\t" << escape(e.id) << '\t' << to_string(m.kind) << '\t' << escape(m.key) << '\n';
    for (const auto& u : set.unclustered) out << "L\t" << escape(u) << '\n';
}

inline EntitySet read_entities(std::istream& in) {
    using textio::unescape;
    std::string line;
    if (!textio::next_line(in, line) || line != "influence-entities\t1") throw FormatError("not an entities file");
    EntitySet set;
    std::map<std::string, std::size_t> index;
    while (textio::next_line(in, line)) {
        auto f = textio::split_tabs(line);
        if (f[0] == "X") {
            textio::expect_fields(f, 7, "entity row");
            Entity e;
            e.id = unescape(f[1]);
            auto kind = entity_kind_from(f[2]);
            if (!kind) throw FormatError("bad entity kind");
            e.kind = *kind;
            e.label = unescape(f[4]);
            if (f[5] != "-") e.event_type = unescape(f[5]);
            if (f[6] != "-") e.host = unescape(f[6]);
            if (!index.emplace(e.id, set.entities.size()).second) throw FormatError("duplicate entity " + e.id);
            set.entities.push_back(std::move(e));
        } else if (f[0] == "M") {
            textio::expect_fields(f, 4, "member row");
            auto it = index.find(unescape(f[1]));
            if (it == index.end()) throw FormatError("member of unknown entity");
            set.entities[it->second].members.push_back(
                {f[2] == "user" ? NodeKind::User : NodeKind::Assertion, unescape(f[3])});
        } else if (f[0] == "L") {
            textio::expect_fields(f, 2, "unclustered row");
            set.unclustered.push_back(unescape(f[1]));
        } else {
            throw FormatError("entities file: unknown row " + std::string(f[0]));
        }
    }
    return set;
}

struct SeriesFile {
    std::vector<TimeWindow> windows;
    std::vector<EntitySeries> series;
    bool operator==(const SeriesFile&) const = default;
};

inline void write_series(std::ostream& out, const SeriesFile& f) {
    out << "influence-series\t1\n";
    for (const auto& w : f.windows)
        out << "W\t" << w.index << '\t' << format_date(w.start) << '\t' << w.length_days << '\n';
    for (const auto& s : f.series)
        for (std::size_t t = 0; t < s.values.size(); ++t) {
            out << "S\t" << textio::escape(s.entity_id) << '\t' << (s.scalar ? "scalar" : "vector") << '\t' << s.dim
                << '\t' << t;
            if (!s.values[t]) {
                out << "\tMISSING\n";
                continue;
            }
            for (double v : *s.values[t]) out << '\t' << textio::format_real(v);
            out << '\n';
        }
}

inline SeriesFile read_series(std::istream& in) {
    std::string line;
    if (!textio::next_line(in, line) || line != "influence-series\t1") throw FormatError("not a series file");
    SeriesFile f;
    while (textio::next_line(in, line)) {
        auto r = textio::split_tabs(line);
        if (r[0] == "W") {
            textio::expect_fields(r, 4, "window row");
            auto start = parse_date(r[2]);
            if (!start) throw FormatError("series: bad window date");
            f.windows.push_back({*start, textio::parse_int<int>(r[3]), textio::parse_int<std::size_t>(r[1])});
        } else if (r[0] == "S") {
            if (r.size() < 6) throw FormatError("series row: too few fields");
            auto id = textio::unescape(r[1]);
            if (f.series.empty() || f.series.back().entity_id != id) {
                EntitySeries s;
                s.entity_id = id;
                s.scalar = r[2] == "scalar";
                s.dim = textio::parse_int<std::size_t>(r[3]);
                f.series.push_back(std::move(s));
            }
            auto& s = f.series.back();
            if (textio::parse_int<std::size_t>(r[4]) != s.values.size()) throw FormatError("series: window out of order");
            if (r[5] == "MISSING") {
                s.values.push_back(std::nullopt);
                continue;
            }
            textio::expect_fields(r, 5 + s.dim, "series row");
            std::vector<double> v;
            for (std::size_t k = 0; k < s.dim; ++k) v.push_back(textio::parse_real(r[5 + k]));
            s.values.push_back(std::move(v));
        } else {
            throw FormatError("series: unknown row " + std::string(r[0]));
        }
    }
    return f;
}

}  // namespace influence
