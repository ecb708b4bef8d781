#pragma once

// Read-only query API over stored runs. handle() maps a method and a raw
// request target ("/api/v1/...?..") to a JSON response; the HTTP server only
// forwards to it.
//
//   GET /api/v1/runs
//   GET /api/v1/runs/{run}
//   GET /api/v1/runs/{run}/entities
//   GET /api/v1/runs/{run}/influence-graph?min_corr=&use_absolute=&entities=a,b
//   GET /api/v1/runs/{run}/heatmap?use_absolute=
//   GET /api/v1/runs/{run}/entities/{id}/series
//   GET /api/v1/runs/{run}/pairs/{a}/{b}
//   GET /api/v1/runs/{run}/entities/{id}/posts?from=&to=&limit=
//
// from/to are inclusive window indices.

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "influence/discovery.hpp"
#include "influence/entities.hpp"
#include "influence/ingest.hpp"
#include "influence/store.hpp"

namespace influence {

struct ApiResponse {
    int status = 200;
    std::string body;
    std::string content_type = "application/json";
};

namespace api_detail {

inline int hex_value(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
}

inline std::optional<std::string> percent_decode(std::string_view s, bool plus_is_space) {
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '%') {
            if (i + 2 >= s.size()) return std::nullopt;
            const int hi = hex_value(s[i + 1]), lo = hex_value(s[i + 2]);
            if (hi < 0 || lo < 0) return std::nullopt;
            out += static_cast<char>(hi * 16 + lo);
            i += 2;
        } else if (s[i] == '+' && plus_is_space) {
            out += ' ';
        } else {
            out += s[i];
        }
    }
    return out;
}

struct BadRequest {
    std::string field, message;
};
struct NotFound {
    std::string message;
};

// First `chars` code points of a UTF-8 string.
inline std::string utf8_prefix(const std::string& s, std::size_t chars, bool* truncated) {
    std::size_t i = 0, n = 0;
    while (i < s.size() && n < chars) {
        const auto c = static_cast<unsigned char>(s[i]);
        std::size_t len = c < 0x80 ? 1 : (c >> 5) == 6 ? 2 : (c >> 4) == 14 ? 3 : (c >> 3) == 30 ? 4 : 1;
        i = std::min(s.size(), i + len);
        ++n;
    }
    *truncated = i < s.size();
    return s.substr(0, i);
}

}  // namespace api_detail

// At most 280 code points; longer texts end in an ellipsis.
inline std::string excerpt(const std::string& text, std::size_t limit = 280) {
    bool cut = false;
    std::string head = api_detail::utf8_prefix(text, limit, &cut);
    if (!cut) return head;
    return api_detail::utf8_prefix(text, limit - 1, &cut) + "…";
}

struct LoadedRun {
    RunManifest manifest;
    std::optional<EntitySet> entities;
    std::optional<SeriesFile> series;
    std::optional<InfluenceGraph> graph;
    std::vector<Post> posts;
    std::map<std::string, std::size_t> engagement;  // post id -> repost/reply/quote count
};

inline LoadedRun load_run_view(const RunStore& store, const RunManifest& m) {
    LoadedRun run;
    run.manifest = m;
    auto has = [&](const char* name) { return m.checksums.contains(name); };
    if (has("entities.tsv")) {
        std::istringstream in(store.read_artifact(m, "entities.tsv"));
        run.entities = read_entities(in);
    }
    if (has("series.tsv")) {
        std::istringstream in(store.read_artifact(m, "series.tsv"));
        run.series = read_series(in);
    }
    if (has("influence.json")) {
        auto j = nlohmann::json::parse(store.read_artifact(m, "influence.json"), nullptr, false);
        if (j.is_discarded()) throw FormatError("influence.json of " + m.run_id + " is not JSON");
        run.graph = influence_from_json(j);
    }
    if (has("posts.jsonl")) {
        std::istringstream in(store.read_artifact(m, "posts.jsonl"));
        run.posts = parse_posts(in).posts;
        for (const auto& p : run.posts)
            for (const auto* ref : {&p.repost_of, &p.reply_to, &p.quote_of})
                if (*ref) ++run.engagement[**ref];
    }
    return run;
}

class ApiService {
public:
    explicit ApiService(fs::path store_root) : store_(std::move(store_root)) {}

    ApiResponse handle(std::string_view method, std::string_view target) const {
        try {
            if (method != "GET")
                return error(405, {{"error", "method_not_allowed"}, {"message", "the API is read-only; use GET"}});
            return route(target);
        } catch (const api_detail::BadRequest& e) {
            return error(400, {{"error", "bad_request"}, {"field", e.field}, {"message", e.message}});
        } catch (const api_detail::NotFound& e) {
            return error(404, {{"error", "not_found"}, {"message", e.message}});
        } catch (const std::exception& e) {
            return error(500, {{"error", "internal"}, {"message", e.what()}});
        }
    }

    std::shared_ptr<const LoadedRun> load(const std::string& run_id) const {
        {
            std::lock_guard lock(mu_);
            if (auto it = cache_.find(run_id); it != cache_.end()) return it->second;
        }
        auto m = store_.manifest(run_id);
        if (!m) throw api_detail::NotFound{"unknown run " + run_id};
        auto run = std::make_shared<const LoadedRun>(load_run_view(store_, *m));
        std::lock_guard lock(mu_);
        return cache_.emplace(run_id, run).first->second;
    }

private:
    RunStore store_;
    mutable std::mutex mu_;
    mutable std::map<std::string, std::shared_ptr<const LoadedRun>> cache_;

    using Query = std::map<std::string, std::string>;

    static ApiResponse ok(const nlohmann::json& j) { return {200, j.dump() + "\n"}; }
    static ApiResponse error(int status, const nlohmann::json& j) { return {status, j.dump() + "\n"}; }

    static std::pair<std::vector<std::string>, Query> parse_target(std::string_view target) {
        const auto q = target.find('?');
        const std::string_view path = target.substr(0, q);
        std::vector<std::string> segs;
        std::size_t start = 0;
        while (start <= path.size()) {
            auto slash = path.find('/', start);
            auto part = path.substr(start, slash == std::string_view::npos ? std::string_view::npos : slash - start);
            if (!part.empty()) {
                auto d = api_detail::percent_decode(part, false);
                if (!d) throw api_detail::BadRequest{"path", "bad percent-encoding"};
                segs.push_back(*d);
            }
            if (slash == std::string_view::npos) break;
            start = slash + 1;
        }
        Query query;
        if (q != std::string_view::npos) {
            std::string_view qs = target.substr(q + 1);
            std::size_t s = 0;
            while (s <= qs.size()) {
                auto amp = qs.find('&', s);
                auto kv = qs.substr(s, amp == std::string_view::npos ? std::string_view::npos : amp - s);
                if (!kv.empty()) {
                    auto eq = kv.find('=');
                    auto k = api_detail::percent_decode(kv.substr(0, eq), true);
                    auto v = eq == std::string_view::npos ? std::optional<std::string>("")
                                                          : api_detail::percent_decode(kv.substr(eq + 1), true);
                    if (!k || !v) throw api_detail::BadRequest{"query", "bad percent-encoding"};
                    query[*k] = *v;
                }
                if (amp == std::string_view::npos) break;
                s = amp + 1;
            }
        }
        return {segs, query};
    }

    static void allow_params(const Query& q, std::initializer_list<const char*> names) {
        for (const auto& [k, v] : q) {
            bool known = false;
            for (const char* n : names) known = known || k == n;
            if (!known) throw api_detail::BadRequest{k, "unknown query parameter"};
        }
    }

    static std::optional<double> real_param(const Query& q, const char* name) {
        auto it = q.find(name);
        if (it == q.end() || it->second.empty()) return std::nullopt;
        try {
            std::size_t used = 0;
            double v = std::stod(it->second, &used);
            if (used != it->second.size() || !std::isfinite(v)) throw std::invalid_argument("x");
            return v;
        } catch (const std::exception&) {
            throw api_detail::BadRequest{name, "expected a finite number"};
        }
    }

    static std::optional<bool> bool_param(const Query& q, const char* name) {
        auto it = q.find(name);
        if (it == q.end() || it->second.empty()) return std::nullopt;
        if (it->second == "true" || it->second == "1") return true;
        if (it->second == "false" || it->second == "0") return false;
        throw api_detail::BadRequest{name, "expected true or false"};
    }

    static std::optional<long long> int_param(const Query& q, const char* name) {
        auto it = q.find(name);
        if (it == q.end() || it->second.empty()) return std::nullopt;
        try {
            std::size_t used = 0;
            long long v = std::stoll(it->second, &used);
            if (used != it->second.size()) throw std::invalid_argument("x");
            return v;
        } catch (const std::exception&) {
            throw api_detail::BadRequest{name, "expected an integer"};
        }
    }

    static const EntitySet& need_entities(const LoadedRun& r) {
        if (!r.entities) throw api_detail::NotFound{"run " + r.manifest.run_id + " has no entities stage"};
        return *r.entities;
    }
    static const SeriesFile& need_series(const LoadedRun& r) {
        if (!r.series) throw api_detail::NotFound{"run " + r.manifest.run_id + " has no entities stage"};
        return *r.series;
    }
    static const InfluenceGraph& need_graph(const LoadedRun& r) {
        if (!r.graph) throw api_detail::NotFound{"run " + r.manifest.run_id + " has no discover stage"};
        return *r.graph;
    }

    static const Entity& need_entity(const LoadedRun& r, const std::string& id) {
        const auto* e = need_entities(r).find(id);
        if (!e) throw api_detail::NotFound{"unknown entity " + id};
        return *e;
    }

    static nlohmann::json entity_json(const Entity& e) {
        return {{"id", e.id}, {"kind", to_string(e.kind)}, {"label", e.label}, {"size", e.members.size()}};
    }

    ApiResponse route(std::string_view target) const {
        auto [segs, query] = parse_target(target);
        if (segs.size() < 3 || segs[0] != "api" || segs[1] != "v1" || segs[2] != "runs")
            throw api_detail::NotFound{"no such endpoint"};
        if (segs.size() == 3) {
            allow_params(query, {});
            nlohmann::json runs = nlohmann::json::array();
            for (const auto& m : store_.list_runs()) runs.push_back(m.to_json());
            return ok({{"runs", runs}});
        }
        const auto run = load(segs[3]);
        const std::vector<std::string> rest(segs.begin() + 4, segs.end());
        if (rest.empty()) {
            allow_params(query, {});
            return ok(run->manifest.to_json());
        }
        if (rest.size() == 1 && rest[0] == "entities") {
            allow_params(query, {});
            nlohmann::json list = nlohmann::json::array();
            for (const auto& e : need_entities(*run).entities) list.push_back(entity_json(e));
            return ok({{"run_id", run->manifest.run_id}, {"entities", list}});
        }
        if (rest.size() == 1 && rest[0] == "influence-graph") return influence_graph(*run, query);
        if (rest.size() == 1 && rest[0] == "heatmap") return heatmap(*run, query);
        if (rest.size() == 3 && rest[0] == "entities" && rest[2] == "series") {
            allow_params(query, {});
            return series(*run, rest[1]);
        }
        if (rest.size() == 3 && rest[0] == "entities" && rest[2] == "posts") return posts(*run, rest[1], query);
        if (rest.size() == 3 && rest[0] == "pairs") {
            allow_params(query, {});
            return pair(*run, rest[1], rest[2]);
        }
        throw api_detail::NotFound{"no such endpoint"};
    }

    ApiResponse influence_graph(const LoadedRun& run, const Query& query) const {
        allow_params(query, {"min_corr", "use_absolute", "entities"});
        const auto& g = need_graph(run);
        const auto& ents = need_entities(run);
        const double min_corr = real_param(query, "min_corr").value_or(g.config.min_correlation);
        const bool use_abs = bool_param(query, "use_absolute").value_or(g.config.use_absolute);

        std::optional<std::set<std::string>> filter;
        if (auto it = query.find("entities"); it != query.end() && !it->second.empty()) {
            filter.emplace();
            std::stringstream ss(it->second);
            std::string id;
            while (std::getline(ss, id, ',')) {
                if (id.empty()) continue;
                if (!g.index_of(id)) throw api_detail::NotFound{"unknown entity " + id};
                filter->insert(id);
            }
        }
        nlohmann::json edges = nlohmann::json::array();
        std::set<std::string> shown;
        if (filter) shown = *filter;
        for (const auto& e : edges_at(g, min_corr, use_abs)) {
            if (filter && !filter->contains(e.source) && !filter->contains(e.target)) continue;
            edges.push_back(edge_json(e));
            shown.insert(e.source);
            shown.insert(e.target);
        }
        nlohmann::json nodes = nlohmann::json::array();
        for (const auto& id : g.entities) {
            if (filter && !shown.contains(id)) continue;
            if (const auto* e = ents.find(id))
                nodes.push_back(entity_json(*e));
            else
                nodes.push_back({{"id", id}, {"kind", nullptr}, {"label", id}, {"size", 0}});
        }
        return ok({{"run_id", run.manifest.run_id},
                   {"min_corr", min_corr},
                   {"use_absolute", use_abs},
                   {"nodes", nodes},
                   {"edges", edges}});
    }

    // r[i][j]: best r of the pair; lag[i][j] > 0 when i leads j, < 0 when j
    // leads i. Diagonal is r = 1, lag 0. null where undefined.
    ApiResponse heatmap(const LoadedRun& run, const Query& query) const {
        allow_params(query, {"use_absolute"});
        const auto& g = need_graph(run);
        const bool use_abs = bool_param(query, "use_absolute").value_or(g.config.use_absolute);
        const std::size_t n = g.entities.size();
        nlohmann::json r = nlohmann::json::array(), lag = nlohmann::json::array();
        for (std::size_t i = 0; i < n; ++i) {
            nlohmann::json rr = nlohmann::json::array(), ll = nlohmann::json::array();
            for (std::size_t j = 0; j < n; ++j) {
                if (i == j) {
                    rr.push_back(1.0);
                    ll.push_back(0);
                    continue;
                }
                const auto* ps = g.pair(i, j);
                const auto& c = use_abs ? ps->heat_abs : ps->heat;
                if (!c) {
                    rr.push_back(nullptr);
                    ll.push_back(nullptr);
                    continue;
                }
                rr.push_back(c->r);
                const auto k = static_cast<long long>(c->lag);
                ll.push_back(c->source == i ? k : -k);
            }
            r.push_back(std::move(rr));
            lag.push_back(std::move(ll));
        }
        return ok({{"run_id", run.manifest.run_id},
                   {"use_absolute", use_abs},
                   {"entities", g.entities},
                   {"r", r},
                   {"lag", lag}});
    }

    static nlohmann::json windows_json(const SeriesFile& sf) {
        nlohmann::json w = nlohmann::json::array();
        for (const auto& x : sf.windows)
            w.push_back({{"index", x.index}, {"start", format_date(x.start)}, {"length_days", x.length_days}});
        return w;
    }

    static const EntitySeries& need_entity_series(const SeriesFile& sf, const std::string& id) {
        for (const auto& s : sf.series)
            if (s.entity_id == id) return s;
        throw api_detail::NotFound{"unknown entity " + id};
    }

    ApiResponse series(const LoadedRun& run, const std::string& id) const {
        const auto& sf = need_series(run);
        const auto& s = need_entity_series(sf, id);
        nlohmann::json values = nlohmann::json::array();
        for (const auto& v : s.values) {
            if (!v)
                values.push_back(nullptr);
            else if (s.scalar)
                values.push_back((*v)[0]);
            else
                values.push_back(*v);
        }
        return ok({{"run_id", run.manifest.run_id},
                   {"entity", id},
                   {"scalar", s.scalar},
                   {"dim", s.dim},
                   {"windows", windows_json(sf)},
                   {"values", values}});
    }

    ApiResponse pair(const LoadedRun& run, const std::string& a, const std::string& b) const {
        const auto& g = need_graph(run);
        const auto& sf = need_series(run);
        const auto ia = g.index_of(a), ib = g.index_of(b);
        if (!ia) throw api_detail::NotFound{"unknown entity " + a};
        if (!ib) throw api_detail::NotFound{"unknown entity " + b};
        if (*ia == *ib) throw api_detail::BadRequest{"b", "pair needs two distinct entities"};
        const auto& sa = need_entity_series(sf, a);
        const auto& sb = need_entity_series(sf, b);
        auto table_json = [](const std::vector<LagCorr>& t) {
            nlohmann::json out = nlohmann::json::array();
            for (const auto& c : t)
                out.push_back({{"lag", c.lag}, {"r", c.r ? nlohmann::json(*c.r) : nlohmann::json(nullptr)}, {"n", c.n}});
            return out;
        };
        nlohmann::json axes = nlohmann::json::array();
        const std::size_t na = sa.scalar ? 1 : sa.dim, nb = sb.scalar ? 1 : sb.dim;
        for (std::size_t i = 0; i < na; ++i)
            for (std::size_t j = 0; j < nb; ++j) {
                const auto xa = sa.axis(i), xb = sb.axis(j);
                axes.push_back(
                    {{"a_axis", sa.scalar ? nlohmann::json(nullptr) : nlohmann::json(i)},
                     {"b_axis", sb.scalar ? nlohmann::json(nullptr) : nlohmann::json(j)},
                     {"a_leads", table_json(lagged_correlation(xa, xb, g.config.max_lag, g.config.min_overlap))},
                     {"b_leads", table_json(lagged_correlation(xb, xa, g.config.max_lag, g.config.min_overlap))}});
            }
        const auto* ps = g.pair(*ia, *ib);
        auto cand = [&](const std::optional<Candidate>& c) -> nlohmann::json {
            if (!c) return nullptr;
            return {{"source", g.entities[c->source]},
                    {"target", g.entities[c->target]},
                    {"lag", c->lag},
                    {"r", c->r},
                    {"source_axis", c->source_axis ? nlohmann::json(*c->source_axis) : nlohmann::json(nullptr)},
                    {"target_axis", c->target_axis ? nlohmann::json(*c->target_axis) : nlohmann::json(nullptr)},
                    {"n", c->n}};
        };
        return ok({{"run_id", run.manifest.run_id},
                   {"a", a},
                   {"b", b},
                   {"max_lag", g.config.max_lag},
                   {"min_overlap", g.config.min_overlap},
                   {"windows", windows_json(sf)},
                   {"axes", axes},
                   {"best", cand(ps->heat)},
                   {"best_abs", cand(ps->heat_abs)},
                   {"best_lead", cand(ps->lead)},
                   {"best_lead_abs", cand(ps->lead_abs)}});
    }

    ApiResponse posts(const LoadedRun& run, const std::string& id, const Query& query) const {
        allow_params(query, {"from", "to", "limit"});
        const Entity& e = need_entity(run, id);
        const auto& sf = need_series(run);
        const long long last = static_cast<long long>(sf.windows.size()) - 1;
        const long long from = int_param(query, "from").value_or(0);
        const long long to = int_param(query, "to").value_or(last);
        const long long limit = int_param(query, "limit").value_or(20);
        if (limit < 1 || limit > 1000) throw api_detail::BadRequest{"limit", "must lie in [1, 1000]"};
        if (from < 0 || (last >= 0 && from > last)) throw api_detail::BadRequest{"from", "window index out of range"};
        if (to < 0 || (last >= 0 && to > last)) throw api_detail::BadRequest{"to", "window index out of range"};
        if (to < from) throw api_detail::BadRequest{"to", "must not precede from"};

        nlohmann::json list = nlohmann::json::array();
        if (last >= 0 && e.kind != EntityKind::Physical) {
            const Date begin = sf.windows[static_cast<std::size_t>(from)].start;
            const Date end = sf.windows[static_cast<std::size_t>(to)].end();
            std::set<std::string> users;
            for (const auto& m : e.members)
                if (m.kind == NodeKind::User) users.insert(m.key);
            auto belongs = [&](const Post& p) {
                if (e.kind == EntityKind::Domain) {
                    for (const auto& u : p.urls)
                        if (host_of(u) == e.host) return true;
                    return false;
                }
                return users.contains(p.author_id);
            };
            std::vector<const Post*> hits;
            for (const auto& p : run.posts) {
                const Date d = day_of(p.timestamp);
                if (d >= begin && d < end && belongs(p)) hits.push_back(&p);
            }
            auto eng = [&](const Post* p) {
                auto it = run.engagement.find(p->post_id);
                return it == run.engagement.end() ? std::size_t{0} : it->second;
            };
            std::sort(hits.begin(), hits.end(), [&](const Post* x, const Post* y) {
                const auto ex = eng(x), ey = eng(y);
                if (ex != ey) return ex > ey;
                if (x->timestamp != y->timestamp) return x->timestamp < y->timestamp;
                return x->post_id < y->post_id;
            });
            if (hits.size() > static_cast<std::size_t>(limit)) hits.resize(static_cast<std::size_t>(limit));
            for (const auto* p : hits)
                list.push_back({{"post_id", p->post_id},
                                {"excerpt", excerpt(p->text)},
                                {"timestamp", format_instant(p->timestamp)},
                                {"engagement", eng(p)}});
        }
        return ok({{"run_id", run.manifest.run_id},
                   {"entity", entity_json(e)},
                   {"from", from},
                   {"to", to},
                   {"limit", limit},
                   {"posts", list}});
    }
};

}  // namespace influence
