#pragma once

// Lagged Pearson correlation between entity series and the directed
// influence graph built from it.
//
// For a pair (x, y) and lag tau, x leads y when x[t] lines up with y[t+tau].
// An edge needs tau >= 1; lag 0 shows up only in the heatmap.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <mutex>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "influence/entities.hpp"
#include "influence/error.hpp"

namespace influence {

using OptSeries = std::vector<std::optional<double>>;

// Two-pass Pearson r; undefined below two points or with zero variance.
inline std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw FormatError("pearson: series lengths differ");
    const std::size_t n = x.size();
    if (n < 2) return std::nullopt;
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = x[i] - mx, dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (!(sxx > 0) || !(syy > 0)) return std::nullopt;
    const double r = sxy / std::sqrt(sxx * syy);
    if (!std::isfinite(r)) return std::nullopt;
    return std::clamp(r, -1.0, 1.0);
}

// Pairs where either side is missing are dropped first.
inline std::optional<double> pearson(const OptSeries& x, const OptSeries& y, std::size_t* used = nullptr) {
    if (x.size() != y.size()) throw FormatError("pearson: series lengths differ");
    std::vector<double> a, b;
    for (std::size_t i = 0; i < x.size(); ++i)
        if (x[i] && y[i]) {
            a.push_back(*x[i]);
            b.push_back(*y[i]);
        }
    if (used) *used = a.size();
    return pearson(a, b);
}

struct LagCorr {
    std::size_t lag = 0;
    std::optional<double> r;
    std::size_t n = 0;  // overlap after missing-pair deletion
    bool operator==(const LagCorr&) const = default;
};

// r(tau) = pearson(lead[0..n-tau), lagging[tau..n)) for tau = 0..L.
inline std::vector<LagCorr> lagged_correlation(const OptSeries& lead, const OptSeries& lagging, std::size_t L,
                                               std::size_t min_overlap) {
    if (lead.size() != lagging.size()) throw FormatError("lagged_correlation: series on different grids");
    std::vector<LagCorr> out;
    const std::size_t n = lead.size();
    std::vector<double> a, b;
    for (std::size_t tau = 0; tau <= L; ++tau) {
        LagCorr c;
        c.lag = tau;
        a.clear();
        b.clear();
        for (std::size_t t = 0; t + tau < n; ++t)
            if (lead[t] && lagging[t + tau]) {
                a.push_back(*lead[t]);
                b.push_back(*lagging[t + tau]);
            }
        c.n = a.size();
        if (c.n >= std::max<std::size_t>(2, min_overlap)) c.r = pearson(a, b);
        out.push_back(c);
    }
    return out;
}

struct DiscoveryConfig {
    std::size_t max_lag = 2;  // L, in window shifts
    double min_correlation = 0.7;
    std::size_t min_overlap = 8;
    bool use_absolute = false;

    void validate() const {
        if (max_lag < 1) throw ConfigError("discovery.max_lag", "must be >= 1");
        if (!(min_correlation > 0.0 && min_correlation <= 1.0))
            throw ConfigError("discovery.min_correlation", "must lie in (0, 1]");
        if (min_overlap < 1) throw ConfigError("discovery.min_overlap", "must be >= 1");
    }
    bool operator==(const DiscoveryConfig&) const = default;
};

// One (direction, lag, axes) tuple of a pair scan. source/target index the
// entity list; axes are absent for scalar series.
struct Candidate {
    std::size_t source = 0, target = 0;
    std::size_t lag = 0;
    double r = 0;
    std::optional<std::size_t> source_axis, target_axis;
    std::size_t n = 0;
    bool operator==(const Candidate&) const = default;
};

struct InfluenceEdge {
    std::string source, target;
    std::size_t lag = 1;
    double r = 0;
    std::optional<std::size_t> source_axis, target_axis;
    bool operator==(const InfluenceEdge&) const = default;
};

// Per unordered pair (a < b): best tuples by signed r and by |r|, over
// lag 0..L for the heatmap and lag 1..L for edges. Enough to re-filter edges
// at any threshold without touching the series again.
struct PairStats {
    std::size_t a = 0, b = 0;
    std::optional<Candidate> heat, heat_abs;
    std::optional<Candidate> lead, lead_abs;
    bool operator==(const PairStats&) const = default;
};

struct InfluenceGraph {
    std::vector<std::string> entities;
    DiscoveryConfig config;
    std::size_t windows = 0;
    std::vector<InfluenceEdge> edges;
    std::vector<PairStats> pairs;  // (0,1), (0,2), ..., (1,2), ...

    const PairStats* pair(std::size_t i, std::size_t j) const {
        if (i == j || i >= entities.size() || j >= entities.size()) return nullptr;
        if (i > j) std::swap(i, j);
        const std::size_t n = entities.size();
        const std::size_t k = i * n - i * (i + 1) / 2 + (j - i - 1);
        return &pairs[k];
    }
    std::optional<std::size_t> index_of(std::string_view id) const {
        for (std::size_t i = 0; i < entities.size(); ++i)
            if (entities[i] == id) return i;
        return std::nullopt;
    }
    bool operator==(const InfluenceGraph&) const = default;
};

namespace detail {

inline std::size_t axes_of(const EntitySeries& s) { return s.scalar ? 1 : s.dim; }
inline std::optional<std::size_t> axis_tag(const EntitySeries& s, std::size_t k) {
    return s.scalar ? std::nullopt : std::optional<std::size_t>(k);
}

// Ordering key: higher score first, then smaller lag, smaller axes, a->b.
struct Ranked {
    double score;
    std::size_t lag, ai, bi;
    int dir;  // 0 = a leads, 1 = b leads
    Candidate c;
};
inline bool ranks_before(const Ranked& x, const Ranked& y) {
    if (x.score != y.score) return x.score > y.score;
    return std::tie(x.lag, x.ai, x.bi, x.dir) < std::tie(y.lag, y.ai, y.bi, y.dir);
}

}  // namespace detail

inline PairStats pair_stats(const EntitySeries& a, const EntitySeries& b, std::size_t ia, std::size_t ib,
                            const DiscoveryConfig& cfg) {
    if (a.values.size() != b.values.size()) throw FormatError("entity series on different window grids");
    PairStats ps{ia, ib, {}, {}, {}, {}};
    std::optional<detail::Ranked> heat, heat_abs, lead, lead_abs;
    auto offer = [](std::optional<detail::Ranked>& slot, const detail::Ranked& r) {
        if (!slot || detail::ranks_before(r, *slot)) slot = r;
    };
    for (std::size_t i = 0; i < detail::axes_of(a); ++i) {
        const auto xa = a.axis(i);
        for (std::size_t j = 0; j < detail::axes_of(b); ++j) {
            const auto xb = b.axis(j);
            for (int dir = 0; dir < 2; ++dir) {
                const auto table = dir == 0 ? lagged_correlation(xa, xb, cfg.max_lag, cfg.min_overlap)
                                            : lagged_correlation(xb, xa, cfg.max_lag, cfg.min_overlap);
                for (const auto& lc : table) {
                    if (!lc.r) continue;
                    if (lc.lag == 0 && dir == 1) continue;  // same numbers as dir 0
                    Candidate c;
                    c.source = dir == 0 ? ia : ib;
                    c.target = dir == 0 ? ib : ia;
                    c.lag = lc.lag;
                    c.r = *lc.r;
                    c.source_axis = dir == 0 ? detail::axis_tag(a, i) : detail::axis_tag(b, j);
                    c.target_axis = dir == 0 ? detail::axis_tag(b, j) : detail::axis_tag(a, i);
                    c.n = lc.n;
                    const detail::Ranked by_r{c.r, lc.lag, i, j, dir, c};
                    const detail::Ranked by_abs{std::fabs(c.r), lc.lag, i, j, dir, c};
                    offer(heat, by_r);
                    offer(heat_abs, by_abs);
                    if (lc.lag >= 1) {
                        offer(lead, by_r);
                        offer(lead_abs, by_abs);
                    }
                }
            }
        }
    }
    if (heat) ps.heat = heat->c;
    if (heat_abs) ps.heat_abs = heat_abs->c;
    if (lead) ps.lead = lead->c;
    if (lead_abs) ps.lead_abs = lead_abs->c;
    return ps;
}

// Edge for a pair at a threshold, from its stored statistics.
inline std::optional<Candidate> edge_at(const PairStats& ps, double min_correlation, bool use_absolute) {
    const auto& c = use_absolute ? ps.lead_abs : ps.lead;
    if (!c) return std::nullopt;
    const double score = use_absolute ? std::fabs(c->r) : c->r;
    if (score >= min_correlation) return c;
    return std::nullopt;
}

inline std::optional<InfluenceEdge> best_edge(const EntitySeries& a, const EntitySeries& b,
                                              const DiscoveryConfig& cfg) {
    cfg.validate();
    auto ps = pair_stats(a, b, 0, 1, cfg);
    auto c = edge_at(ps, cfg.min_correlation, cfg.use_absolute);
    if (!c) return std::nullopt;
    const auto& src = c->source == 0 ? a : b;
    const auto& dst = c->source == 0 ? b : a;
    return InfluenceEdge{src.entity_id, dst.entity_id, c->lag, c->r, c->source_axis, c->target_axis};
}

inline std::vector<InfluenceEdge> edges_at(const InfluenceGraph& g, double min_correlation, bool use_absolute) {
    std::vector<InfluenceEdge> out;
    for (const auto& ps : g.pairs)
        if (auto c = edge_at(ps, min_correlation, use_absolute))
            out.push_back({g.entities[c->source], g.entities[c->target], c->lag, c->r, c->source_axis,
                           c->target_axis});
    std::sort(out.begin(), out.end(),
              [](const auto& x, const auto& y) { return std::tie(x.source, x.target) < std::tie(y.source, y.target); });
    return out;
}

// All unordered pairs, split over `jobs` threads; results land in pair order.
inline InfluenceGraph discover(std::span<const EntitySeries> series, const DiscoveryConfig& cfg,
                               std::size_t jobs = 1) {
    cfg.validate();
    if (series.size() < 2) throw ConfigError("discovery", "needs at least two entities");
    InfluenceGraph g;
    g.config = cfg;
    g.windows = series.front().values.size();
    for (const auto& s : series) {
        if (s.values.size() != g.windows) throw FormatError("entity series on different window grids");
        g.entities.push_back(s.entity_id);
    }
    {
        auto sorted = g.entities;
        std::sort(sorted.begin(), sorted.end());
        if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
            throw FormatError("duplicate entity id in discovery input");
    }

    const std::size_t n = series.size();
    std::vector<std::pair<std::size_t, std::size_t>> todo;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) todo.push_back({i, j});
    g.pairs.resize(todo.size());

    jobs = std::clamp<std::size_t>(jobs, 1, std::max<std::size_t>(1, todo.size()));
    std::vector<std::exception_ptr> errors(jobs);
    auto work = [&](std::size_t w) {
        try {
            for (std::size_t k = w; k < todo.size(); k += jobs)
                g.pairs[k] = pair_stats(series[todo[k].first], series[todo[k].second], todo[k].first, todo[k].second,
                                        cfg);
        } catch (...) {
            errors[w] = std::current_exception();
        }
    };
    if (jobs == 1) {
        work(0);
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < jobs; ++w) pool.emplace_back(work, w);
        for (auto& t : pool) t.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);

    g.edges = edges_at(g, cfg.min_correlation, cfg.use_absolute);
    return g;
}

// ---------------------------------------------------------------------------
// Serialization

namespace detail {

inline nlohmann::json opt_axis(const std::optional<std::size_t>& a) {
    return a ? nlohmann::json(*a) : nlohmann::json(nullptr);
}
inline std::optional<std::size_t> axis_from(const nlohmann::json& j) {
    return j.is_null() ? std::nullopt : std::optional<std::size_t>(j.get<std::size_t>());
}

inline nlohmann::json candidate_json(const std::optional<Candidate>& c) {
    if (!c) return nullptr;
    return {{"source", c->source}, {"target", c->target},           {"lag", c->lag},
            {"r", c->r},           {"source_axis", opt_axis(c->source_axis)}, {"target_axis", opt_axis(c->target_axis)},
            {"n", c->n}};
}

inline std::optional<Candidate> candidate_from(const nlohmann::json& j) {
    if (j.is_null()) return std::nullopt;
    Candidate c;
    c.source = j.at("source").get<std::size_t>();
    c.target = j.at("target").get<std::size_t>();
    c.lag = j.at("lag").get<std::size_t>();
    c.r = j.at("r").get<double>();
    c.source_axis = axis_from(j.at("source_axis"));
    c.target_axis = axis_from(j.at("target_axis"));
    c.n = j.at("n").get<std::size_t>();
    return c;
}

}  // namespace detail

inline nlohmann::json edge_json(const InfluenceEdge& e) {
    return {{"source", e.source},
            {"target", e.target},
            {"lag", e.lag},
            {"r", e.r},
            {"source_axis", detail::opt_axis(e.source_axis)},
            {"target_axis", detail::opt_axis(e.target_axis)}};
}

inline nlohmann::json influence_to_json(const InfluenceGraph& g) {
    nlohmann::json j;
    j["format"] = "influence-graph-result";
    j["version"] = 1;
    j["entities"] = g.entities;
    j["windows"] = g.windows;
    j["config"] = {{"max_lag", g.config.max_lag},
                   {"min_correlation", g.config.min_correlation},
                   {"min_overlap", g.config.min_overlap},
                   {"use_absolute", g.config.use_absolute}};
    j["edges"] = nlohmann::json::array();
    for (const auto& e : g.edges) j["edges"].push_back(edge_json(e));
    j["pairs"] = nlohmann::json::array();
    for (const auto& p : g.pairs)
        j["pairs"].push_back({{"a", p.a},
                              {"b", p.b},
                              {"heat", detail::candidate_json(p.heat)},
                              {"heat_abs", detail::candidate_json(p.heat_abs)},
                              {"lead", detail::candidate_json(p.lead)},
                              {"lead_abs", detail::candidate_json(p.lead_abs)}});
    return j;
}

inline InfluenceGraph influence_from_json(const nlohmann::json& j) {
    try {
        if (j.at("format") != "influence-graph-result" || j.at("version") != 1)
            throw FormatError("not an influence graph file");
        InfluenceGraph g;
        g.entities = j.at("entities").get<std::vector<std::string>>();
        g.windows = j.at("windows").get<std::size_t>();
        const auto& c = j.at("config");
        g.config.max_lag = c.at("max_lag").get<std::size_t>();
        g.config.min_correlation = c.at("min_correlation").get<double>();
        g.config.min_overlap = c.at("min_overlap").get<std::size_t>();
        g.config.use_absolute = c.at("use_absolute").get<bool>();
        for (const auto& e : j.at("edges"))
            g.edges.push_back({e.at("source").get<std::string>(), e.at("target").get<std::string>(),
                               e.at("lag").get<std::size_t>(), e.at("r").get<double>(),
                               detail::axis_from(e.at("source_axis")), detail::axis_from(e.at("target_axis"))});
        for (const auto& p : j.at("pairs"))
            g.pairs.push_back({p.at("a").get<std::size_t>(), p.at("b").get<std::size_t>(),
                               detail::candidate_from(p.at("heat")), detail::candidate_from(p.at("heat_abs")),
                               detail::candidate_from(p.at("lead")), detail::candidate_from(p.at("lead_abs"))});
        const std::size_t n = g.entities.size();
        if (g.pairs.size() != n * (n - (n > 0 ? 1 : 0)) / 2) throw FormatError("influence graph: pair count mismatch");
        return g;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("influence graph: ") + e.what());
    }
}

// Graphviz export of the edge list.
inline void write_dot(std::ostream& out, const InfluenceGraph& g) {
    auto quote = [](const std::string& s) {
        std::string q = "\"";
        for (char c : s) {
            if (c == '"' || c == '\\') q += '\\';
            q += c;
        }
        return q + '"';
    };
    out << "digraph influence {\n";
    for (const auto& e : g.entities) out << "  " << quote(e) << ";\n";
    for (const auto& e : g.edges)
        out << "  " << quote(e.source) << " -> " << quote(e.target) << " [label=\"lag " << e.lag << ", r "
            << textio::format_real(e.r) << "\"];\n";
    out << "}\n";
}

}  // namespace influence
