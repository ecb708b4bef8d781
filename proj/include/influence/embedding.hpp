#pragma once

// Nonnegative ideology embeddings: tables, popular-node selection, neighbor
// propagation, cross-window axis alignment and the series file format.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "influence/error.hpp"
#include "influence/graph.hpp"
#include "influence/textio.hpp"

namespace influence {

enum class Provenance : std::uint8_t { Trained, Propagated, Missing };

inline std::string_view to_string(Provenance p) {
    switch (p) {
        case Provenance::Trained: return "trained";
        case Provenance::Propagated: return "propagated";
        case Provenance::Missing: return "missing";
    }
    return "?";
}

inline std::optional<Provenance> provenance_from(std::string_view s) {
    if (s == "trained") return Provenance::Trained;
    if (s == "propagated") return Provenance::Propagated;
    if (s == "missing") return Provenance::Missing;
    return std::nullopt;
}

struct EmbeddingEntry {
    std::vector<double> coords;  // empty when Missing
    Provenance provenance = Provenance::Missing;

    bool present() const { return provenance != Provenance::Missing; }
    bool operator==(const EmbeddingEntry&) const = default;
};

// NodeId -> nonnegative d-vector. Every stored coordinate is finite and >= 0.
class EmbeddingTable {
public:
    explicit EmbeddingTable(std::size_t dim = 2) : dim_(dim) {}

    std::size_t dim() const { return dim_; }
    std::size_t size() const { return entries_.size(); }
    const std::map<NodeId, EmbeddingEntry>& entries() const { return entries_; }

    void set(const NodeId& id, std::vector<double> coords, Provenance p) {
        if (p == Provenance::Missing) {
            entries_[id] = {{}, Provenance::Missing};
            return;
        }
        if (coords.size() != dim_) throw FormatError("embedding for " + id.key + " has wrong dimension");
        for (auto& c : coords) {
            if (!std::isfinite(c) || c < 0.0) throw FormatError("embedding for " + id.key + " is not nonnegative");
            if (c == 0.0) c = 0.0;  // canonical +0
        }
        entries_[id] = {std::move(coords), p};
    }

    void set_missing(const NodeId& id) { set(id, {}, Provenance::Missing); }

    const EmbeddingEntry* find(const NodeId& id) const {
        auto it = entries_.find(id);
        return it == entries_.end() ? nullptr : &it->second;
    }

    // Coordinates if present and not Missing.
    const std::vector<double>* vector_of(const NodeId& id) const {
        const auto* e = find(id);
        return e && e->present() ? &e->coords : nullptr;
    }

    std::size_t count(Provenance p) const {
        return static_cast<std::size_t>(
            std::count_if(entries_.begin(), entries_.end(), [p](const auto& kv) { return kv.second.provenance == p; }));
    }

    bool operator==(const EmbeddingTable&) const = default;

private:
    std::size_t dim_;
    std::map<NodeId, EmbeddingEntry> entries_;
};

// ---------------------------------------------------------------------------

struct PopularSet {
    std::vector<std::uint32_t> users;       // graph indices, ascending
    std::vector<std::uint32_t> assertions;  // graph indices, ascending

    std::vector<NodeId> ids(const BipartiteGraph& g) const {
        std::vector<NodeId> out;
        for (auto u : users) out.push_back(g.user_id(u));
        for (auto a : assertions) out.push_back(g.assertion_id(a));
        return out;
    }
};

// Highest-degree users and assertions; ties go to the smaller key.
inline PopularSet select_popular(const BipartiteGraph& g, std::size_t user_count, std::size_t assertion_count) {
    if (user_count < 1) throw ConfigError("popular_user_count", "must be >= 1");
    if (assertion_count < 1) throw ConfigError("popular_assertion_count", "must be >= 1");
    auto top = [](std::size_t n, std::size_t k, auto degree) {
        std::vector<std::uint32_t> idx(n);
        std::iota(idx.begin(), idx.end(), 0u);
        k = std::min(k, n);
        // indices are in key order, so index order breaks ties by key
        std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                          [&](auto x, auto y) { return degree(x) != degree(y) ? degree(x) > degree(y) : x < y; });
        idx.resize(k);
        std::sort(idx.begin(), idx.end());
        return idx;
    };
    PopularSet s;
    s.users = top(g.users().size(), user_count, [&](auto u) { return g.user_degree(u); });
    s.assertions = top(g.assertions().size(), assertion_count, [&](auto a) { return g.assertion_degree(a); });
    return s;
}

// Fills every node of g: trained entries are copied; an unembedded node with
// embedded neighbors receives their arithmetic mean (Propagated), in
// synchronous sweeps until nothing changes; the rest are Missing.
inline EmbeddingTable propagate_embeddings(const EmbeddingTable& trained, const BipartiteGraph& g) {
    const std::size_t d = trained.dim();
    const std::size_t nu = g.users().size();
    const std::size_t n = nu + g.assertions().size();
    // node i < nu is user i, otherwise assertion i - nu
    std::vector<std::vector<double>> value(n);
    std::vector<char> known(n, 0);
    EmbeddingTable out(d);
    for (const auto& [id, e] : trained.entries())
        if (e.present()) out.set(id, e.coords, Provenance::Trained);

    auto node_id = [&](std::size_t i) { return i < nu ? g.user_id(static_cast<std::uint32_t>(i))
                                                      : g.assertion_id(static_cast<std::uint32_t>(i - nu)); };
    for (std::size_t i = 0; i < n; ++i)
        if (const auto* v = trained.vector_of(node_id(i))) {
            value[i] = *v;
            known[i] = 1;
        }
    auto neighbors = [&](std::size_t i, auto&& fn) {
        if (i < nu)
            for (auto a : g.user_neighbors(static_cast<std::uint32_t>(i))) fn(nu + a);
        else
            for (auto u : g.assertion_neighbors(static_cast<std::uint32_t>(i - nu))) fn(u);
    };

    std::vector<std::pair<std::size_t, std::vector<double>>> updates;
    do {
        updates.clear();
        for (std::size_t i = 0; i < n; ++i) {
            if (known[i]) continue;
            std::vector<double> sum(d, 0.0);
            std::size_t cnt = 0;
            neighbors(i, [&](std::size_t j) {
                if (!known[j]) return;
                for (std::size_t k = 0; k < d; ++k) sum[k] += value[j][k];
                ++cnt;
            });
            if (cnt == 0) continue;
            for (auto& s : sum) s /= static_cast<double>(cnt);
            updates.emplace_back(i, std::move(sum));
        }
        for (auto& [i, v] : updates) {
            value[i] = std::move(v);
            known[i] = 1;
            out.set(node_id(i), value[i], Provenance::Propagated);
        }
    } while (!updates.empty());

    for (std::size_t i = 0; i < n; ++i)
        if (!known[i]) out.set_missing(node_id(i));
    return out;
}

// ---------------------------------------------------------------------------

struct AlignResult {
    EmbeddingTable table;
    std::vector<std::size_t> permutation;  // output axis k takes input axis permutation[k]
    bool no_shared_nodes = false;
};

inline EmbeddingTable permute_axes(const EmbeddingTable& t, std::span<const std::size_t> perm) {
    EmbeddingTable out(t.dim());
    for (const auto& [id, e] : t.entries()) {
        if (!e.present()) {
            out.set_missing(id);
            continue;
        }
        std::vector<double> c(t.dim());
        for (std::size_t k = 0; k < t.dim(); ++k) c[k] = e.coords[perm[k]];
        out.set(id, std::move(c), e.provenance);
    }
    return out;
}

// Permutes cur's axes to maximize the summed cosine similarity between prev's
// and cur's per-axis coordinate vectors over the shared nodes. Exhaustive
// over all d! permutations; the identity wins ties.
inline AlignResult align_axes(const EmbeddingTable& prev, const EmbeddingTable& cur) {
    const std::size_t d = cur.dim();
    if (prev.dim() != d) throw ConfigError("latent_dim", "cannot align tables of different dimension");
    std::vector<std::size_t> perm(d);
    std::iota(perm.begin(), perm.end(), std::size_t{0});

    std::vector<std::vector<double>> pa(d), ca(d);
    for (const auto& [id, e] : cur.entries()) {
        if (!e.present()) continue;
        const auto* p = prev.vector_of(id);
        if (!p) continue;
        for (std::size_t k = 0; k < d; ++k) {
            pa[k].push_back((*p)[k]);
            ca[k].push_back(e.coords[k]);
        }
    }
    if (pa[0].empty()) return {cur, perm, true};

    std::vector<std::vector<double>> cosine(d, std::vector<double>(d, 0.0));
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            double dot = 0, ni = 0, nj = 0;
            for (std::size_t r = 0; r < pa[i].size(); ++r) {
                dot += pa[i][r] * ca[j][r];
                ni += pa[i][r] * pa[i][r];
                nj += ca[j][r] * ca[j][r];
            }
            cosine[i][j] = (ni > 0 && nj > 0) ? dot / std::sqrt(ni * nj) : 0.0;
        }

    std::vector<std::size_t> best = perm;
    double best_score = -1.0;
    do {
        double s = 0;
        for (std::size_t k = 0; k < d; ++k) s += cosine[k][perm[k]];
        if (s > best_score + 1e-12) {
            best_score = s;
            best = perm;
        }
    } while (std::next_permutation(perm.begin(), perm.end()));
    return {permute_axes(cur, best), best, false};
}

// ---------------------------------------------------------------------------
// Series

struct TrainReport {
    std::size_t epochs = 0;
    std::size_t nodes = 0;
    std::size_t positive_edges = 0;
    double initial_loss = 0, final_loss = 0;
    double initial_recon = 0, final_recon = 0;
    double initial_kl = 0, final_kl = 0;
    double initial_ortho = 0, final_ortho = 0;
    std::vector<double> trajectory;  // per-epoch training loss

    bool operator==(const TrainReport&) const = default;
};

struct WindowEmbedding {
    TimeWindow window;
    EmbeddingTable table;
    std::optional<TrainReport> report;      // none for empty windows
    std::vector<std::size_t> permutation;   // alignment applied
    bool align_warning = false;
};

struct EmbeddingSeries {
    std::size_t dim = 2;
    std::vector<WindowEmbedding> windows;
};

// Series file:
//   influence-embeddings	1
//   dim	<d>
//   W	<index>	<start>	<length_days>
//   N	<kind>	<key>	<provenance>	<c_1> ... <c_d>     ("-" coordinates when missing)
inline void write_embedding_series(std::ostream& out, const EmbeddingSeries& s) {
    out << "influence-embeddings\t1\n";
    out << "dim\t" << s.dim << '\n';
    for (const auto& w : s.windows) {
        out << "W\t" << w.window.index << '\t' << format_date(w.window.start) << '\t' << w.window.length_days << '\n';
        for (const auto& [id, e] : w.table.entries()) {
            out << "N\t" << to_string(id.kind) << '\t' << textio::escape(id.key) << '\t' << to_string(e.provenance);
            for (std::size_t k = 0; k < s.dim; ++k)
                out << '\t' << (e.present() ? textio::format_real(e.coords[k]) : std::string("-"));
            out << '\n';
        }
    }
}

inline EmbeddingSeries read_embedding_series(std::istream& in) {
    std::string line;
    if (!textio::next_line(in, line) || line != "influence-embeddings\t1")
        throw FormatError("not an embedding series file");
    if (!textio::next_line(in, line) || !line.starts_with("dim\t")) throw FormatError("embedding series: no dim");
    EmbeddingSeries s;
    s.dim = textio::parse_int<std::size_t>(std::string_view(line).substr(4));
    while (textio::next_line(in, line)) {
        auto f = textio::split_tabs(line);
        if (f[0] == "W") {
            textio::expect_fields(f, 4, "window row");
            auto start = parse_date(f[2]);
            if (!start) throw FormatError("embedding series: bad window date");
            WindowEmbedding w{TimeWindow{*start, textio::parse_int<int>(f[3]), textio::parse_int<std::size_t>(f[1])},
                              EmbeddingTable(s.dim), std::nullopt, {}, false};
            s.windows.push_back(std::move(w));
        } else if (f[0] == "N") {
            textio::expect_fields(f, 4 + s.dim, "node row");
            if (s.windows.empty()) throw FormatError("embedding series: node before window");
            NodeId id{f[1] == "user" ? NodeKind::User : NodeKind::Assertion, textio::unescape(f[2])};
            auto prov = provenance_from(f[3]);
            if (!prov) throw FormatError("embedding series: bad provenance");
            std::vector<double> c;
            if (*prov != Provenance::Missing)
                for (std::size_t k = 0; k < s.dim; ++k) c.push_back(textio::parse_real(f[4 + k]));
            s.windows.back().table.set(id, std::move(c), *prov);
        } else {
            throw FormatError("embedding series: unknown row " + std::string(f[0]));
        }
    }
    return s;
}

}  // namespace influence
