#pragma once

// Graph snapshot file:
//
//   influence-graph	1
//   users	<n>
//   assertions	<n>
//   edges	<n>
//   date_range	<first>	<last>        (or "-	-" for an empty graph)
//   U	<user key>
//   A	<key>	<kind>	<author|->	<timestamp|->	<text>
//   E	<user key>	<assertion key>	<kind>	<timestamp>
//
// Rows follow the graph's canonical order, so equal graphs serialize to
// identical bytes.

#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "influence/graph.hpp"
#include "influence/textio.hpp"

namespace influence {

inline void write_graph(std::ostream& out, const BipartiteGraph& g) {
    using textio::escape;
    out << "influence-graph\t1\n";
    out << "users\t" << g.users().size() << '\n';
    out << "assertions\t" << g.assertions().size() << '\n';
    out << "edges\t" << g.edges().size() << '\n';
    if (g.date_range())
        out << "date_range\t" << format_date(g.date_range()->first) << '\t' << format_date(g.date_range()->last)
            << '\n';
    else
        out << "date_range\t-\t-\n";
    for (const auto& u : g.users()) out << "U\t" << escape(u) << '\n';
    for (const auto& a : g.assertions()) {
        out << "A\t" << escape(a.key) << '\t' << to_string(a.kind) << '\t' << (a.author.empty() ? "-" : escape(a.author))
            << '\t' << (a.timestamp ? format_instant(*a.timestamp) : std::string("-")) << '\t' << escape(a.text)
            << '\n';
    }
    for (const auto& e : g.edges()) {
        out << "E\t" << escape(g.users()[e.user]) << '\t' << escape(g.assertions()[e.assertion].key) << '\t'
            << to_string(e.kind) << '\t' << format_instant(e.timestamp) << '\n';
    }
}

inline std::string graph_to_string(const BipartiteGraph& g) {
    std::ostringstream os;
    write_graph(os, g);
    return os.str();
}

inline BipartiteGraph read_graph(std::istream& in) {
    using textio::split_tabs;
    using textio::unescape;
    std::string line;
    auto header = [&](std::string_view name) {
        if (!textio::next_line(in, line)) throw FormatError("graph snapshot truncated");
        auto f = split_tabs(line);
        if (f.empty() || f[0] != name) throw FormatError("graph snapshot: expected " + std::string(name));
        return std::vector<std::string>(f.begin() + 1, f.end());
    };
    auto magic = header("influence-graph");
    if (magic.size() != 1 || magic[0] != "1") throw FormatError("unsupported graph snapshot version");
    const auto nu = textio::parse_int<std::size_t>(header("users").at(0));
    const auto na = textio::parse_int<std::size_t>(header("assertions").at(0));
    const auto ne = textio::parse_int<std::size_t>(header("edges").at(0));
    auto dr = header("date_range");
    if (dr.size() != 2) throw FormatError("graph snapshot: bad date_range");
    std::optional<DateRange> range;
    if (dr[0] != "-") {
        auto first = parse_date(dr[0]);
        auto last = parse_date(dr[1]);
        if (!first || !last) throw FormatError("graph snapshot: bad date_range");
        range = DateRange{*first, *last};
    }

    std::vector<std::string> users;
    std::vector<AssertionNode> assertions;
    std::vector<Edge> edges;
    users.reserve(nu);
    assertions.reserve(na);
    edges.reserve(ne);
    std::unordered_map<std::string, std::uint32_t> uidx, aidx;
    while (textio::next_line(in, line)) {
        auto f = split_tabs(line);
        if (f[0] == "U") {
            textio::expect_fields(f, 2, "user row");
            uidx.emplace(unescape(f[1]), static_cast<std::uint32_t>(users.size()));
            users.push_back(unescape(f[1]));
        } else if (f[0] == "A") {
            textio::expect_fields(f, 6, "assertion row");
            AssertionNode a;
            a.key = unescape(f[1]);
            auto kind = assertion_kind_from(f[2]);
            if (!kind) throw FormatError("bad assertion kind");
            a.kind = *kind;
            if (f[3] != "-") a.author = unescape(f[3]);
            if (f[4] != "-") {
                auto t = parse_instant(f[4]);
                if (!t) throw FormatError("bad assertion timestamp");
                a.timestamp = *t;
            }
            a.text = unescape(f[5]);
            aidx.emplace(a.key, static_cast<std::uint32_t>(assertions.size()));
            assertions.push_back(std::move(a));
        } else if (f[0] == "E") {
            textio::expect_fields(f, 5, "edge row");
            auto u = uidx.find(unescape(f[1]));
            auto a = aidx.find(unescape(f[2]));
            auto kind = edge_kind_from(f[3]);
            auto t = parse_instant(f[4]);
            if (u == uidx.end() || a == aidx.end() || !kind || !t) throw FormatError("bad edge row: " + line);
            edges.push_back({u->second, a->second, *kind, *t});
        } else {
            throw FormatError("graph snapshot: unknown row type " + std::string(f[0]));
        }
    }
    if (users.size() != nu || assertions.size() != na || edges.size() != ne)
        throw FormatError("graph snapshot: counts do not match header");
    return BipartiteGraph(std::move(users), std::move(assertions), std::move(edges), range);
}

inline BipartiteGraph graph_from_string(const std::string& s) {
    std::istringstream is(s);
    return read_graph(is);
}

}  // namespace influence
