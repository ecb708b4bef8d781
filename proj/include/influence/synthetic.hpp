#pragma once

// Seeded synthetic fixtures: planted echo chambers, bipartite block models,
// lagged series and a full post/event corpus for end-to-end runs.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "influence/graph.hpp"
#include "influence/ingest.hpp"

namespace influence::synth {

inline std::string numbered(std::string_view prefix, std::size_t i, int width = 4) {
    std::string digits = std::to_string(i);
    if (digits.size() < static_cast<std::size_t>(width)) digits.insert(0, width - digits.size(), '0');
    return std::string(prefix) + digits;
}

// Bipartite block model: users and assertions split into equal blocks; each
// (user, assertion) pair is an edge with p_in inside a block, p_out across.
struct BlockModel {
    std::size_t blocks = 2;
    std::size_t users_per_block = 50;
    std::size_t assertions_per_block = 50;
    double p_in = 0.2;
    double p_out = 0.01;
    std::uint64_t seed = 1;
};

struct PlantedGraph {
    std::vector<std::string> users;
    std::vector<std::string> assertions;
    std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;  // (user, assertion)
    std::vector<std::size_t> user_block;
    std::vector<std::size_t> assertion_block;
};

inline PlantedGraph block_model(const BlockModel& m) {
    PlantedGraph pg;
    std::mt19937_64 rng(m.seed);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    for (std::size_t b = 0; b < m.blocks; ++b)
        for (std::size_t i = 0; i < m.users_per_block; ++i) {
            pg.users.push_back(numbered("u", pg.users.size()));
            pg.user_block.push_back(b);
        }
    for (std::size_t b = 0; b < m.blocks; ++b)
        for (std::size_t i = 0; i < m.assertions_per_block; ++i) {
            pg.assertions.push_back(numbered("https://a.example/", pg.assertions.size()));
            pg.assertion_block.push_back(b);
        }
    for (std::uint32_t u = 0; u < pg.users.size(); ++u)
        for (std::uint32_t a = 0; a < pg.assertions.size(); ++a)
            if (U(rng) < (pg.user_block[u] == pg.assertion_block[a] ? m.p_in : m.p_out)) pg.edges.push_back({u, a});
    return pg;
}

// Two (or more) echo chambers: each user engages edges_per_user assertions
// of its own side; a cross_fraction share of all edges goes to the other
// sides instead.
struct EchoChambers {
    std::size_t sides = 2;
    std::size_t users_per_side = 200;
    std::size_t assertions_per_side = 400;
    std::size_t edges_per_user = 8;
    double cross_fraction = 0.01;
    std::uint64_t seed = 7;
};

inline PlantedGraph echo_chambers(const EchoChambers& m) {
    PlantedGraph pg;
    std::mt19937_64 rng(m.seed);
    for (std::size_t s = 0; s < m.sides; ++s)
        for (std::size_t i = 0; i < m.users_per_side; ++i) {
            pg.users.push_back(numbered("u", pg.users.size()));
            pg.user_block.push_back(s);
        }
    for (std::size_t s = 0; s < m.sides; ++s)
        for (std::size_t i = 0; i < m.assertions_per_side; ++i) {
            pg.assertions.push_back(numbered("a", pg.assertions.size()));
            pg.assertion_block.push_back(s);
        }
    std::uniform_real_distribution<double> U(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> pick(0, m.assertions_per_side - 1);
    std::uniform_int_distribution<std::size_t> other(1, std::max<std::size_t>(1, m.sides - 1));
    std::set<std::pair<std::uint32_t, std::uint32_t>> seen;
    for (std::uint32_t u = 0; u < pg.users.size(); ++u) {
        std::size_t made = 0;
        while (made < m.edges_per_user) {
            std::size_t side = pg.user_block[u];
            if (m.sides > 1 && U(rng) < m.cross_fraction) side = (side + other(rng)) % m.sides;
            const auto a = static_cast<std::uint32_t>(side * m.assertions_per_side + pick(rng));
            if (seen.insert({u, a}).second) {
                pg.edges.push_back({u, a});
                ++made;
            }
        }
    }
    return pg;
}

// Turns a planted graph into a BipartiteGraph: every edge becomes a CiteURL
// edge on the given day.
inline BipartiteGraph to_graph(const PlantedGraph& pg, Date day) {
    std::vector<AssertionNode> assertions;
    for (const auto& key : pg.assertions) assertions.push_back({key, AssertionKind::Url, {}, std::nullopt, {}});
    std::vector<Edge> edges;
    for (auto [u, a] : pg.edges) edges.push_back({u, a, EdgeKind::CiteURL, Instant{day} + std::chrono::hours{12}});
    return BipartiteGraph(pg.users, std::move(assertions), std::move(edges), DateRange{day, day});
}

// x ~ N(0,1) white noise over n windows; y[t] = coeff * x[t - lag] + N(0, noise).
inline std::pair<std::vector<double>, std::vector<double>> lagged_pair(std::size_t n, std::size_t lag, double coeff,
                                                                       double noise, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> N(0.0, 1.0);
    std::vector<double> ext(n + lag);
    for (auto& v : ext) v = N(rng);
    std::vector<double> x(ext.begin() + static_cast<std::ptrdiff_t>(lag), ext.end());
    std::vector<double> y(n);
    for (std::size_t t = 0; t < n; ++t) y[t] = coeff * ext[t] + noise * N(rng);
    return {x, y};
}

// ---------------------------------------------------------------------------
// Post/event corpus

struct CorpusSpec {
    std::size_t users = 1000;
    std::size_t posts = 5000;
    std::size_t communities = 4;
    std::size_t hosts_per_community = 4;
    std::size_t urls_per_host = 6;
    Date start{};
    int days = 38;
    double cross_prob = 0.05;
    std::vector<std::string> event_types;
    std::uint64_t seed = 2022;
};

struct Corpus {
    std::vector<Post> posts;
    std::vector<EventRecord> events;
    std::vector<std::size_t> user_community;  // per synthetic user index
};

// Users belong to communities with Zipf-like activity; authors post
// originals (often citing community URLs), repost, reply to and quote
// earlier posts, mostly from their own community. Event counts are Poisson
// with slowly varying rates.
inline Corpus generate_corpus(const CorpusSpec& spec) {
    Corpus c;
    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    const std::size_t K = std::max<std::size_t>(1, spec.communities);

    std::vector<std::vector<std::size_t>> members(K);
    for (std::size_t u = 0; u < spec.users; ++u) {
        c.user_community.push_back(u % K);
        members[u % K].push_back(u);
    }
    // Zipf weights within each community
    std::vector<std::discrete_distribution<std::size_t>> author_pick;
    for (const auto& m : members) {
        std::vector<double> w(m.size());
        for (std::size_t i = 0; i < w.size(); ++i) w[i] = 1.0 / std::pow(static_cast<double>(i + 1), 0.9);
        author_pick.emplace_back(w.begin(), w.end());
    }
    std::uniform_int_distribution<std::size_t> community_pick(0, K - 1);
    auto url_for = [&](std::size_t k) {
        std::uniform_int_distribution<std::size_t> h(0, spec.hosts_per_community - 1), p(0, spec.urls_per_host - 1);
        const std::string host = "news" + std::to_string(k) + "-" + std::to_string(h(rng)) + ".example";
        return "https://" + host + "/story/" + std::to_string(p(rng));
    };

    // timestamps sorted so references point backwards in time
    std::vector<std::int64_t> secs(spec.posts);
    std::uniform_int_distribution<std::int64_t> T(0, static_cast<std::int64_t>(spec.days) * 86400 - 1);
    for (auto& s : secs) s = T(rng);
    std::sort(secs.begin(), secs.end());

    std::vector<std::vector<std::size_t>> posts_by_comm(K);
    for (std::size_t i = 0; i < spec.posts; ++i) {
        const std::size_t k = community_pick(rng);
        const std::size_t author = members[k][author_pick[k](rng)];
        Post p;
        p.post_id = numbered("p", i, 6);
        p.author_id = numbered("user", author);
        p.timestamp = Instant{spec.start} + std::chrono::seconds{secs[i]};

        const double r = U(rng);
        std::size_t ref_comm = U(rng) < spec.cross_prob ? (k + 1 + rng() % std::max<std::size_t>(1, K - 1)) % K : k;
        const auto& pool = posts_by_comm[ref_comm];
        if (r < 0.45 || pool.empty()) {
            p.text = "original thought " + std::to_string(i);
            if (U(rng) < 0.6) p.text += " see " + url_for(ref_comm) + "?utm_source=synthetic";
        } else {
            // prefer recent posts
            const std::size_t span = std::min<std::size_t>(pool.size(), 200);
            std::uniform_int_distribution<std::size_t> back(1, span);
            const std::string& target = c.posts[pool[pool.size() - back(rng)]].post_id;
            if (r < 0.75) {
                p.repost_of = target;
            } else if (r < 0.9) {
                p.reply_to = target;
                p.text = "reply " + std::to_string(i);
            } else {
                p.quote_of = target;
                p.text = "quote " + std::to_string(i) + " " + url_for(ref_comm);
            }
        }
        p.urls = {};
        for (const auto& ref : extract_urls(p)) p.urls.push_back(ref.url);
        posts_by_comm[k].push_back(c.posts.size());
        c.posts.push_back(std::move(p));
    }

    for (std::size_t e = 0; e < spec.event_types.size(); ++e) {
        const double phase = U(rng) * 6.28318530718;
        for (int d = 0; d < spec.days; ++d) {
            const double rate = 3.0 + 2.0 * std::sin(phase + d / 5.0);
            std::poisson_distribution<std::int64_t> P(rate);
            c.events.push_back({spec.start + std::chrono::days{d}, spec.event_types[e], P(rng)});
        }
    }
    std::sort(c.events.begin(), c.events.end(), [](const EventRecord& a, const EventRecord& b) {
        return std::tie(a.date, a.event_type) < std::tie(b.date, b.event_type);
    });
    return c;
}

}  // namespace influence::synth
