#pragma once

// Raw record parsing: posts (one JSON object per line) and physical-event
// counts (CSV with a header row). Malformed records are reported as rejects
// with their line number; they never abort the parse.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <variant>
#include <vector>

#include <json.hpp>

#include "influence/error.hpp"
#include "influence/timeutil.hpp"

namespace influence {

struct Post {
    std::string post_id;
    std::string author_id;
    Instant timestamp{};
    std::string text;
    std::optional<std::string> repost_of;
    std::optional<std::string> reply_to;
    std::optional<std::string> quote_of;
    std::vector<std::string> urls;  // normalized

    bool operator==(const Post&) const = default;
};

struct RejectReason {
    std::size_t line = 0;  // 1-based
    std::string field;     // offending field, or "record" for whole-line failures
    std::string reason;

    bool operator==(const RejectReason&) const = default;
};

struct PostBatch {
    std::vector<Post> posts;
    std::vector<RejectReason> rejects;
};

struct EventRecord {
    Date date{};
    std::string event_type;
    std::int64_t count = 0;

    bool operator==(const EventRecord&) const = default;
};

struct EventBatch {
    std::vector<EventRecord> records;  // sorted by (date, event_type)
    std::vector<RejectReason> rejects;
};

struct DomainRef {
    std::string url;   // normalized absolute URL
    std::string host;  // lowercase, no scheme, port or path; leading "www." removed

    bool operator==(const DomainRef&) const = default;
};

// ---------------------------------------------------------------------------
// URLs

namespace detail {

inline std::string to_lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

inline bool starts_with_ci(std::string_view s, std::string_view prefix) {
    if (s.size() < prefix.size()) return false;
    for (std::size_t i = 0; i < prefix.size(); ++i)
        if (std::tolower(static_cast<unsigned char>(s[i])) != prefix[i]) return false;
    return true;
}

inline bool is_tracking_param(std::string_view key) {
    const std::string k = to_lower(key);
    return k.starts_with("utm_") || k == "fbclid" || k == "gclid";
}

inline bool is_url_terminator(char c) {
    return std::isspace(static_cast<unsigned char>(c)) || c == '<' || c == '>' || c == '"' ||
           c == '`' || c == '{' || c == '}' || c == '|' || c == '\\' || c == '^';
}

}  // namespace detail

// Normalizes an absolute http(s) URL: lowercase scheme and host, default port
// removed, empty path becomes "/", tracking parameters (utm_*, fbclid, gclid)
// and the fragment dropped. Returns nullopt for anything unparseable.
inline std::optional<DomainRef> normalize_url(std::string_view raw) {
    std::string scheme;
    if (detail::starts_with_ci(raw, "https://")) {
        scheme = "https";
        raw.remove_prefix(8);
    } else if (detail::starts_with_ci(raw, "http://")) {
        scheme = "http";
        raw.remove_prefix(7);
    } else {
        return std::nullopt;
    }

    const auto auth_end = raw.find_first_of("/?#");
    std::string_view authority = raw.substr(0, auth_end);
    std::string_view rest = auth_end == std::string_view::npos ? std::string_view{} : raw.substr(auth_end);

    if (auto at = authority.rfind('@'); at != std::string_view::npos) authority.remove_prefix(at + 1);
    std::string_view host_part = authority;
    std::string_view port;
    if (auto colon = authority.rfind(':'); colon != std::string_view::npos) {
        host_part = authority.substr(0, colon);
        port = authority.substr(colon + 1);
        if (!std::all_of(port.begin(), port.end(), [](unsigned char c) { return std::isdigit(c); }))
            return std::nullopt;
    }
    std::string host = detail::to_lower(host_part);
    while (!host.empty() && host.back() == '.') host.pop_back();
    if (host.empty()) return std::nullopt;
    for (unsigned char c : host)
        if (!(std::isalnum(c) || c == '.' || c == '-' || c == '_' || c >= 0x80)) return std::nullopt;
    if (host.front() == '.' || host.find("..") != std::string::npos) return std::nullopt;
    if ((scheme == "http" && port == "80") || (scheme == "https" && port == "443")) port = {};

    if (auto hash = rest.find('#'); hash != std::string_view::npos) rest = rest.substr(0, hash);
    std::string_view path = rest;
    std::string_view query;
    if (auto q = rest.find('?'); q != std::string_view::npos) {
        path = rest.substr(0, q);
        query = rest.substr(q + 1);
    }

    std::string kept;
    while (!query.empty()) {
        const auto amp = query.find('&');
        std::string_view param = query.substr(0, amp);
        query = amp == std::string_view::npos ? std::string_view{} : query.substr(amp + 1);
        if (param.empty()) continue;
        if (detail::is_tracking_param(param.substr(0, param.find('=')))) continue;
        if (!kept.empty()) kept += '&';
        kept += param;
    }

    DomainRef ref;
    ref.url = scheme + "://" + host;
    if (!port.empty()) {
        ref.url += ':';
        ref.url += port;
    }
    ref.url += path.empty() ? std::string_view{"/"} : path;
    if (!kept.empty()) ref.url += "?" + kept;
    ref.host = host.starts_with("www.") ? host.substr(4) : host;
    return ref;
}

// Every http(s) URL in the post's text and urls field, normalized and
// deduplicated in first-appearance order.
inline std::vector<DomainRef> extract_urls(const Post& post) {
    std::vector<DomainRef> out;
    std::unordered_set<std::string> seen;
    auto add = [&](std::string_view candidate) {
        auto ref = normalize_url(candidate);
        if (ref && seen.insert(ref->url).second) out.push_back(std::move(*ref));
    };

    std::string_view text = post.text;
    std::size_t i = 0;
    while (i < text.size()) {
        std::string_view tail = text.substr(i);
        if (!detail::starts_with_ci(tail, "http://") && !detail::starts_with_ci(tail, "https://")) {
            ++i;
            continue;
        }
        std::size_t end = i;
        while (end < text.size() && !detail::is_url_terminator(text[end])) ++end;
        std::string_view token = text.substr(i, end - i);
        while (!token.empty() && std::string_view{".,;:!?)]'"}.find(token.back()) != std::string_view::npos)
            token.remove_suffix(1);
        add(token);
        i = end;
    }
    for (const auto& u : post.urls) add(u);
    return out;
}

// ---------------------------------------------------------------------------
// Posts

namespace detail {

inline std::optional<std::string> optional_string(const nlohmann::json& obj, const char* key,
                                                  std::string& bad_field) {
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) return std::nullopt;
    if (!it->is_string()) {
        bad_field = key;
        return std::nullopt;
    }
    return it->get<std::string>();
}

// Parses one record; returns either a post or a reject.
inline std::variant<Post, RejectReason> parse_post_line(std::string_view line, std::size_t line_no) {
    auto reject = [&](std::string field, std::string reason) -> std::variant<Post, RejectReason> {
        return RejectReason{line_no, std::move(field), std::move(reason)};
    };
    nlohmann::json obj = nlohmann::json::parse(line, nullptr, false);
    if (obj.is_discarded() || !obj.is_object()) return reject("record", "not a JSON object");

    auto required = [&](const char* key) -> std::optional<std::string> {
        auto it = obj.find(key);
        if (it == obj.end() || !it->is_string() || it->get_ref<const std::string&>().empty())
            return std::nullopt;
        return it->get<std::string>();
    };

    Post p;
    auto id = required("id");
    if (!id) return reject("id", "missing or empty");
    p.post_id = std::move(*id);
    auto author = required("author_id");
    if (!author) return reject("author_id", "missing or empty");
    p.author_id = std::move(*author);
    auto ts = required("timestamp");
    if (!ts) return reject("timestamp", "missing or empty");
    auto instant = parse_instant(*ts);
    if (!instant) return reject("timestamp", "not an ISO-8601 instant");
    p.timestamp = *instant;

    if (auto it = obj.find("text"); it != obj.end() && !it->is_null()) {
        if (!it->is_string()) return reject("text", "not a string");
        p.text = it->get<std::string>();
    }
    std::string bad;
    p.repost_of = optional_string(obj, "repost_of", bad);
    p.reply_to = optional_string(obj, "reply_to", bad);
    p.quote_of = optional_string(obj, "quote_of", bad);
    if (!bad.empty()) return reject(bad, "not a string");
    if (p.repost_of && (p.reply_to || p.quote_of))
        return reject("repost_of", "a pure repost cannot also reply or quote");
    for (const auto* ref : {&p.repost_of, &p.reply_to, &p.quote_of})
        if (*ref && (ref->value().empty() || ref->value() == p.post_id))
            return reject("repost_of/reply_to/quote_of", "empty or self reference");

    if (auto it = obj.find("urls"); it != obj.end() && !it->is_null()) {
        if (!it->is_array()) return reject("urls", "not an array");
        std::unordered_set<std::string> seen;
        for (const auto& u : *it) {
            if (!u.is_string()) return reject("urls", "non-string entry");
            if (auto ref = normalize_url(u.get_ref<const std::string&>()); ref && seen.insert(ref->url).second)
                p.urls.push_back(ref->url);
        }
    }
    return p;
}

inline bool is_blank(std::string_view s) {
    return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

}  // namespace detail

// Streams posts in batches of at most batch_size, so memory stays bounded by
// the batch plus the set of seen ids. Duplicate ids are rejected.
inline void for_each_post_batch(
    std::istream& in, std::size_t batch_size,
    const std::function<void(std::span<const Post>, std::span<const RejectReason>)>& sink) {
    if (batch_size == 0) throw ConfigError("batch_size", "must be positive");
    if (!in) throw IoError("post stream is not readable");
    std::vector<Post> posts;
    std::vector<RejectReason> rejects;
    std::unordered_set<std::string> ids;
    std::string line;
    std::size_t line_no = 0;

    auto flush = [&] {
        if (posts.empty() && rejects.empty()) return;
        sink(posts, rejects);
        posts.clear();
        rejects.clear();
    };

    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (detail::is_blank(line)) continue;
        auto parsed = detail::parse_post_line(line, line_no);
        if (auto* p = std::get_if<Post>(&parsed)) {
            if (!ids.insert(p->post_id).second) {
                rejects.push_back({line_no, "id", "duplicate post_id " + p->post_id});
            } else {
                posts.push_back(std::move(*p));
            }
        } else {
            rejects.push_back(std::get<RejectReason>(std::move(parsed)));
        }
        if (posts.size() + rejects.size() >= batch_size) flush();
    }
    if (in.bad()) throw IoError("read failure on post stream at line " + std::to_string(line_no));
    flush();
}

inline PostBatch parse_posts(std::istream& in) {
    PostBatch batch;
    for_each_post_batch(in, 65536, [&](std::span<const Post> posts, std::span<const RejectReason> rejects) {
        batch.posts.insert(batch.posts.end(), posts.begin(), posts.end());
        batch.rejects.insert(batch.rejects.end(), rejects.begin(), rejects.end());
    });
    return batch;
}

inline nlohmann::json post_to_json(const Post& p) {
    nlohmann::json j = nlohmann::json::object();
    j["id"] = p.post_id;
    j["author_id"] = p.author_id;
    j["timestamp"] = format_instant(p.timestamp);
    j["text"] = p.text;
    j["repost_of"] = p.repost_of ? nlohmann::json(*p.repost_of) : nlohmann::json(nullptr);
    j["reply_to"] = p.reply_to ? nlohmann::json(*p.reply_to) : nlohmann::json(nullptr);
    j["quote_of"] = p.quote_of ? nlohmann::json(*p.quote_of) : nlohmann::json(nullptr);
    j["urls"] = p.urls;
    return j;
}

// Canonical posts file: one record per line, in the given order.
inline void write_posts(std::ostream& out, std::span<const Post> posts) {
    for (const auto& p : posts) out << post_to_json(p).dump() << '\n';
}

// ---------------------------------------------------------------------------
// Events

namespace detail {

inline std::optional<std::vector<std::string>> split_csv(std::string_view line) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"' && cur.empty()) {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (quoted) return std::nullopt;
    fields.push_back(std::move(cur));
    return fields;
}

inline std::string trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return std::string(s);
}

}  // namespace detail

// Keeps only allowed event types; rows sharing (date, event_type) are summed.
inline EventBatch parse_events(std::istream& in, const std::set<std::string>& allowed_types) {
    if (allowed_types.empty()) throw ConfigError("event_types", "allow-list must not be empty");
    if (!in) throw IoError("event stream is not readable");

    EventBatch batch;
    std::map<std::pair<Date, std::string>, std::int64_t> sums;
    std::string line;
    std::size_t line_no = 0;
    int col_date = -1, col_type = -1, col_count = -1;
    std::size_t ncols = 0;

    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (detail::is_blank(line)) continue;
        auto fields = detail::split_csv(line);
        if (col_date < 0) {
            if (!fields) throw FormatError("events header is malformed");
            for (std::size_t i = 0; i < fields->size(); ++i) {
                const std::string name = detail::trim((*fields)[i]);
                if (name == "date") col_date = static_cast<int>(i);
                if (name == "event_type") col_type = static_cast<int>(i);
                if (name == "count") col_count = static_cast<int>(i);
            }
            if (col_date < 0 || col_type < 0 || col_count < 0)
                throw FormatError("events header must name date,event_type,count");
            ncols = fields->size();
            continue;
        }
        if (!fields || fields->size() != ncols) {
            batch.rejects.push_back({line_no, "record", "wrong number of columns"});
            continue;
        }
        auto date = parse_date(detail::trim((*fields)[col_date]));
        if (!date) {
            batch.rejects.push_back({line_no, "date", "not a YYYY-MM-DD date"});
            continue;
        }
        const std::string count_text = detail::trim((*fields)[col_count]);
        std::int64_t count = 0;
        auto [ptr, ec] = std::from_chars(count_text.data(), count_text.data() + count_text.size(), count);
        if (ec != std::errc{} || ptr != count_text.data() + count_text.size()) {
            batch.rejects.push_back({line_no, "count", "not an integer"});
            continue;
        }
        if (count < 0) {
            batch.rejects.push_back({line_no, "count", "negative count"});
            continue;
        }
        std::string type = detail::trim((*fields)[col_type]);
        if (!allowed_types.contains(type)) continue;
        sums[{*date, std::move(type)}] += count;
    }
    if (in.bad()) throw IoError("read failure on event stream at line " + std::to_string(line_no));

    batch.records.reserve(sums.size());
    for (auto& [key, count] : sums) batch.records.push_back({key.first, key.second, count});
    return batch;
}

inline void write_events(std::ostream& out, std::span<const EventRecord> events) {
    out << "date,event_type,count\n";
    for (const auto& e : events) {
        out << format_date(e.date) << ',';
        if (e.event_type.find_first_of(",\"") != std::string::npos) {
            out << '"';
            for (char c : e.event_type) out << (c == '"' ? "\"\"" : std::string(1, c));
            out << '"';
        } else {
            out << e.event_type;
        }
        out << ',' << e.count << '\n';
    }
}

inline std::ifstream open_input(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    return in;
}

}  // namespace influence
