#pragma once

#include <charconv>
#include <chrono>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>

namespace influence {

using Instant = std::chrono::sys_seconds;
using Date = std::chrono::sys_days;

namespace detail {

inline bool parse_uint(std::string_view s, int& out) {
    if (s.empty()) return false;
    for (char c : s)
        if (c < '0' || c > '9') return false;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && p == s.data() + s.size();
}

}  // namespace detail

// YYYY-MM-DD
inline std::optional<Date> parse_date(std::string_view s) {
    using namespace std::chrono;
    if (s.size() != 10 || s[4] != '-' || s[7] != '-') return std::nullopt;
    int y = 0, m = 0, d = 0;
    if (!detail::parse_uint(s.substr(0, 4), y) || !detail::parse_uint(s.substr(5, 2), m) ||
        !detail::parse_uint(s.substr(8, 2), d))
        return std::nullopt;
    year_month_day ymd{year{y}, month{static_cast<unsigned>(m)}, day{static_cast<unsigned>(d)}};
    if (!ymd.ok()) return std::nullopt;
    return sys_days{ymd};
}

// ISO-8601 instant: YYYY-MM-DDTHH:MM:SS[.frac][Z|+HH:MM|-HH:MM]. A missing
// offset means UTC. Fractional seconds are truncated.
inline std::optional<Instant> parse_instant(std::string_view s) {
    using namespace std::chrono;
    if (s.size() < 19 || (s[10] != 'T' && s[10] != ' ') || s[13] != ':' || s[16] != ':')
        return std::nullopt;
    auto date = parse_date(s.substr(0, 10));
    if (!date) return std::nullopt;
    int hh = 0, mm = 0, ss = 0;
    if (!detail::parse_uint(s.substr(11, 2), hh) || !detail::parse_uint(s.substr(14, 2), mm) ||
        !detail::parse_uint(s.substr(17, 2), ss))
        return std::nullopt;
    if (hh > 23 || mm > 59 || ss > 60) return std::nullopt;

    std::string_view rest = s.substr(19);
    if (!rest.empty() && (rest.front() == '.' || rest.front() == ',')) {
        std::size_t i = 1;
        while (i < rest.size() && rest[i] >= '0' && rest[i] <= '9') ++i;
        if (i == 1) return std::nullopt;
        rest.remove_prefix(i);
    }
    seconds offset{0};
    if (rest == "Z" || rest == "z" || rest.empty()) {
    } else if ((rest.front() == '+' || rest.front() == '-') && rest.size() == 6 && rest[3] == ':') {
        int oh = 0, om = 0;
        if (!detail::parse_uint(rest.substr(1, 2), oh) || !detail::parse_uint(rest.substr(4, 2), om))
            return std::nullopt;
        offset = hours{oh} + minutes{om};
        if (rest.front() == '-') offset = -offset;
    } else {
        return std::nullopt;
    }
    return Instant{*date} + hours{hh} + minutes{mm} + seconds{ss} - offset;
}

inline std::string format_date(Date d) {
    using namespace std::chrono;
    year_month_day ymd{d};
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
    return buf;
}

inline std::string format_instant(Instant t) {
    using namespace std::chrono;
    const Date d = floor<days>(t);
    const hh_mm_ss<seconds> tod{t - d};
    char buf[32];
    std::snprintf(buf, sizeof buf, "%sT%02d:%02d:%02dZ", format_date(d).c_str(),
                  static_cast<int>(tod.hours().count()), static_cast<int>(tod.minutes().count()),
                  static_cast<int>(tod.seconds().count()));
    return buf;
}

inline Date day_of(Instant t) { return std::chrono::floor<std::chrono::days>(t); }

}  // namespace influence
