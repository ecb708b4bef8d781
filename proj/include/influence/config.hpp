#pragma once

// Pipeline configuration: one JSON document, built-in presets and dotted
// overrides. Later layers win: defaults, file, preset, --set, --seed.
//
// {
//   "input":     {"posts": "posts.jsonl", "events": "events.csv", "batch_size": 10000},
//   "date_range": {"first": "2022-02-15", "last": "2022-04-11"},     (optional)
//   "windows":   {"length_days": 20, "shift_days": 1},
//   "discovery": {"lag_days": 5, "min_correlation": 0.7, "min_overlap": 8, "use_absolute": false},
//   "cleaning":  {"enabled": true, "candidate_budget": 10000, "add_threshold": 0.95, "remove_threshold": 0.02},
//   "embedding": {"latent_dim": 2, "epochs": 300, ...},
//   "entities":  {"influencer_count": 20, "domain_count": 20, "min_community_size": 3,
//                 "max_iters": 100, "event_types": [...]},
//   "seed": 42,
//   "store": "influence-store"
// }

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "influence/discovery.hpp"
#include "influence/entities.hpp"
#include "influence/error.hpp"
#include "influence/graph.hpp"
#include "influence/vgae.hpp"

namespace influence {

struct CleaningConfig {
    bool enabled = true;
    std::size_t candidate_budget = 10000;
    double add_threshold = 0.95;
    double remove_threshold = 0.02;
};

struct PipelineConfig {
    std::string posts_path;
    std::string events_path;
    std::size_t batch_size = 10000;
    std::optional<DateRange> date_range;
    int window_length_days = 20;
    int shift_days = 2;
    int lag_days = 5;
    double min_correlation = 0.5;
    std::size_t min_overlap = 8;
    bool use_absolute = false;
    CleaningConfig cleaning;
    EmbedConfig embedding;
    EntityConfig entities;
    std::uint64_t seed = 42;
    std::string store = "influence-store";

    // L = floor(lag_days / shift_days)
    std::size_t max_lag_windows() const { return static_cast<std::size_t>(lag_days / shift_days); }

    DiscoveryConfig discovery() const {
        return {max_lag_windows(), min_correlation, min_overlap, use_absolute};
    }

    EmbedConfig embed_config() const {
        EmbedConfig c = embedding;
        c.seed = seed;
        return c;
    }

    void validate() const {
        if (shift_days < 1) throw ConfigError("windows.shift_days", "must be >= 1");
        if (window_length_days < shift_days)
            throw ConfigError("windows.length_days", "must be >= windows.shift_days");
        if (lag_days < shift_days) throw ConfigError("discovery.lag_days", "must be >= windows.shift_days");
        if (!(min_correlation > 0.0 && min_correlation <= 1.0))
            throw ConfigError("discovery.min_correlation", "must lie in (0, 1]");
        if (min_overlap < 1) throw ConfigError("discovery.min_overlap", "must be >= 1");
        if (batch_size < 1) throw ConfigError("input.batch_size", "must be >= 1");
        if (date_range && date_range->last < date_range->first)
            throw ConfigError("date_range", "last precedes first");
        if (cleaning.candidate_budget < 1) throw ConfigError("cleaning.candidate_budget", "must be >= 1");
        if (!(cleaning.add_threshold >= 0.0 && cleaning.add_threshold <= 1.0))
            throw ConfigError("cleaning.add_threshold", "must lie in [0, 1]");
        if (!(cleaning.remove_threshold >= 0.0 && cleaning.remove_threshold <= 1.0))
            throw ConfigError("cleaning.remove_threshold", "must lie in [0, 1]");
        if (store.empty()) throw ConfigError("store", "must not be empty");
        embedding.validate();
        entities.validate();
    }
};

// Fifteen physical event types. The first three are named in the source
// material; the rest are common conflict/cooperation codes.
inline std::vector<std::string> default_event_types() {
    return {"provide_economic_aid",   "investigate_military_action", "obstruct_passage",
            "make_public_statement",  "appeal_for_cooperation",      "express_intent_to_cooperate",
            "engage_in_diplomacy",    "provide_military_aid",        "demand",
            "disapprove",             "reject",                      "threaten",
            "protest",                "impose_sanctions",            "use_conventional_force"};
}

struct Preset {
    std::string name;
    int window_length_days;
    int shift_days;
    int lag_days;
    double min_correlation;
    std::string first, last;
};

inline const std::vector<Preset>& presets() {
    static const std::vector<Preset> all = {
        {"french-election", 20, 1, 5, 0.7, "2022-02-15", "2022-04-11"},
        {"philippine", 20, 2, 5, 0.5, "2023-01-01", "2023-06-28"},
        {"russophobia", 20, 2, 5, 0.4, "2022-05-01", "2023-04-15"},
    };
    return all;
}

inline nlohmann::json preset_json(std::string_view name) {
    for (const auto& p : presets())
        if (p.name == name)
            return {{"date_range", {{"first", p.first}, {"last", p.last}}},
                    {"windows", {{"length_days", p.window_length_days}, {"shift_days", p.shift_days}}},
                    {"discovery", {{"lag_days", p.lag_days}, {"min_correlation", p.min_correlation}}},
                    {"entities", {{"event_types", default_event_types()}}}};
    std::string known;
    for (const auto& p : presets()) known += (known.empty() ? "" : ", ") + p.name;
    throw ConfigError("preset", "unknown preset '" + std::string(name) + "' (known: " + known + ")");
}

inline nlohmann::json config_to_json(const PipelineConfig& c) {
    nlohmann::json j;
    j["input"] = {{"posts", c.posts_path}, {"events", c.events_path}, {"batch_size", c.batch_size}};
    if (c.date_range)
        j["date_range"] = {{"first", format_date(c.date_range->first)}, {"last", format_date(c.date_range->last)}};
    else
        j["date_range"] = nullptr;
    j["windows"] = {{"length_days", c.window_length_days}, {"shift_days", c.shift_days}};
    j["discovery"] = {{"lag_days", c.lag_days},
                      {"min_correlation", c.min_correlation},
                      {"min_overlap", c.min_overlap},
                      {"use_absolute", c.use_absolute}};
    j["cleaning"] = {{"enabled", c.cleaning.enabled},
                     {"candidate_budget", c.cleaning.candidate_budget},
                     {"add_threshold", c.cleaning.add_threshold},
                     {"remove_threshold", c.cleaning.remove_threshold}};
    const auto& e = c.embedding;
    j["embedding"] = {{"latent_dim", e.latent_dim},
                      {"epochs", e.epochs},
                      {"learning_rate", e.learning_rate},
                      {"kl_weight", e.kl_weight},
                      {"ortho_weight", e.ortho_weight},
                      {"negative_ratio", e.negative_ratio},
                      {"negative_mass", e.negative_mass},
                      {"popular_user_count", e.popular_user_count},
                      {"popular_assertion_count", e.popular_assertion_count}};
    j["entities"] = {{"influencer_count", c.entities.influencer_count},
                     {"domain_count", c.entities.domain_count},
                     {"min_community_size", c.entities.min_community_size},
                     {"max_iters", c.entities.max_iters},
                     {"event_types", c.entities.event_types}};
    j["seed"] = c.seed;
    j["store"] = c.store;
    return j;
}

namespace detail {

// Reads j[key] into out when present, naming the dotted field on error.
template <typename T>
void read_field(const nlohmann::json& j, const char* key, const std::string& path, T& out) {
    if (!j.contains(key)) return;
    const auto& v = j.at(key);
    const std::string field = path.empty() ? key : path + "." + key;
    try {
        if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean()) throw ConfigError(field, "expected a boolean");
            out = v.get<bool>();
        } else if constexpr (std::is_integral_v<T>) {
            if (!v.is_number_integer()) throw ConfigError(field, "expected an integer");
            if (std::is_unsigned_v<T> && !v.is_number_unsigned()) throw ConfigError(field, "must be nonnegative");
            out = v.get<T>();
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!v.is_number()) throw ConfigError(field, "expected a number");
            out = v.get<T>();
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!v.is_string()) throw ConfigError(field, "expected a string");
            out = v.get<std::string>();
        } else {
            if (!v.is_array()) throw ConfigError(field, "expected an array of strings");
            out.clear();
            for (const auto& x : v) {
                if (!x.is_string()) throw ConfigError(field, "expected an array of strings");
                out.push_back(x.get<std::string>());
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(field, e.what());
    }
}

inline void check_keys(const nlohmann::json& j, const std::string& path, std::initializer_list<const char*> keys) {
    if (!j.is_object()) throw ConfigError(path.empty() ? "config" : path, "expected an object");
    for (const auto& [k, v] : j.items()) {
        bool ok = false;
        for (const char* known : keys) ok = ok || k == known;
        if (!ok) throw ConfigError(path.empty() ? k : path + "." + k, "unknown field");
    }
}

}  // namespace detail

// Applies the fields present in j on top of c.
inline void apply_json(PipelineConfig& c, const nlohmann::json& j) {
    using detail::check_keys;
    using detail::read_field;
    check_keys(j, "", {"input", "date_range", "windows", "discovery", "cleaning", "embedding", "entities", "seed",
                       "store"});
    if (j.contains("input")) {
        const auto& s = j["input"];
        check_keys(s, "input", {"posts", "events", "batch_size"});
        read_field(s, "posts", "input", c.posts_path);
        read_field(s, "events", "input", c.events_path);
        read_field(s, "batch_size", "input", c.batch_size);
    }
    if (j.contains("date_range")) {
        const auto& s = j["date_range"];
        if (s.is_null()) {
            c.date_range.reset();
        } else {
            check_keys(s, "date_range", {"first", "last"});
            std::string first, last;
            read_field(s, "first", "date_range", first);
            read_field(s, "last", "date_range", last);
            auto f = parse_date(first);
            auto l = parse_date(last);
            if (!f) throw ConfigError("date_range.first", "expected YYYY-MM-DD");
            if (!l) throw ConfigError("date_range.last", "expected YYYY-MM-DD");
            c.date_range = DateRange{*f, *l};
        }
    }
    if (j.contains("windows")) {
        const auto& s = j["windows"];
        check_keys(s, "windows", {"length_days", "shift_days"});
        read_field(s, "length_days", "windows", c.window_length_days);
        read_field(s, "shift_days", "windows", c.shift_days);
    }
    if (j.contains("discovery")) {
        const auto& s = j["discovery"];
        check_keys(s, "discovery", {"lag_days", "min_correlation", "min_overlap", "use_absolute"});
        read_field(s, "lag_days", "discovery", c.lag_days);
        read_field(s, "min_correlation", "discovery", c.min_correlation);
        read_field(s, "min_overlap", "discovery", c.min_overlap);
        read_field(s, "use_absolute", "discovery", c.use_absolute);
    }
    if (j.contains("cleaning")) {
        const auto& s = j["cleaning"];
        check_keys(s, "cleaning", {"enabled", "candidate_budget", "add_threshold", "remove_threshold"});
        read_field(s, "enabled", "cleaning", c.cleaning.enabled);
        read_field(s, "candidate_budget", "cleaning", c.cleaning.candidate_budget);
        read_field(s, "add_threshold", "cleaning", c.cleaning.add_threshold);
        read_field(s, "remove_threshold", "cleaning", c.cleaning.remove_threshold);
    }
    if (j.contains("embedding")) {
        const auto& s = j["embedding"];
        auto& e = c.embedding;
        check_keys(s, "embedding", {"latent_dim", "epochs", "learning_rate", "kl_weight", "ortho_weight",
                                    "negative_ratio", "negative_mass", "popular_user_count",
                                    "popular_assertion_count"});
        read_field(s, "latent_dim", "embedding", e.latent_dim);
        read_field(s, "epochs", "embedding", e.epochs);
        read_field(s, "learning_rate", "embedding", e.learning_rate);
        read_field(s, "kl_weight", "embedding", e.kl_weight);
        read_field(s, "ortho_weight", "embedding", e.ortho_weight);
        read_field(s, "negative_ratio", "embedding", e.negative_ratio);
        read_field(s, "negative_mass", "embedding", e.negative_mass);
        read_field(s, "popular_user_count", "embedding", e.popular_user_count);
        read_field(s, "popular_assertion_count", "embedding", e.popular_assertion_count);
    }
    if (j.contains("entities")) {
        const auto& s = j["entities"];
        check_keys(s, "entities", {"influencer_count", "domain_count", "min_community_size", "max_iters",
                                   "event_types"});
        read_field(s, "influencer_count", "entities", c.entities.influencer_count);
        read_field(s, "domain_count", "entities", c.entities.domain_count);
        read_field(s, "min_community_size", "entities", c.entities.min_community_size);
        read_field(s, "max_iters", "entities", c.entities.max_iters);
        read_field(s, "event_types", "entities", c.entities.event_types);
    }
    read_field(j, "seed", "", c.seed);
    read_field(j, "store", "", c.store);
}

inline PipelineConfig config_from_json(const nlohmann::json& j) {
    PipelineConfig c;
    apply_json(c, j);
    return c;
}

// "a.b.c=value": value is parsed as JSON when it parses, else taken as a
// string. Returns a JSON patch with just that path set.
inline nlohmann::json parse_override(std::string_view assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos || eq == 0)
        throw ConfigError("--set", "expected key=value, got '" + std::string(assignment) + "'");
    const std::string key(assignment.substr(0, eq));
    const std::string raw(assignment.substr(eq + 1));
    nlohmann::json value = nlohmann::json::parse(raw, nullptr, false);
    if (value.is_discarded()) value = raw;

    nlohmann::json patch = nlohmann::json::object();
    nlohmann::json* node = &patch;
    std::size_t start = 0;
    while (true) {
        const auto dot = key.find('.', start);
        const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (part.empty()) throw ConfigError(key, "empty path component");
        if (dot == std::string::npos) {
            (*node)[part] = value;
            break;
        }
        node = &(*node)[part];
        start = dot + 1;
    }
    return patch;
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    auto j = nlohmann::json::parse(ss.str(), nullptr, false);
    if (j.is_discarded()) throw ConfigError("config", "file " + path.string() + " is not valid JSON");
    return j;
}

struct ConfigSources {
    std::optional<std::filesystem::path> file;
    std::optional<std::string> preset;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
};

// Relative input and store paths in a file resolve against the file's
// directory.
inline PipelineConfig resolve_config(const ConfigSources& src) {
    PipelineConfig c;
    if (src.file) {
        apply_json(c, read_json_file(*src.file));
        const auto base = src.file->parent_path();
        auto fix = [&](std::string& p) {
            if (!p.empty() && std::filesystem::path(p).is_relative()) p = (base / p).lexically_normal().string();
        };
        fix(c.posts_path);
        fix(c.events_path);
        fix(c.store);
    }
    if (src.preset) apply_json(c, preset_json(*src.preset));
    for (const auto& o : src.overrides) apply_json(c, parse_override(o));
    if (src.seed) c.seed = *src.seed;
    c.validate();
    return c;
}

}  // namespace influence
