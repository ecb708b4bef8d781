#pragma once

// Stage orchestration with a checksum-keyed cache.
//
//   <store>/cache/<stage>/<key>/<artifacts>, stage.json (written last)
//
// A stage key hashes the stage name, the configuration it reads and the
// checksums of the upstream artifacts it consumes, so equal keys mean equal
// outputs. Every stage parses its inputs from upstream artifact bytes.

#include <array>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "influence/cleaning.hpp"
#include "influence/config.hpp"
#include "influence/discovery.hpp"
#include "influence/embedding.hpp"
#include "influence/entities.hpp"
#include "influence/graph.hpp"
#include "influence/graph_io.hpp"
#include "influence/ingest.hpp"
#include "influence/store.hpp"
#include "influence/vgae.hpp"

namespace influence {

enum class Stage : std::uint8_t { Ingest, Graph, Clean, Embed, Entities, Discover };

inline constexpr std::array<Stage, 6> all_stages = {Stage::Ingest, Stage::Graph,    Stage::Clean,
                                                    Stage::Embed,  Stage::Entities, Stage::Discover};

inline std::string_view to_string(Stage s) {
    switch (s) {
        case Stage::Ingest: return "ingest";
        case Stage::Graph: return "graph";
        case Stage::Clean: return "clean";
        case Stage::Embed: return "embed";
        case Stage::Entities: return "entities";
        case Stage::Discover: return "discover";
    }
    return "?";
}

inline std::optional<Stage> stage_from(std::string_view s) {
    for (auto st : all_stages)
        if (to_string(st) == s) return st;
    return std::nullopt;
}

inline nlohmann::json report_to_json(const TrainReport& r) {
    return {{"epochs", r.epochs},
            {"nodes", r.nodes},
            {"positive_edges", r.positive_edges},
            {"initial_loss", r.initial_loss},
            {"final_loss", r.final_loss},
            {"initial_recon", r.initial_recon},
            {"final_recon", r.final_recon},
            {"initial_kl", r.initial_kl},
            {"final_kl", r.final_kl},
            {"initial_ortho", r.initial_ortho},
            {"final_ortho", r.final_ortho},
            {"trajectory", r.trajectory}};
}

struct StageRecord {
    Stage stage = Stage::Ingest;
    std::string key;
    std::map<std::string, std::string> artifacts;  // name -> sha256
    nlohmann::json summary = nlohmann::json::object();
    bool cached = false;

    nlohmann::json to_json() const {
        return {{"stage", to_string(stage)}, {"key", key}, {"artifacts", artifacts}, {"summary", summary}};
    }
};

struct PipelineResult {
    std::vector<StageRecord> stages;
    std::optional<RunManifest> run;
    std::size_t computed = 0;  // stages actually executed
};

// Windows over the graph's date range.
inline std::vector<TimeWindow> pipeline_windows(const BipartiteGraph& g, const PipelineConfig& cfg) {
    if (!g.date_range()) return {};
    return make_windows(*g.date_range(), cfg.window_length_days, cfg.shift_days);
}

class Pipeline {
public:
    Pipeline(PipelineConfig cfg, std::size_t jobs = 1, std::ostream* log = nullptr)
        : cfg_(std::move(cfg)), jobs_(std::max<std::size_t>(1, jobs)), log_(log), store_(cfg_.store) {
        cfg_.validate();
    }

    const PipelineConfig& config() const { return cfg_; }
    fs::path cache_root() const { return fs::path(cfg_.store) / "cache"; }

    // Runs `target`. With run_upstream, missing upstream stages are computed;
    // otherwise they must already be cached. Writes a run snapshot holding
    // every artifact up to target.
    PipelineResult run(Stage target, bool run_upstream) {
        PipelineResult result;
        records_.clear();
        for (auto s : all_stages) {
            const std::string key = stage_key(s);
            auto rec = lookup(s, key);
            if (rec) {
                rec->cached = true;
            } else if (s == target || run_upstream) {
                rec = compute(s, key);
                ++result.computed;
            } else {
                throw MissingArtifactError(std::string(to_string(s)),
                                           "missing upstream artifact from stage '" + std::string(to_string(s)) +
                                               "'; run `influence-tomograph " + std::string(to_string(s)) +
                                               "` first (or `all`)");
            }
            records_[s] = *rec;
            if (log_) print_summary(*log_, *rec);
            result.stages.push_back(*rec);
            if (s == target) break;
        }
        result.run = snapshot(result.stages);
        if (log_) *log_ << "run: " << result.run->run_id << '\n';
        return result;
    }

    nlohmann::json parameters() const {
        nlohmann::json p;
        p["window_length_days"] = cfg_.window_length_days;
        p["shift_days"] = cfg_.shift_days;
        p["lag_days"] = cfg_.lag_days;
        p["max_lag_windows"] = cfg_.max_lag_windows();
        p["lag_conversion"] = "max_lag_windows = floor(lag_days / shift_days)";
        p["min_correlation"] = cfg_.min_correlation;
        p["min_overlap"] = cfg_.min_overlap;
        p["use_absolute"] = cfg_.use_absolute;
        p["embedding"] = config_to_json(cfg_)["embedding"];
        p["influencer_count"] = cfg_.entities.influencer_count;
        p["domain_count"] = cfg_.entities.domain_count;
        p["event_types"] = cfg_.entities.event_types;
        p["seed"] = cfg_.seed;
        return p;
    }

private:
    PipelineConfig cfg_;
    std::size_t jobs_;
    std::ostream* log_;
    RunStore store_;
    std::map<Stage, StageRecord> records_;

    fs::path stage_dir(Stage s, const std::string& key) const { return cache_root() / to_string(s) / key; }

    std::string upstream_sum(Stage s, const std::string& name) const {
        return records_.at(s).artifacts.at(name);
    }

    std::string artifact(Stage s, const std::string& name) const {
        const auto& rec = records_.at(s);
        std::string bytes = read_file(stage_dir(s, rec.key) / name);
        if (sha256_hex(bytes) != rec.artifacts.at(name))
            throw FormatError("cached artifact " + name + " of stage " + std::string(to_string(s)) + " is corrupt");
        return bytes;
    }

    std::string stage_key(Stage s) const {
        nlohmann::json k;
        k["stage"] = to_string(s);
        k["version"] = 1;
        const auto c = config_to_json(cfg_);
        switch (s) {
            case Stage::Ingest: {
                if (cfg_.posts_path.empty()) throw ConfigError("input.posts", "required");
                k["posts"] = sha256_hex(read_file(cfg_.posts_path));
                k["events"] = cfg_.events_path.empty() ? "" : sha256_hex(read_file(cfg_.events_path));
                auto types = cfg_.entities.event_types;
                std::sort(types.begin(), types.end());
                k["event_types"] = types;
                break;
            }
            case Stage::Graph:
                k["posts"] = upstream_sum(Stage::Ingest, "posts.jsonl");
                k["date_range"] = c["date_range"];
                break;
            case Stage::Clean:
                k["graph"] = upstream_sum(Stage::Graph, "graph.tsv");
                k["cleaning"] = c["cleaning"];
                break;
            case Stage::Embed:
                k["graph"] = upstream_sum(Stage::Clean, "graph-clean.tsv");
                k["windows"] = c["windows"];
                k["embedding"] = c["embedding"];
                k["seed"] = cfg_.seed;
                break;
            case Stage::Entities:
                k["graph"] = upstream_sum(Stage::Clean, "graph-clean.tsv");
                k["embeddings"] = upstream_sum(Stage::Embed, "embeddings.tsv");
                k["events"] = upstream_sum(Stage::Ingest, "events.csv");
                k["entities"] = c["entities"];
                k["seed"] = cfg_.seed;
                break;
            case Stage::Discover:
                k["series"] = upstream_sum(Stage::Entities, "series.tsv");
                k["discovery"] = {{"max_lag", cfg_.max_lag_windows()},
                                  {"min_correlation", cfg_.min_correlation},
                                  {"min_overlap", cfg_.min_overlap},
                                  {"use_absolute", cfg_.use_absolute}};
                break;
        }
        return sha256_hex(k.dump());
    }

    std::optional<StageRecord> lookup(Stage s, const std::string& key) const {
        const auto path = stage_dir(s, key) / "stage.json";
        std::error_code ec;
        if (!fs::exists(path, ec)) return std::nullopt;
        auto j = nlohmann::json::parse(read_file(path), nullptr, false);
        if (j.is_discarded()) return std::nullopt;
        StageRecord rec;
        rec.stage = s;
        rec.key = key;
        try {
            rec.artifacts = j.at("artifacts").get<std::map<std::string, std::string>>();
            rec.summary = j.at("summary");
        } catch (const nlohmann::json::exception&) {
            return std::nullopt;
        }
        for (const auto& [name, sum] : rec.artifacts) {
            if (!fs::exists(stage_dir(s, key) / name, ec)) return std::nullopt;
        }
        return rec;
    }

    StageRecord commit(Stage s, const std::string& key, const std::map<std::string, std::string>& files,
                       nlohmann::json summary) const {
        const auto dir = stage_dir(s, key);
        fs::create_directories(dir);
        StageRecord rec;
        rec.stage = s;
        rec.key = key;
        rec.summary = std::move(summary);
        for (const auto& [name, bytes] : files) {
            write_file_atomic(dir / name, bytes);
            rec.artifacts[name] = sha256_hex(bytes);
        }
        write_file_atomic(dir / "stage.json", rec.to_json().dump(2) + "\n");
        return rec;
    }

    StageRecord compute(Stage s, const std::string& key) {
        switch (s) {
            case Stage::Ingest: return run_ingest(key);
            case Stage::Graph: return run_graph(key);
            case Stage::Clean: return run_clean(key);
            case Stage::Embed: return run_embed(key);
            case Stage::Entities: return run_entities(key);
            case Stage::Discover: return run_discover(key);
        }
        throw ConfigError("stage", "unknown");
    }

    StageRecord run_ingest(const std::string& key) {
        std::ostringstream posts_out, rejects_out;
        rejects_out << "source\tline\tfield\treason\n";
        std::size_t n_posts = 0, n_rejects = 0;
        {
            auto in = open_input(cfg_.posts_path);
            for_each_post_batch(in, cfg_.batch_size,
                                [&](std::span<const Post> posts, std::span<const RejectReason> rejects) {
                                    write_posts(posts_out, posts);
                                    n_posts += posts.size();
                                    for (const auto& r : rejects)
                                        rejects_out << "posts\t" << r.line << '\t' << textio::escape(r.field) << '\t'
                                                    << textio::escape(r.reason) << '\n';
                                    n_rejects += rejects.size();
                                });
        }
        EventBatch events;
        if (!cfg_.events_path.empty() && !cfg_.entities.event_types.empty()) {
            auto in = open_input(cfg_.events_path);
            const std::set<std::string> allowed(cfg_.entities.event_types.begin(), cfg_.entities.event_types.end());
            events = parse_events(in, allowed);
            for (const auto& r : events.rejects)
                rejects_out << "events\t" << r.line << '\t' << textio::escape(r.field) << '\t'
                            << textio::escape(r.reason) << '\n';
        }
        std::ostringstream events_out;
        write_events(events_out, events.records);
        return commit(Stage::Ingest, key,
                      {{"posts.jsonl", posts_out.str()}, {"events.csv", events_out.str()},
                       {"rejects.tsv", rejects_out.str()}},
                      {{"posts", n_posts},
                       {"post_rejects", n_rejects},
                       {"event_records", events.records.size()},
                       {"event_rejects", events.rejects.size()}});
    }

    std::vector<Post> load_posts() const {
        std::istringstream in(artifact(Stage::Ingest, "posts.jsonl"));
        auto batch = parse_posts(in);
        if (!batch.rejects.empty()) throw FormatError("cached posts artifact has invalid records");
        return std::move(batch.posts);
    }

    std::vector<EventRecord> load_events() const {
        if (cfg_.entities.event_types.empty()) return {};
        std::istringstream in(artifact(Stage::Ingest, "events.csv"));
        const std::set<std::string> allowed(cfg_.entities.event_types.begin(), cfg_.entities.event_types.end());
        return parse_events(in, allowed).records;
    }

    StageRecord run_graph(const std::string& key) {
        const auto posts = load_posts();
        const BipartiteGraph g = build_graph(posts, cfg_.date_range);
        return commit(Stage::Graph, key, {{"graph.tsv", graph_to_string(g)}},
                      {{"users", g.users().size()},
                       {"assertions", g.assertions().size()},
                       {"edges", g.edges().size()}});
    }

    StageRecord run_clean(const std::string& key) {
        const BipartiteGraph g = graph_from_string(artifact(Stage::Graph, "graph.tsv"));
        std::ostringstream scores_out;
        BipartiteGraph cleaned = g;
        std::size_t n_scores = 0;
        if (cfg_.cleaning.enabled && !g.edges().empty()) {
            auto scores = score_links(g, cfg_.cleaning.candidate_budget);
            cleaned = apply_cleaning(g, scores, cfg_.cleaning.add_threshold, cfg_.cleaning.remove_threshold);
            write_scores(scores_out, scores);
            n_scores = scores.size();
        } else {
            write_scores(scores_out, {});
        }
        std::size_t imputed = 0;
        for (const auto& e : cleaned.edges()) imputed += e.kind == EdgeKind::Imputed;
        return commit(Stage::Clean, key,
                      {{"graph-clean.tsv", graph_to_string(cleaned)}, {"scores.tsv", scores_out.str()}},
                      {{"scored_pairs", n_scores},
                       {"edges_before", g.edges().size()},
                       {"edges_after", cleaned.edges().size()},
                       {"imputed", imputed}});
    }

    StageRecord run_embed(const std::string& key) {
        const BipartiteGraph g = graph_from_string(artifact(Stage::Clean, "graph-clean.tsv"));
        const auto windows = pipeline_windows(g, cfg_);
        const EmbeddingSeries series = build_embedding_series(g, windows, cfg_.embed_config());
        std::ostringstream out;
        write_embedding_series(out, series);
        nlohmann::json reports = nlohmann::json::array();
        double last_loss = 0;
        std::size_t trained = 0;
        for (const auto& w : series.windows) {
            nlohmann::json r = {{"window", w.window.index},
                                {"start", format_date(w.window.start)},
                                {"permutation", w.permutation},
                                {"align_warning", w.align_warning}};
            r["report"] = w.report ? report_to_json(*w.report) : nlohmann::json(nullptr);
            if (w.report) {
                last_loss = w.report->final_loss;
                ++trained;
            }
            reports.push_back(std::move(r));
        }
        return commit(Stage::Embed, key, {{"embeddings.tsv", out.str()}, {"training.json", reports.dump(1) + "\n"}},
                      {{"windows", series.windows.size()}, {"trained_windows", trained}, {"last_final_loss", last_loss}});
    }

    StageRecord run_entities(const std::string& key) {
        const BipartiteGraph g = graph_from_string(artifact(Stage::Clean, "graph-clean.tsv"));
        EmbeddingSeries series;
        {
            std::istringstream in(artifact(Stage::Embed, "embeddings.tsv"));
            series = read_embedding_series(in);
        }
        const auto events = load_events();
        const Partition part = detect_communities(user_projection(g), cfg_.seed, cfg_.entities.max_iters,
                                                  cfg_.entities.min_community_size);
        const EntitySet set = build_entities(g, part, cfg_.entities);
        SeriesFile sf;
        for (const auto& w : series.windows) sf.windows.push_back(w.window);
        sf.series = all_entity_series(set, series, events);
        std::ostringstream eout, sout;
        write_entities(eout, set);
        write_series(sout, sf);
        std::map<std::string, std::size_t> kinds;
        for (const auto& e : set.entities) ++kinds[std::string(to_string(e.kind))];
        return commit(Stage::Entities, key, {{"entities.tsv", eout.str()}, {"series.tsv", sout.str()}},
                      {{"entities", set.entities.size()},
                       {"by_kind", kinds},
                       {"communities_detected", part.communities},
                       {"unclustered", set.unclustered.size()}});
    }

    StageRecord run_discover(const std::string& key) {
        SeriesFile sf;
        {
            std::istringstream in(artifact(Stage::Entities, "series.tsv"));
            sf = read_series(in);
        }
        InfluenceGraph ig;
        if (sf.series.size() >= 2) {
            ig = discover(sf.series, cfg_.discovery(), jobs_);
        } else {
            ig.config = cfg_.discovery();
            ig.windows = sf.windows.size();
            for (const auto& s : sf.series) ig.entities.push_back(s.entity_id);
        }
        std::ostringstream dot;
        write_dot(dot, ig);
        return commit(Stage::Discover, key,
                      {{"influence.json", influence_to_json(ig).dump() + "\n"}, {"influence.dot", dot.str()}},
                      {{"entities", ig.entities.size()}, {"pairs", ig.pairs.size()}, {"edges", ig.edges.size()}});
    }

    RunManifest snapshot(const std::vector<StageRecord>& stages) const {
        SaveRequest req;
        req.config = config_to_json(cfg_);
        req.parameters = parameters();
        for (auto s : all_stages) req.stages[std::string(to_string(s))] = {{"status", "absent"}};
        for (const auto& rec : stages) {
            req.stages[std::string(to_string(rec.stage))] = {{"status", rec.cached ? "cached" : "computed"},
                                                             {"key", rec.key},
                                                             {"artifacts", rec.artifacts},
                                                             {"summary", rec.summary}};
            for (const auto& [name, sum] : rec.artifacts) req.artifacts[name] = artifact(rec.stage, name);
        }
        return store_.save_run(req);
    }

    static void print_summary(std::ostream& out, const StageRecord& rec) {
        out << to_string(rec.stage) << ": " << (rec.cached ? "cached" : "computed");
        for (const auto& [k, v] : rec.summary.items()) out << ' ' << k << '=' << v.dump();
        out << '\n';
    }
};

}  // namespace influence
