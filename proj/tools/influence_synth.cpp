// influence-synth: write a seeded synthetic corpus (posts.jsonl, events.csv)
// and a matching config.json into a directory.

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "influence/config.hpp"
#include "influence/ingest.hpp"
#include "influence/synthetic.hpp"

int main(int argc, char** argv) {
    using namespace influence;
    CLI::App app{"Synthetic corpus generator"};
    std::string out_dir = "synthetic";
    std::string start = "2022-03-01";
    synth::CorpusSpec spec;
    app.add_option("--out", out_dir, "output directory");
    app.add_option("--users", spec.users);
    app.add_option("--posts", spec.posts);
    app.add_option("--communities", spec.communities);
    app.add_option("--days", spec.days);
    app.add_option("--start", start, "first day (YYYY-MM-DD)");
    app.add_option("--seed", spec.seed);
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        auto d = parse_date(start);
        if (!d) throw ConfigError("--start", "expected YYYY-MM-DD");
        spec.start = *d;
        spec.event_types = default_event_types();
        const auto corpus = synth::generate_corpus(spec);

        namespace fs = std::filesystem;
        fs::create_directories(out_dir);
        {
            std::ofstream out(fs::path(out_dir) / "posts.jsonl", std::ios::binary);
            write_posts(out, corpus.posts);
        }
        {
            std::ofstream out(fs::path(out_dir) / "events.csv", std::ios::binary);
            write_events(out, corpus.events);
        }
        PipelineConfig cfg;
        cfg.posts_path = "posts.jsonl";
        cfg.events_path = "events.csv";
        cfg.entities.event_types = spec.event_types;
        cfg.store = "store";
        auto j = config_to_json(cfg);
        {
            std::ofstream out(fs::path(out_dir) / "config.json", std::ios::binary);
            out << j.dump(2) << '\n';
        }
        std::cout << "wrote " << corpus.posts.size() << " posts, " << corpus.events.size() << " event rows to "
                  << out_dir << '\n';
        return 0;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
}
