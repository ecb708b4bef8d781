#pragma once

// Small synthetic corpus written to a scratch directory, plus a pipeline
// config pointing at it.

#include <filesystem>
#include <fstream>
#include <string>

#include <unistd.h>

#include "influence/config.hpp"
#include "influence/ingest.hpp"
#include "influence/synthetic.hpp"

namespace fixture {

namespace fs = std::filesystem;

inline fs::path scratch(const std::string& tag) {
    auto p = fs::temp_directory_path() / ("influence-" + tag + "-" + std::to_string(::getpid()));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

struct CorpusDir {
    fs::path dir;
    influence::PipelineConfig config;
};

inline CorpusDir small_corpus(const std::string& tag, std::size_t users = 300, std::size_t posts = 2000,
                              int days = 30) {
    using namespace influence;
    CorpusDir c;
    c.dir = scratch(tag);
    synth::CorpusSpec spec;
    spec.users = users;
    spec.posts = posts;
    spec.days = days;
    spec.start = *parse_date("2022-03-01");
    spec.event_types = default_event_types();
    const auto corpus = synth::generate_corpus(spec);
    {
        std::ofstream out(c.dir / "posts.jsonl", std::ios::binary);
        write_posts(out, corpus.posts);
    }
    {
        std::ofstream out(c.dir / "events.csv", std::ios::binary);
        write_events(out, corpus.events);
    }
    auto& cfg = c.config;
    cfg.posts_path = (c.dir / "posts.jsonl").string();
    cfg.events_path = (c.dir / "events.csv").string();
    cfg.store = (c.dir / "store").string();
    cfg.entities.event_types = spec.event_types;
    cfg.entities.influencer_count = 5;
    cfg.entities.domain_count = 5;
    cfg.embedding.epochs = 60;
    cfg.min_overlap = 4;
    return c;
}

}  // namespace fixture
