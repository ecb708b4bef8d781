// influence-tomograph: run pipeline stages or serve stored runs.
//
// exit status: 0 ok, 1 invalid configuration or usage, 2 runtime failure

#include <cstdlib>
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "influence/config.hpp"
#include "influence/pipeline.hpp"
#include "influence/server.hpp"

namespace {

int fail(int code, const std::string& what) {
    std::cerr << "error: " << what << '\n';
    return code;
}

}  // namespace

int main(int argc, char** argv) {
    using namespace influence;

    CLI::App app{"Influence pathway discovery over social media posts and event counts"};
    app.fallthrough();
    app.require_subcommand(1);

    std::string config_path, preset, bind = "127.0.0.1:8080";
    std::vector<std::string> sets;
    std::size_t jobs = std::max(1u, std::thread::hardware_concurrency());
    std::optional<std::uint64_t> seed;

    app.add_option("--config", config_path, "pipeline configuration (JSON)");
    app.add_option("--set", sets, "override a config field, e.g. --set discovery.min_correlation=0.5")
        ->take_all()
        ->allow_extra_args(false);
    app.add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);
    app.add_option("--seed", seed, "random seed (overrides the config)");
    app.add_option("--preset", preset, "french-election | philippine | russophobia");

    std::vector<std::pair<CLI::App*, Stage>> stage_cmds;
    for (auto s : all_stages)
        stage_cmds.push_back({app.add_subcommand(std::string(to_string(s)), "run the " + std::string(to_string(s)) +
                                                                                " stage (upstream must be cached)"),
                              s});
    auto* all = app.add_subcommand("all", "run every stage, reusing cached ones");
    auto* serve_cmd = app.add_subcommand("serve", "serve stored runs over HTTP (/api/v1)");
    serve_cmd->add_option("--bind", bind, "listen address host:port");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        ConfigSources src;
        if (!config_path.empty()) src.file = config_path;
        if (!preset.empty()) src.preset = preset;
        src.overrides = sets;
        src.seed = seed;

        if (serve_cmd->parsed()) {
            std::filesystem::path store;
            if (const char* env = std::getenv("INFLUENCE_STORE_DIR"); env && *env) {
                store = env;
            } else {
                store = resolve_config(src).store;
            }
            return serve(store, parse_bind(bind), std::cout) ? 0 : fail(2, "could not listen on " + bind);
        }

        const PipelineConfig cfg = resolve_config(src);
        Pipeline pipeline(cfg, jobs, &std::cout);
        if (all->parsed()) {
            pipeline.run(Stage::Discover, true);
            return 0;
        }
        for (auto [cmd, stage] : stage_cmds)
            if (cmd->parsed()) {
                pipeline.run(stage, false);
                return 0;
            }
        return fail(1, "no command");
    } catch (const ConfigError& e) {
        return fail(1, e.what());
    } catch (const MissingArtifactError& e) {
        return fail(2, e.what());
    } catch (const std::exception& e) {
        return fail(2, e.what());
    }
}
