#pragma once

// File-per-artifact run store.
//
//   <root>/runs/<run_id>/<artifact>...
//   <root>/runs/<run_id>/manifest.json      written last; a run without it
//                                           does not exist for readers
//
// Needs libcrypto for SHA-256.

#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "influence/error.hpp"
#include "influence/timeutil.hpp"

namespace influence {

namespace fs = std::filesystem;

inline std::string sha256_hex(std::string_view bytes) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
        throw IoError("sha256 failed");
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[md[i] >> 4];
        out += hex[md[i] & 15];
    }
    return out;
}

inline std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IoError("cannot read " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw IoError("read failed: " + p.string());
    return ss.str();
}

inline void write_file(const fs::path& p, std::string_view bytes) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + p.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw IoError("write failed: " + p.string());
}

// Write to a sibling temp file, then rename over the target.
inline void write_file_atomic(const fs::path& p, std::string_view bytes) {
    fs::path tmp = p;
    tmp += ".tmp";
    write_file(tmp, bytes);
    std::error_code ec;
    fs::rename(tmp, p, ec);
    if (ec) throw IoError("rename failed for " + p.string() + ": " + ec.message());
}

struct RunManifest {
    std::string run_id;
    std::string created_at;
    std::string config_digest;
    std::map<std::string, std::string> checksums;  // artifact name -> sha256
    nlohmann::json parameters = nlohmann::json::object();
    nlohmann::json config = nlohmann::json::object();
    nlohmann::json stages = nlohmann::json::object();

    nlohmann::json to_json() const {
        return {{"run_id", run_id},         {"created_at", created_at}, {"config_digest", config_digest},
                {"checksums", checksums},   {"parameters", parameters}, {"config", config},
                {"stages", stages}};
    }

    static RunManifest from_json(const nlohmann::json& j) {
        try {
            RunManifest m;
            m.run_id = j.at("run_id").get<std::string>();
            m.created_at = j.at("created_at").get<std::string>();
            m.config_digest = j.at("config_digest").get<std::string>();
            m.checksums = j.at("checksums").get<std::map<std::string, std::string>>();
            m.parameters = j.at("parameters");
            m.config = j.at("config");
            m.stages = j.at("stages");
            return m;
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(std::string("manifest: ") + e.what());
        }
    }
};

struct SaveRequest {
    std::map<std::string, std::string> artifacts;  // name -> bytes
    nlohmann::json config = nlohmann::json::object();
    nlohmann::json parameters = nlohmann::json::object();
    nlohmann::json stages = nlohmann::json::object();
    // Called after each artifact is written; tests throw from it.
    std::function<void(const std::string&)> after_artifact;
};

inline bool valid_artifact_name(const std::string& name) {
    if (name.empty() || name == "manifest.json" || name[0] == '.') return false;
    return std::all_of(name.begin(), name.end(),
                       [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-' || c == '_'; });
}

class RunStore {
public:
    explicit RunStore(fs::path root) : root_(std::move(root)) {}

    const fs::path& root() const { return root_; }
    fs::path runs_dir() const { return root_ / "runs"; }
    fs::path run_dir(const std::string& id) const { return runs_dir() / id; }

    RunManifest save_run(const SaveRequest& req) const {
        for (const auto& [name, bytes] : req.artifacts)
            if (!valid_artifact_name(name)) throw ConfigError("artifact", "invalid artifact name '" + name + "'");
        fs::create_directories(runs_dir());
        RunManifest m;
        m.created_at = format_instant(std::chrono::time_point_cast<std::chrono::seconds>(std::chrono::system_clock::now()));
        m.config_digest = sha256_hex(req.config.dump());
        m.config = req.config;
        m.parameters = req.parameters;
        m.stages = req.stages;
        m.run_id = reserve_id(m.created_at);
        const fs::path dir = run_dir(m.run_id);
        for (const auto& [name, bytes] : req.artifacts) {
            write_file(dir / name, bytes);
            m.checksums[name] = sha256_hex(bytes);
            if (req.after_artifact) req.after_artifact(name);
        }
        write_file_atomic(dir / "manifest.json", m.to_json().dump(2) + "\n");
        return m;
    }

    // Committed runs, oldest first.
    std::vector<RunManifest> list_runs() const {
        std::vector<RunManifest> out;
        std::error_code ec;
        if (!fs::is_directory(runs_dir(), ec)) return out;
        for (const auto& entry : fs::directory_iterator(runs_dir())) {
            if (!entry.is_directory()) continue;
            const auto mp = entry.path() / "manifest.json";
            if (!fs::exists(mp)) continue;
            auto j = nlohmann::json::parse(read_file(mp), nullptr, false);
            if (j.is_discarded()) continue;
            try {
                out.push_back(RunManifest::from_json(j));
            } catch (const FormatError&) {
            }
        }
        std::sort(out.begin(), out.end(), [](const RunManifest& a, const RunManifest& b) {
            return std::tie(a.created_at, a.run_id) < std::tie(b.created_at, b.run_id);
        });
        return out;
    }

    std::optional<RunManifest> manifest(const std::string& run_id) const {
        if (!valid_artifact_name(run_id)) return std::nullopt;
        const auto mp = run_dir(run_id) / "manifest.json";
        if (!fs::exists(mp)) return std::nullopt;
        auto j = nlohmann::json::parse(read_file(mp), nullptr, false);
        if (j.is_discarded()) throw FormatError("manifest of " + run_id + " is not JSON");
        return RunManifest::from_json(j);
    }

    // Artifact bytes, checked against the manifest checksum.
    std::string read_artifact(const RunManifest& m, const std::string& name) const {
        auto it = m.checksums.find(name);
        if (it == m.checksums.end()) throw MissingArtifactError(name, "run " + m.run_id + " has no artifact " + name);
        std::string bytes = read_file(run_dir(m.run_id) / name);
        if (sha256_hex(bytes) != it->second)
            throw FormatError("artifact " + name + " of run " + m.run_id + " does not match its checksum");
        return bytes;
    }

    std::map<std::string, std::string> load_run(const RunManifest& m) const {
        std::map<std::string, std::string> out;
        for (const auto& [name, sum] : m.checksums) out[name] = read_artifact(m, name);
        return out;
    }

private:
    fs::path root_;

    std::string reserve_id(const std::string& created_at) const {
        std::string stamp;
        for (char c : created_at)
            if (std::isalnum(static_cast<unsigned char>(c))) stamp += c;
        std::random_device rd;
        for (int attempt = 0; attempt < 64; ++attempt) {
            char suffix[9];
            std::snprintf(suffix, sizeof suffix, "%08x", static_cast<unsigned>(rd()));
            std::string id = "run-" + stamp + "-" + suffix;
            std::error_code ec;
            if (fs::create_directory(run_dir(id), ec)) return id;
            if (ec) throw IoError("cannot create run directory: " + ec.message());
        }
        throw IoError("could not allocate a unique run id");
    }
};

}  // namespace influence
