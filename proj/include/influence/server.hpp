#pragma once

// HTTP front for ApiService. Every GET is forwarded with its raw target;
// other methods answer 405.

#include <filesystem>
#include <ostream>
#include <string>

#include <httplib.h>

#include "influence/api.hpp"
#include "influence/error.hpp"

namespace influence {

struct BindAddress {
    std::string host = "127.0.0.1";
    int port = 8080;
};

// "host:port", ":port" or "port".
inline BindAddress parse_bind(const std::string& s) {
    BindAddress b;
    const auto colon = s.rfind(':');
    std::string port = colon == std::string::npos ? s : s.substr(colon + 1);
    if (colon != std::string::npos && colon > 0) b.host = s.substr(0, colon);
    try {
        std::size_t used = 0;
        b.port = std::stoi(port, &used);
        if (used != port.size() || b.port < 0 || b.port > 65535) throw std::invalid_argument("port");
    } catch (const std::exception&) {
        throw ConfigError("--bind", "expected host:port, got '" + s + "'");
    }
    return b;
}

inline void install_routes(httplib::Server& srv, const ApiService& api) {
    auto forward = [&api](const httplib::Request& req, httplib::Response& res) {
        const auto r = api.handle(req.method, req.target);
        res.status = r.status;
        res.set_content(r.body, r.content_type);
    };
    srv.Get(R"(/api/v1/.*)", forward);
    srv.Post(R"(/.*)", forward);
    srv.Put(R"(/.*)", forward);
    srv.Patch(R"(/.*)", forward);
    srv.Delete(R"(/.*)", forward);
}

// Blocks until the server stops.
inline bool serve(const std::filesystem::path& store, const BindAddress& bind, std::ostream& log) {
    ApiService api(store);
    httplib::Server srv;
    install_routes(srv, api);
    log << "serving " << store.string() << " on http://" << bind.host << ':' << bind.port << "/api/v1/runs\n";
    log.flush();
    return srv.listen(bind.host, bind.port);
}

}  // namespace influence
