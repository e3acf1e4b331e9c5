#include "antidote/http_backend.hpp"

#include <httplib.h>

#include "antidote/error.hpp"

namespace antidote::gateway {

HttpTransport::HttpTransport(BackendEndpoint endpoint) : endpoint_(std::move(endpoint)) {
    endpoint_.validate();
}

json HttpTransport::invoke(Role role, const json& request) {
    std::string base = endpoint_.base_url;
    while (!base.empty() && base.back() == '/') base.pop_back();

    httplib::Client client(base);
    const auto timeout = std::chrono::duration_cast<std::chrono::microseconds>(endpoint_.timeout);
    const auto sec = static_cast<time_t>(timeout.count() / 1000000);
    const auto usec = static_cast<time_t>(timeout.count() % 1000000);
    client.set_connection_timeout(sec, usec);
    client.set_read_timeout(sec, usec);
    client.set_write_timeout(sec, usec);

    httplib::Headers headers;
    if (!endpoint_.bearer_token.empty()) {
        headers.emplace("Authorization", "Bearer " + endpoint_.bearer_token);
    }
    auto res = client.Post(route(role), headers, request.dump(), "application/json");
    if (!res) {
        throw TransportError(base + route(role) + ": " + httplib::to_string(res.error()));
    }
    if (res->status >= 500 || res->status == 429) {
        throw TransportError(base + route(role) + ": HTTP " + std::to_string(res->status));
    }
    if (res->status != 200) {
        throw ContractError(base + route(role) + ": HTTP " + std::to_string(res->status) + " " + res->body);
    }
    try {
        return json::parse(res->body);
    } catch (const json::parse_error& e) {
        throw ContractError(base + route(role) + ": response is not JSON: " + e.what());
    }
}

void mount_routes(httplib::Server& server, std::map<Role, std::shared_ptr<Transport>> backends) {
    for (auto& [role, backend] : backends) {
        server.Post(route(role), [role = role, backend = backend](const httplib::Request& req,
                                                                 httplib::Response& res) {
            json body;
            try {
                body = json::parse(req.body);
                validate_request(role, body);
            } catch (const std::exception& e) {
                res.status = 400;
                res.set_content(json{{"error", e.what()}}.dump(), "application/json");
                return;
            }
            try {
                res.set_content(backend->invoke(role, body).dump(), "application/json");
            } catch (const TransportError& e) {
                res.status = 503;
                res.set_content(json{{"error", e.what()}}.dump(), "application/json");
            } catch (const std::exception& e) {
                res.status = 500;
                res.set_content(json{{"error", e.what()}}.dump(), "application/json");
            }
        });
    }
}

}  // namespace antidote::gateway
