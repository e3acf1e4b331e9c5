#pragma once

#include <map>
#include <memory>
#include <string>

#include "antidote/gateway.hpp"

namespace httplib {
class Server;
}

namespace antidote::gateway {

/// JSON over HTTP POST to <base_url>/v1/<role>. Connection failures and 5xx
/// replies are retryable (TransportError); 4xx replies and non-JSON bodies
/// are ContractError. A bearer token, when set, goes in Authorization.
class HttpTransport : public Transport {
public:
    explicit HttpTransport(BackendEndpoint endpoint);

    json invoke(Role role, const json& request) override;

private:
    BackendEndpoint endpoint_;
};

/// Mounts one POST route per role on `server`, each forwarding to its
/// transport. Requests are schema-checked before dispatch (400 on violation);
/// a TransportError from the backend maps to 503.
void mount_routes(httplib::Server& server, std::map<Role, std::shared_ptr<Transport>> backends);

}  // namespace antidote::gateway
