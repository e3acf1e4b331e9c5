#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <semaphore>
#include <string>
#include <string_view>
#include <vector>

#include "antidote/jsonl.hpp"

namespace antidote::gateway {

enum class Role { textgen, imagegen, detect, embed, judge };

// Default open-set detector confidence cutoff.
inline constexpr double kDefaultDetectionThreshold = 0.35;

std::string_view to_string(Role role);
Role role_from_string(std::string_view name);
std::string route(Role role);  // "/v1/<role>"

struct BackendEndpoint {
    Role role = Role::textgen;
    std::string base_url = "stub://synthetic";
    std::chrono::milliseconds timeout{30000};
    std::size_t max_retries = 3;
    std::size_t parallelism_budget = 4;
    std::string bearer_token;

    void validate() const;
    json to_json() const;
    static BackendEndpoint from_json(const json& j);
};

// Schema checks; both throw ContractError naming the offending field.
void validate_request(Role role, const json& request);
void validate_response(Role role, const json& request, const json& response);

/// Stable request fingerprint: sha256 over the key-sorted JSON dump, 16 hex chars.
std::string fingerprint(const json& body);

/// Moves one request body to a backend and returns its response body.
/// Throws TransportError for retryable failures and ContractError for
/// malformed replies.
class Transport {
public:
    virtual ~Transport() = default;
    virtual json invoke(Role role, const json& request) = 0;
};

struct JournalEntry {
    std::string stage;
    std::string endpoint;
    std::string fingerprint;
    std::size_t attempt = 0;
    bool ok = false;
    std::string detail;  // response digest on success, error text otherwise

    json to_json() const;
};

/// Append-only record of every backend attempt. Serialized in sorted order so
/// the manifest does not depend on thread scheduling.
class RunJournal {
public:
    void set_stage(std::string stage);
    void append(JournalEntry entry);
    std::vector<JournalEntry> entries() const;
    std::vector<JournalEntry> take_stage(const std::string& stage);
    static json to_json(std::vector<JournalEntry> entries);

private:
    mutable std::mutex mutex_;
    std::string stage_;
    std::vector<JournalEntry> entries_;
};

struct RetryPolicy {
    std::chrono::duration<double> base{0.5};
    double multiplier = 2.0;
};

using Sleeper = std::function<void(std::chrono::duration<double>)>;

/// Delay before retry number `attempt` (1-based): base * multiplier^(attempt-1),
/// scaled by a deterministic jitter factor in [0.5, 1).
std::chrono::duration<double> backoff_delay(const RetryPolicy& policy, std::size_t attempt,
                                            std::uint64_t jitter_key);

/// Retrying, journaling front end for one endpoint. Safe for concurrent use;
/// at most parallelism_budget calls are in flight at once.
class Client {
public:
    Client(std::string name, BackendEndpoint endpoint, std::shared_ptr<Transport> transport,
           std::shared_ptr<RunJournal> journal = nullptr, Sleeper sleeper = {},
           RetryPolicy policy = {});

    json call(const json& request);

    const std::string& name() const { return name_; }
    const BackendEndpoint& endpoint() const { return endpoint_; }
    Transport& transport() { return *transport_; }

private:
    std::string name_;
    BackendEndpoint endpoint_;
    std::shared_ptr<Transport> transport_;
    std::shared_ptr<RunJournal> journal_;
    Sleeper sleeper_;
    RetryPolicy policy_;
    std::unique_ptr<std::counting_semaphore<>> gate_;
};

struct ProbeResult {
    std::string probe;
    bool passed = false;
    std::string message;
};

struct ConformanceReport {
    Role role = Role::textgen;
    std::vector<ProbeResult> probes;

    bool passed() const;
    json to_json() const;
};

/// Exercises the role's request/response schema with probe payloads. Failures
/// are recorded as report entries, never thrown.
ConformanceReport conformance_suite(Role role, Transport& transport);

}  // namespace antidote::gateway
