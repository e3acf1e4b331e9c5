#include "antidote/gateway.hpp"

#include <algorithm>
#include <cmath>
#include <thread>
#include <tuple>

#include "antidote/error.hpp"
#include "antidote/hash.hpp"

namespace antidote::gateway {

namespace {

constexpr std::string_view kRoleNames[] = {"textgen", "imagegen", "detect", "embed", "judge"};

void require(bool cond, Role role, const std::string& what) {
    if (!cond) throw ContractError(std::string(to_string(role)) + ": " + what);
}

void require_fields(Role role, const json& body, std::initializer_list<std::string_view> allowed) {
    for (const auto& item : body.items()) {
        bool known = std::find(allowed.begin(), allowed.end(), item.key()) != allowed.end();
        require(known, role, "unexpected request field '" + item.key() + "'");
    }
}

bool is_unit(const json& v) {
    return v.is_number() && v.get<double>() >= 0.0 && v.get<double>() <= 1.0;
}

}  // namespace

std::string_view to_string(Role role) { return kRoleNames[static_cast<int>(role)]; }

Role role_from_string(std::string_view name) {
    for (int i = 0; i < 5; ++i) {
        if (kRoleNames[i] == name) return static_cast<Role>(i);
    }
    throw ConfigError("unknown backend role '" + std::string(name) + "'");
}

std::string route(Role role) { return "/v1/" + std::string(to_string(role)); }

void BackendEndpoint::validate() const {
    if (base_url.empty()) throw ConfigError("endpoint base_url is empty");
    if (parallelism_budget < 1) throw ConfigError("parallelism_budget must be >= 1");
    if (timeout.count() <= 0) throw ConfigError("timeout must be positive");
}

json BackendEndpoint::to_json() const {
    return json{{"role", to_string(role)},
                {"base_url", base_url},
                {"timeout_ms", timeout.count()},
                {"max_retries", max_retries},
                {"parallelism_budget", parallelism_budget}};
}

BackendEndpoint BackendEndpoint::from_json(const json& j) {
    BackendEndpoint ep;
    try {
        ep.role = role_from_string(j.at("role").get<std::string>());
        ep.base_url = j.value("base_url", ep.base_url);
        ep.timeout = std::chrono::milliseconds(j.value("timeout_ms", ep.timeout.count()));
        const auto retries = j.value("max_retries", static_cast<std::int64_t>(ep.max_retries));
        const auto budget =
            j.value("parallelism_budget", static_cast<std::int64_t>(ep.parallelism_budget));
        if (retries < 0) throw ConfigError("max_retries must be >= 0");
        if (budget < 1) throw ConfigError("parallelism_budget must be >= 1");
        ep.max_retries = static_cast<std::size_t>(retries);
        ep.parallelism_budget = static_cast<std::size_t>(budget);
        ep.bearer_token = j.value("bearer_token", std::string{});
    } catch (const json::exception& e) {
        throw ConfigError(std::string("invalid endpoint: ") + e.what());
    }
    ep.validate();
    return ep;
}

void validate_request(Role role, const json& req) {
    require(req.is_object(), role, "request body must be an object");
    switch (role) {
        case Role::textgen:
        case Role::judge:
            require_fields(role, req, {"task", "prompt", "image_ref", "vars"});
            require(req.contains("prompt") && req["prompt"].is_string(), role,
                    "'prompt' must be a string");
            require(!req.contains("task") || req["task"].is_string(), role, "'task' must be a string");
            require(!req.contains("image_ref") || req["image_ref"].is_string(), role,
                    "'image_ref' must be a string");
            require(!req.contains("vars") || req["vars"].is_object(), role,
                    "'vars' must be an object");
            break;
        case Role::imagegen:
            require_fields(role, req, {"prompt", "negative_prompt", "seed", "size"});
            require(req.contains("prompt") && req["prompt"].is_string(), role,
                    "'prompt' must be a string");
            require(req.contains("negative_prompt") && req["negative_prompt"].is_string(), role,
                    "'negative_prompt' must be a string");
            require(req.contains("seed") && req["seed"].is_number_integer(), role,
                    "'seed' must be an integer");
            require(req.contains("size") && req["size"].is_number_integer() &&
                        req["size"].get<std::int64_t>() > 0,
                    role, "'size' must be a positive integer");
            break;
        case Role::detect:
            require_fields(role, req, {"image_ref", "label"});
            require(req.contains("image_ref") && req["image_ref"].is_string(), role,
                    "'image_ref' must be a string");
            require(req.contains("label") && req["label"].is_string() &&
                        !req["label"].get<std::string>().empty(),
                    role, "'label' must be a non-empty string");
            break;
        case Role::embed:
            require_fields(role, req, {"texts"});
            require(req.contains("texts") && req["texts"].is_array() && !req["texts"].empty(), role,
                    "'texts' must be a non-empty array");
            for (const auto& t : req["texts"]) require(t.is_string(), role, "'texts' entries must be strings");
            break;
    }
}

void validate_response(Role role, const json& req, const json& resp) {
    require(resp.is_object(), role, "response body must be an object");
    switch (role) {
        case Role::textgen:
        case Role::judge:
            require(resp.contains("text") && resp["text"].is_string(), role,
                    "response missing string field 'text'");
            break;
        case Role::imagegen:
            require(resp.contains("image_ref") && resp["image_ref"].is_string() &&
                        !resp["image_ref"].get<std::string>().empty(),
                    role, "response missing non-empty 'image_ref'");
            require(!resp.contains("image_b64") || resp["image_b64"].is_string(), role,
                    "'image_b64' must be a string");
            break;
        case Role::detect: {
            require(resp.contains("max_confidence") && is_unit(resp["max_confidence"]), role,
                    "'max_confidence' must be a number in [0, 1]");
            require(resp.contains("boxes") && resp["boxes"].is_array(), role,
                    "response missing array 'boxes'");
            for (const auto& box : resp["boxes"]) {
                require(box.is_array() && box.size() == 4 &&
                            std::all_of(box.begin(), box.end(), is_unit),
                        role, "each box must be [x0, y0, x1, y1] normalized to [0, 1]");
                require(box[0].get<double>() <= box[2].get<double>() &&
                            box[1].get<double>() <= box[3].get<double>(),
                        role, "box corners out of order");
            }
            break;
        }
        case Role::embed: {
            require(resp.contains("vectors") && resp["vectors"].is_array(), role,
                    "response missing array 'vectors'");
            const auto& vecs = resp["vectors"];
            require(vecs.size() == req.at("texts").size(), role,
                    "expected " + std::to_string(req.at("texts").size()) + " vectors, got " +
                        std::to_string(vecs.size()));
            std::size_t dim = 0;
            for (const auto& v : vecs) {
                require(v.is_array() && !v.empty(), role, "each vector must be a non-empty array");
                if (dim == 0) dim = v.size();
                require(v.size() == dim, role, "ragged vector lengths (dimensional consistency)");
                double norm = 0.0;
                for (const auto& x : v) {
                    require(x.is_number() && std::isfinite(x.get<double>()), role,
                            "vector entries must be finite numbers");
                    norm += x.get<double>() * x.get<double>();
                }
                require(norm > 0.0, role, "zero vector cannot be normalized");
            }
            break;
        }
    }
}

std::string fingerprint(const json& body) { return hash::sha256_hex(body.dump()).substr(0, 16); }

json JournalEntry::to_json() const {
    return json{{"stage", stage},   {"endpoint", endpoint}, {"fingerprint", fingerprint},
                {"attempt", attempt}, {"ok", ok},           {"detail", detail}};
}

void RunJournal::set_stage(std::string stage) {
    std::lock_guard lock(mutex_);
    stage_ = std::move(stage);
}

void RunJournal::append(JournalEntry entry) {
    std::lock_guard lock(mutex_);
    if (entry.stage.empty()) entry.stage = stage_;
    entries_.push_back(std::move(entry));
}

std::vector<JournalEntry> RunJournal::entries() const {
    std::lock_guard lock(mutex_);
    return entries_;
}

std::vector<JournalEntry> RunJournal::take_stage(const std::string& stage) {
    std::lock_guard lock(mutex_);
    std::vector<JournalEntry> taken;
    std::vector<JournalEntry> rest;
    for (auto& e : entries_) (e.stage == stage ? taken : rest).push_back(std::move(e));
    entries_ = std::move(rest);
    return taken;
}

json RunJournal::to_json(std::vector<JournalEntry> entries) {
    std::sort(entries.begin(), entries.end(), [](const JournalEntry& a, const JournalEntry& b) {
        return std::tie(a.stage, a.endpoint, a.fingerprint, a.attempt, a.ok, a.detail) <
               std::tie(b.stage, b.endpoint, b.fingerprint, b.attempt, b.ok, b.detail);
    });
    json out = json::array();
    for (const auto& e : entries) out.push_back(e.to_json());
    return out;
}

std::chrono::duration<double> backoff_delay(const RetryPolicy& policy, std::size_t attempt,
                                            std::uint64_t jitter_key) {
    const double scale = std::pow(policy.multiplier, static_cast<double>(attempt - 1));
    const double jitter = 0.5 + 0.5 * hash::unit_interval(hash::mix(jitter_key, attempt));
    return policy.base * scale * jitter;
}

Client::Client(std::string name, BackendEndpoint endpoint, std::shared_ptr<Transport> transport,
               std::shared_ptr<RunJournal> journal, Sleeper sleeper, RetryPolicy policy)
    : name_(std::move(name)),
      endpoint_(std::move(endpoint)),
      transport_(std::move(transport)),
      journal_(std::move(journal)),
      sleeper_(std::move(sleeper)),
      policy_(policy),
      gate_(std::make_unique<std::counting_semaphore<>>(
          static_cast<std::ptrdiff_t>(std::max<std::size_t>(1, endpoint_.parallelism_budget)))) {
    endpoint_.validate();
    if (!transport_) throw ConfigError("endpoint '" + name_ + "' has no transport");
    if (!sleeper_) {
        sleeper_ = [](std::chrono::duration<double> d) { std::this_thread::sleep_for(d); };
    }
}

json Client::call(const json& request) {
    validate_request(endpoint_.role, request);
    const std::string fp = fingerprint(request);
    const std::size_t max_attempts = endpoint_.max_retries + 1;
    std::string last_error;
    for (std::size_t attempt = 1; attempt <= max_attempts; ++attempt) {
        if (attempt > 1) sleeper_(backoff_delay(policy_, attempt - 1, hash::fnv1a64(fp)));
        json response;
        try {
            gate_->acquire();
            struct Release {
                std::counting_semaphore<>& g;
                ~Release() { g.release(); }
            } release{*gate_};
            response = transport_->invoke(endpoint_.role, request);
        } catch (const TransportError& e) {
            last_error = e.what();
            if (journal_) journal_->append({"", name_, fp, attempt, false, last_error});
            continue;
        }
        try {
            validate_response(endpoint_.role, request, response);
        } catch (const ContractError& e) {
            if (journal_) journal_->append({"", name_, fp, attempt, false, e.what()});
            throw;
        }
        if (journal_) {
            journal_->append({"", name_, fp, attempt, true, hash::sha256_hex(response.dump()).substr(0, 16)});
        }
        return response;
    }
    throw BackendError(std::string(to_string(endpoint_.role)), max_attempts, last_error);
}

bool ConformanceReport::passed() const {
    return !probes.empty() &&
           std::all_of(probes.begin(), probes.end(), [](const ProbeResult& p) { return p.passed; });
}

json ConformanceReport::to_json() const {
    json j{{"role", to_string(role)}, {"passed", passed()}, {"probes", json::array()}};
    for (const auto& p : probes) {
        j["probes"].push_back({{"probe", p.probe}, {"passed", p.passed}, {"message", p.message}});
    }
    return j;
}

namespace {

std::vector<std::pair<std::string, json>> probes_for(Role role) {
    switch (role) {
        case Role::textgen:
            return {{"minimal_prompt", {{"prompt", "Reply with the single word OK."}}},
                    {"task_and_vars",
                     {{"task", "probe"},
                      {"prompt", "Rewrite this caption: a dog on grass"},
                      {"vars", {{"caption", "a dog on grass"}}}}},
                    {"with_image",
                     {{"task", "probe"}, {"prompt", "Describe the image."}, {"image_ref", "probe://blank"}}}};
        case Role::judge:
            return {{"verdict_prompt",
                     {{"task", "P3-judge"},
                      {"prompt", "Answer YES or NO: is the sky blue?"},
                      {"vars", {{"label", "negative"}, {"response", "The sky is blue."}}}}}};
        case Role::imagegen:
            return {{"prompt_and_negative",
                     {{"prompt", "a speedboat on open water"},
                      {"negative_prompt", "bridge"},
                      {"seed", 1},
                      {"size", 64}}},
                    {"empty_negative",
                     {{"prompt", "a dog on grass"}, {"negative_prompt", ""}, {"seed", 2}, {"size", 64}}}};
        case Role::detect:
            return {{"blank_image_absent_label", {{"image_ref", "probe://blank"}, {"label", "giraffe"}}}};
        case Role::embed:
            return {{"single_text", {{"texts", json::array({"a dog"})}}},
                    {"three_texts_equal_dims",
                     {{"texts", {"a dog on grass", "a boat", "a red car parked near a tree"}}}}};
    }
    return {};
}

}  // namespace

ConformanceReport conformance_suite(Role role, Transport& transport) {
    ConformanceReport report;
    report.role = role;
    for (const auto& [name, request] : probes_for(role)) {
        ProbeResult result{name, false, ""};
        try {
            validate_request(role, request);
            const json response = transport.invoke(role, request);
            validate_response(role, request, response);
            if (role == Role::detect && response["max_confidence"].get<double>() >= kDefaultDetectionThreshold) {
                throw ContractError("detect: absent label on a blank image reported as detected");
            }
            result.passed = true;
            result.message = "ok";
        } catch (const ContractError& e) {
            result.message = std::string("ContractError: ") + e.what();
        } catch (const std::exception& e) {
            result.message = e.what();
        }
        report.probes.push_back(std::move(result));
    }
    return report;
}

}  // namespace antidote::gateway
