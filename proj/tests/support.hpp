#pragma once

#include <unistd.h>

#include <atomic>
#include <chrono>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "antidote/gateway.hpp"
#include "antidote/stubs.hpp"

namespace testsupport {

using antidote::json;
namespace gw = antidote::gateway;

// Transport driven by a lambda; records every request it sees.
class ScriptedTransport : public gw::Transport {
public:
    using Fn = std::function<json(gw::Role, const json&)>;
    explicit ScriptedTransport(Fn fn) : fn_(std::move(fn)) {}

    json invoke(gw::Role role, const json& request) override {
        {
            std::lock_guard lock(mutex_);
            requests_.push_back(request);
        }
        return fn_(role, request);
    }

    std::vector<json> requests() const {
        std::lock_guard lock(mutex_);
        return requests_;
    }

private:
    Fn fn_;
    mutable std::mutex mutex_;
    std::vector<json> requests_;
};

inline gw::BackendEndpoint endpoint(gw::Role role, std::size_t max_retries = 3, std::size_t budget = 4) {
    gw::BackendEndpoint ep;
    ep.role = role;
    ep.max_retries = max_retries;
    ep.parallelism_budget = budget;
    return ep;
}

inline void no_sleep(std::chrono::duration<double>) {}

inline std::unique_ptr<gw::Client> client(gw::Role role, std::shared_ptr<gw::Transport> transport,
                                          std::shared_ptr<gw::RunJournal> journal = nullptr,
                                          std::size_t max_retries = 3, std::size_t budget = 4) {
    return std::make_unique<gw::Client>(std::string(gw::to_string(role)), endpoint(role, max_retries, budget),
                                        std::move(transport), std::move(journal), no_sleep);
}

inline std::shared_ptr<gw::StubBackend> stub(gw::Role role, gw::StubDefault behavior = gw::StubDefault::synthetic,
                                             gw::ImageResolver resolver = {}) {
    gw::StubScript s;
    s.role = role;
    s.behavior = behavior;
    return std::make_shared<gw::StubBackend>(s, std::move(resolver));
}

inline json text_reply(const std::string& s) { return json{{"text", s}}; }

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("antidote-test-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

inline std::filesystem::path data_dir() { return std::filesystem::path(ANTIDOTE_TEST_DATA_DIR); }

}  // namespace testsupport
