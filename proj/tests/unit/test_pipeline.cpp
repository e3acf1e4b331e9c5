#include <doctest.h>

#include <cstdlib>

#include "antidote/error.hpp"
#include "antidote/hash.hpp"
#include "antidote/jsonl.hpp"
#include "antidote/pipeline.hpp"
#include "support.hpp"

using namespace antidote;
using namespace antidote::pipeline;

namespace {

RunConfig fixture_config(const fs::path& workdir) {
    auto cfg = RunConfig::load(testsupport::data_dir() / "run_config.json");
    cfg.workdir = workdir;
    return cfg;
}

json base_json() {
    return json{{"seed", 1}, {"input_captions", "caps.jsonl"}};
}

}  // namespace

TEST_SUITE("pipeline") {
    TEST_CASE("config requires an integer seed and rejects unknown keys") {
        json j = base_json();
        j.erase("seed");
        CHECK_THROWS_AS(RunConfig::from_json(j), ConfigError);
        j["seed"] = "7";
        CHECK_THROWS_AS(RunConfig::from_json(j), ConfigError);
        json k = base_json();
        k["sede"] = 1;
        CHECK_THROWS_AS(RunConfig::from_json(k), ConfigError);
        json m = base_json();
        m["dpo"] = {{"beta", 0.1}, {"lr", 0.5}};
        CHECK_THROWS_AS(RunConfig::from_json(m), ConfigError);
    }

    TEST_CASE("config defaults and path resolution") {
        const auto cfg = RunConfig::from_json(base_json(), "/base");
        CHECK(cfg.input_captions == fs::path("/base/caps.jsonl"));
        CHECK(cfg.workdir == fs::path("work"));  // default is not a path from the file
        CHECK(cfg.composition.seed == 1);
        CHECK(cfg.endpoints.size() == endpoint_names().size());
        CHECK(cfg.endpoints.at("policy").role == gateway::Role::textgen);
        CHECK(cfg.endpoints.at("embed").base_url == "stub://synthetic");
        CHECK(cfg.train.dpo.beta == 0.1);
    }

    TEST_CASE("invalid values are config errors") {
        json j = base_json();
        j["correction"] = {{"sim_threshold", 1.5}};
        CHECK_THROWS_AS(RunConfig::from_json(j), ConfigError);
        json k = base_json();
        k["endpoints"] = {{"textgen", {{"parallelism_budget", 0}}}};
        CHECK_THROWS_AS(RunConfig::from_json(k), ConfigError);
        CHECK_THROWS_AS(RunConfig::load("/nonexistent/config.json"), ConfigError);
    }

    TEST_CASE("environment overrides endpoint URL and token") {
        ::setenv("ANTIDOTE_ENDPOINT_JUDGE_URL", "http://127.0.0.1:9999", 1);
        ::setenv("ANTIDOTE_ENDPOINT_JUDGE_TOKEN", "secret", 1);
        auto cfg = RunConfig::from_json(base_json());
        cfg.apply_env_overrides();
        ::unsetenv("ANTIDOTE_ENDPOINT_JUDGE_URL");
        ::unsetenv("ANTIDOTE_ENDPOINT_JUDGE_TOKEN");
        CHECK(cfg.endpoints.at("judge").base_url == "http://127.0.0.1:9999");
        CHECK(cfg.endpoints.at("judge").bearer_token == "secret");
        CHECK(cfg.endpoints.at("textgen").base_url == "stub://synthetic");
    }

    TEST_CASE("stages refuse to run before their prerequisites") {
        testsupport::TempDir dir("order");
        const auto cfg = fixture_config(dir.path() / "w");
        CHECK_THROWS_AS(run_stage("assess", cfg), StageOrderError);
        CHECK_THROWS_AS(run_stage("nope", cfg), ConfigError);
        const auto pool = run_stage("pool", cfg);
        CHECK_FALSE(pool.skipped);
        CHECK(fs::exists(dir.path() / "w" / "pool" / "captions.jsonl"));
        CHECK_THROWS_AS(run_stage("assess", cfg), StageOrderError);
        CHECK(run_stage("pool", cfg).skipped);
        CHECK_FALSE(run_stage("pool", cfg, true).skipped);
    }

    TEST_CASE("full run is idempotent and every output is digested") {
        testsupport::TempDir dir("idem");
        const auto cfg = fixture_config(dir.path() / "w");
        const auto first = run_all(cfg);
        CHECK(first.size() == stage_names().size());
        const auto digest = manifest_digest(cfg);
        for (const auto& s : run_all(cfg)) CHECK(s.skipped);
        CHECK(manifest_digest(cfg) == digest);

        const auto manifest = jsonl::read_document(manifest_path(cfg));
        for (const auto& name : stage_names()) {
            REQUIRE(manifest["stages"].contains(name));
            for (const auto& [rel, sha] : manifest["stages"][name]["outputs"].items()) {
                CHECK(hash::file_sha256_hex(cfg.workdir / rel) == sha.get<std::string>());
            }
        }
    }

    TEST_CASE("tampering with an output makes the stage rerun") {
        testsupport::TempDir dir("tamper");
        const auto cfg = fixture_config(dir.path() / "w");
        run_stage("pool", cfg);
        jsonl::write_text(cfg.workdir / "pool" / "captions.jsonl", "");
        CHECK_FALSE(run_stage("pool", cfg).skipped);
        CHECK(run_stage("pool", cfg).skipped);
    }
}
