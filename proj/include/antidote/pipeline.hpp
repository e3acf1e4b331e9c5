#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "antidote/assessor.hpp"
#include "antidote/correction.hpp"
#include "antidote/corpus.hpp"
#include "antidote/dpo.hpp"
#include "antidote/gateway.hpp"
#include "antidote/querygen.hpp"
#include "antidote/scene.hpp"

namespace antidote::pipeline {

namespace fs = std::filesystem;

struct BenchConfig {
    std::size_t n_cpq = 500;
    std::size_t n_tpq = 500;
    std::optional<fs::path> responses;  // {id, response} records; otherwise the policy answers
};

struct ToyTrainConfig {
    dpo::DpoConfig dpo;
    std::size_t max_len = 8;
    std::optional<fs::path> token_map;  // JSON object word -> id; derived from the dataset when absent
};

/// Every knob of a run. Relative paths in the config file resolve against the
/// file's directory.
struct RunConfig {
    std::uint64_t seed = 0;
    fs::path workdir = "work";
    fs::path input_captions;
    std::optional<fs::path> templates_dir;
    corpus::DedupConfig dedup;
    bool recaption = true;
    scene::SceneConfig scene;
    assessor::AssessorConfig assessor;
    querygen::QueryGenConfig querygen;
    double sim_threshold = 0.9;
    correction::CompositionConfig composition;
    ToyTrainConfig train;
    BenchConfig bench;
    std::map<std::string, gateway::BackendEndpoint> endpoints;  // textgen imagegen detect embed judge policy

    /// Throws ConfigError for unknown keys, bad values or a missing seed.
    static RunConfig from_json(const json& j, const fs::path& base_dir = {});
    static RunConfig load(const fs::path& path);

    // ANTIDOTE_ENDPOINT_<NAME>_URL / _TOKEN.
    void apply_env_overrides();
    void validate() const;
    json to_json() const;
};

const std::vector<std::string>& stage_names();
const std::vector<std::string>& endpoint_names();

struct StageSummary {
    std::string stage;
    bool skipped = false;  // already complete, nothing ran
    json summary;
};

/// Runs one stage. Completed stages whose inputs are unchanged are no-ops
/// unless force is set. Throws StageOrderError when a prerequisite stage has
/// not completed.
StageSummary run_stage(const std::string& stage, const RunConfig& cfg, bool force = false);

std::vector<StageSummary> run_all(const RunConfig& cfg, bool force = false);

fs::path manifest_path(const RunConfig& cfg);
// sha256 of the manifest file.
std::string manifest_digest(const RunConfig& cfg);

}  // namespace antidote::pipeline
