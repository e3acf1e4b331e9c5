#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "antidote/corpus.hpp"
#include "antidote/jsonl.hpp"
#include "antidote/templates.hpp"

namespace antidote::gateway {
class Client;
}

namespace antidote::scene {

enum class TripletStatus { proposed, verified, assessed, discarded };

std::string_view to_string(TripletStatus s);
TripletStatus status_from_string(std::string_view s);

/// <caption, present objects, hallucination candidates> with its lifecycle state.
struct SceneTriplet {
    std::string id;
    std::string caption;
    std::vector<std::string> present_objects;
    std::vector<std::string> hallucination_candidates;
    TripletStatus status = TripletStatus::proposed;
    std::string discard_reason;

    json to_json() const;
    static SceneTriplet from_json(const json& j);
    bool operator==(const SceneTriplet&) const = default;
};

struct CheckResult {
    bool passed = false;
    std::string message;
    bool operator==(const CheckResult&) const = default;
};

struct ValidationReport {
    std::string triplet_id;
    std::map<std::string, CheckResult> checks;

    // pass iff every check passes
    bool passed() const;
    json to_json() const;
    bool operator==(const ValidationReport&) const = default;
};

struct SceneConfig {
    std::size_t max_objects = 5;
    std::size_t max_prompt_words = 15;
    std::size_t max_rewrite_attempts = 2;
    std::size_t max_parse_retries = 2;
};

// Lowercase, trimmed, surrounding quotes/punctuation removed, duplicates dropped
// (first occurrence kept).
std::vector<std::string> normalize_labels(const std::vector<std::string>& labels);

/// Parses `present: [a, b]` and `absent-candidates: [c, d]` (separate lines or
/// one line split by ';'). Throws ParseError when either list is missing.
std::pair<std::vector<std::string>, std::vector<std::string>> parse_triplet_reply(std::string_view reply);

/// Rewrites a caption into an image prompt. Throws CaptionRejected on the
/// REJECT sentinel and RewriteFailed when no reply passes the local checks
/// within max_rewrite_attempts.
std::string rewrite_caption(const corpus::Caption& caption, gateway::Client& textgen,
                            const TemplateSet& templates, const SceneConfig& cfg);

SceneTriplet extract_triplet(const std::string& triplet_id, const std::string& prompt_caption,
                             gateway::Client& textgen, const TemplateSet& templates,
                             const SceneConfig& cfg);

/// Local checks plus one self-reflection round. Moves a proposed triplet to
/// verified or discarded; a verified triplet is left untouched.
ValidationReport verify_triplet(SceneTriplet& triplet, gateway::Client& textgen,
                                const TemplateSet& templates, const SceneConfig& cfg);

struct SceneOutcome {
    std::string caption_id;
    std::optional<SceneTriplet> triplet;
    std::optional<ValidationReport> report;
    std::string dropped_reason;  // set when no triplet was produced
};

/// Runs rewrite -> extract -> verify for each caption, bounded by the
/// endpoint's parallelism budget. Outcomes keep input order.
std::vector<SceneOutcome> run_scene(const std::vector<corpus::Caption>& captions,
                                    gateway::Client& textgen, const TemplateSet& templates,
                                    const SceneConfig& cfg);

}  // namespace antidote::scene
