#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "antidote/assessor.hpp"
#include "antidote/jsonl.hpp"
#include "antidote/querygen.hpp"

namespace antidote::gateway {
class Client;
}

namespace antidote::correction {

using querygen::QueryKind;
using querygen::TaskQuery;

struct ResponsePair {
    std::string query_id;
    std::string triplet_id;
    QueryKind kind = QueryKind::CPQ;
    std::string image_ref;
    std::string prompt_text;  // bare task text, no prior
    std::string original;     // rejected candidate
    std::string corrected;    // chosen candidate
    std::optional<double> similarity;

    json to_json() const;
    static ResponsePair from_json(const json& j);
};

/// One record of the preference dataset. Field set is frozen:
/// {prompt_text, image_ref, chosen, rejected, kind, triplet_id}.
struct PreferencePair {
    std::string prompt_text;
    std::string image_ref;
    std::string chosen;
    std::string rejected;
    QueryKind kind = QueryKind::CPQ;
    std::string triplet_id;

    json to_json() const;
    static PreferencePair from_json(const json& j);
};

struct CompositionConfig {
    std::map<QueryKind, std::size_t> counts{{QueryKind::CPQ, 5000},
                                            {QueryKind::TPQ, 5000},
                                            {QueryKind::Existence, 2000},
                                            {QueryKind::Description, 8000}};
    std::uint64_t seed = 0;

    json to_json() const;
};

// Question text with the factual prior prepended.
std::string build_factual_prompt(const TaskQuery& q);

/// One policy request. The vars carry the query context so scripted and
/// synthetic policies can answer without seeing the image.
std::string policy_answer(gateway::Client& policy, QueryKind kind, const std::string& target,
                          const std::string& question, const std::string& prompt,
                          const assessor::AssessedSample& sample, bool with_prior);

/// Asks the policy for an answer without, then with, the factual prior (in
/// that order). Throws DataError when either answer is empty.
ResponsePair collect_pair(const TaskQuery& q, const assessor::AssessedSample& sample, gateway::Client& policy);

struct FilterReport {
    std::size_t total = 0;
    std::size_t kept = 0;
    std::size_t dropped_degenerate = 0;  // chosen == rejected after trimming
    std::size_t dropped_similar = 0;     // cosine >= threshold
    double threshold = 0.0;
    double discard_fraction = 0.0;       // (total - kept) / total

    json to_json() const;
};

struct FilterResult {
    std::vector<ResponsePair> kept;  // input order, similarity filled in
    FilterReport report;
};

FilterResult filter_pairs(const std::vector<ResponsePair>& pairs, gateway::Client& embed, double sim_threshold);

/// Seeded sampling without replacement per kind, then one seeded shuffle of
/// the union. Throws InsufficientData naming every short kind.
std::vector<PreferencePair> compose_dataset(const std::vector<ResponsePair>& kept, const CompositionConfig& cfg);

// True when text carries a factual-prior clause.
bool contains_prior_clause(const std::string& text);

}  // namespace antidote::correction
