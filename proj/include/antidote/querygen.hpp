#pragma once

#include <cstdint>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "antidote/assessor.hpp"
#include "antidote/jsonl.hpp"
#include "antidote/templates.hpp"

namespace antidote::gateway {
class Client;
}

namespace antidote::querygen {

enum class QueryKind { CPQ, TPQ, Existence, Description };

std::string_view to_string(QueryKind k);
QueryKind kind_from_string(std::string_view s);
inline constexpr QueryKind kAllKinds[] = {QueryKind::CPQ, QueryKind::TPQ, QueryKind::Existence,
                                          QueryKind::Description};

struct TaskQuery {
    std::string id;
    std::string triplet_id;
    QueryKind kind = QueryKind::CPQ;
    std::string text;
    std::vector<std::string> target_objects;
    std::string factual_prior;  // fact clause injected during self-correction

    json to_json() const;
    static TaskQuery from_json(const json& j);
};

double cosine(const std::vector<double>& a, const std::vector<double>& b);

struct MemoryEntry {
    std::vector<double> key;  // unit norm
    std::string caption;
    std::vector<std::string> questions;
};

/// Key-value store of processed captions and the questions generated for
/// them. Inserts take an exclusive lock, retrievals a shared one. Retrieval is
/// an exact scan: all keys with cosine >= min_sim, best k, ties broken by
/// insertion order.
class MemoryBank {
public:
    MemoryBank() = default;
    MemoryBank(MemoryBank&& other) noexcept
        : entries_(std::move(other.entries_)), by_caption_(std::move(other.by_caption_)), dim_(other.dim_) {}

    // Normalizes the key. Re-inserting a caption merges its question list.
    void insert(const std::string& caption, std::vector<double> key, const std::vector<std::string>& questions);
    std::vector<std::pair<std::size_t, double>> nearest(const std::vector<double>& key, std::size_t k,
                                                        double min_sim) const;
    std::vector<std::string> retrieve(const std::vector<double>& key, std::size_t k, double min_sim) const;

    std::size_t size() const;
    std::size_t dimension() const;
    std::vector<MemoryEntry> entries() const;

    std::vector<json> to_records() const;
    static MemoryBank from_records(const std::vector<json>& records);

private:
    mutable std::shared_mutex mutex_;
    std::vector<MemoryEntry> entries_;
    std::unordered_map<std::string, std::size_t> by_caption_;
    std::size_t dim_ = 0;
};

std::vector<double> embed_text(gateway::Client& embed, const std::string& text);

void memory_insert(MemoryBank& bank, const std::string& caption, const std::vector<std::string>& questions,
                   gateway::Client& embed);
std::vector<std::string> memory_retrieve(const MemoryBank& bank, const std::string& caption, std::size_t k,
                                         double min_sim, gateway::Client& embed);

struct QueryGenConfig {
    std::size_t retrieve_k = 5;
    double min_sim = 0.75;
    std::size_t per_kind = 1;
    std::size_t max_words = 30;
    std::uint64_t seed = 0;
};

// Empty when there is nothing to avoid.
std::string avoid_clause(const std::vector<std::string>& prior_questions);

// "there is no bridge" / "there are no boats" and the positive forms.
std::string absent_fact(const std::string& label);
std::string present_fact(const std::string& label);
std::string existence_fact(const std::string& label, bool present);
std::string description_prior(const scene::SceneTriplet& t);

// Lexical acceptance test for a generated query.
bool validate_query(QueryKind kind, const std::string& text, const std::string& target,
                    const scene::SceneTriplet& t, std::size_t max_words);

/// Retrieves similar prior questions, asks the backend for queries of one kind
/// (prompt carries the avoid-clause when there are priors), validates them
/// with one re-request on failure, and records accepted ones in the bank.
std::vector<TaskQuery> generate_queries(const assessor::AssessedSample& sample, QueryKind kind, MemoryBank& bank,
                                        gateway::Client& textgen, gateway::Client& embed,
                                        const TemplateSet& templates, const QueryGenConfig& cfg);

}  // namespace antidote::querygen
