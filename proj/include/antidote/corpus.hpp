#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "antidote/jsonl.hpp"

namespace antidote::gateway {
class Client;
}

namespace antidote::corpus {

struct Caption {
    std::string id;
    std::string raw_text;
    std::optional<std::string> rewritten_text;
    std::string source_tag;

    // Text used downstream: rewritten when available.
    const std::string& effective_text() const { return rewritten_text ? *rewritten_text : raw_text; }
};

using ShingleSet = std::set<std::string>;

/// Word k-grams of the normalized text (lowercase, punctuation stripped,
/// whitespace collapsed). Texts with fewer than k words give one shingle
/// holding the whole normalized text. Throws EmptyInput if nothing is left.
ShingleSet normalize_and_shingle(std::string_view text, std::size_t k);

struct MinHashSignature {
    std::uint64_t seed = 0;
    std::vector<std::uint64_t> values;

    std::size_t num_hashes() const { return values.size(); }
    bool operator==(const MinHashSignature&) const = default;
};

/// Seeded family of 64-bit multiply-add-shift hashes applied to the FNV-1a
/// hash of each shingle: h_i(x) = ((a_i * x + b_i) mod 2^128) >> 64 with
/// 128-bit coefficients drawn from splitmix64(seed).
class MinHasher {
public:
    MinHasher(std::size_t num_hashes, std::uint64_t seed);

    MinHashSignature sign(const ShingleSet& shingles) const;

    std::size_t num_hashes() const { return a_.size(); }
    std::uint64_t seed() const { return seed_; }

private:
    std::uint64_t seed_;
    std::vector<unsigned __int128> a_;
    std::vector<unsigned __int128> b_;
};

MinHashSignature minhash_signature(const ShingleSet& shingles, std::size_t num_hashes,
                                   std::uint64_t seed);

/// Fraction of matching positions. Throws IncompatibleSignatures when the
/// width or seed differ.
double jaccard_estimate(const MinHashSignature& a, const MinHashSignature& b);

struct DedupConfig {
    std::size_t shingle_size = 3;
    std::size_t num_hashes = 128;
    std::size_t bands = 32;
    std::size_t rows_per_band = 4;
    double threshold = 0.8;
    std::uint64_t seed = 0;

    void validate() const;
};

struct DedupReport {
    std::vector<std::string> retained_ids;            // sorted
    std::vector<std::vector<std::string>> clusters;   // each sorted; representative first
    double threshold = 0.0;
    std::size_t candidate_pairs = 0;

    json to_json() const;
};

/// MinHash + LSH near-duplicate clustering. Candidate pairs come from band
/// bucket collisions; pairs whose estimate reaches the threshold are merged
/// with union-find. The lexicographically smallest id represents a cluster.
DedupReport deduplicate(const std::vector<Caption>& captions, const DedupConfig& cfg);

struct RecaptionResult {
    std::vector<Caption> kept;
    std::vector<std::string> rejected_ids;
};

/// Sends each caption through the text-generation backend with the
/// P0-recaption template; a REJECT reply drops the caption.
RecaptionResult recaption(const std::vector<Caption>& captions, gateway::Client& textgen,
                          const std::string& prompt_template);

// Line records {id, text, source}; an optional raw_text field carries the
// original text when `text` holds a rewrite.
std::vector<Caption> read_captions(const std::filesystem::path& path);
void write_captions(const std::filesystem::path& path, const std::vector<Caption>& captions);

}  // namespace antidote::corpus
