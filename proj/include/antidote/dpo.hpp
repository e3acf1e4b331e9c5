#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "antidote/jsonl.hpp"

namespace antidote::dpo {

struct LogProbRecord {
    double policy_logprob_pos = 0.0;
    double policy_logprob_neg = 0.0;
    double ref_logprob_pos = 0.0;
    double ref_logprob_neg = 0.0;
};

// -log(sigmoid(z)) without overflow for large |z|.
double neg_log_sigmoid(double z);

// beta * ((pp - rp) - (pn - rn))
double preference_logit(const LogProbRecord& r, double beta);

// Mean of -log sigmoid(preference_logit) over the batch.
double dpo_loss(const std::vector<LogProbRecord>& batch, double beta);

double reward(double policy_logprob, double ref_logprob, double beta);
double reward_margin(const LogProbRecord& r, double beta);

struct DpoConfig {
    double beta = 0.1;
    double learning_rate = 0.5;
    std::size_t steps = 200;
    std::uint64_t seed = 0;

    void validate() const;
    json to_json() const;
};

using Sequence = std::vector<std::size_t>;

/// Position-factorized policy: token t at position i has probability
/// softmax(logits[i])[t], independent across positions.
class ToyPolicy {
public:
    ToyPolicy(std::size_t vocab_size, std::size_t max_len);  // all-zero logits
    static ToyPolicy random(std::size_t vocab_size, std::size_t max_len, std::uint64_t seed, double scale = 0.1);

    std::size_t vocab_size() const { return vocab_; }
    std::size_t max_len() const { return max_len_; }
    std::size_t num_params() const { return logits_.size(); }

    double& logit(std::size_t pos, std::size_t token) { return logits_[pos * vocab_ + token]; }
    double logit(std::size_t pos, std::size_t token) const { return logits_[pos * vocab_ + token]; }
    std::vector<double>& params() { return logits_; }
    const std::vector<double>& params() const { return logits_; }

private:
    std::size_t vocab_;
    std::size_t max_len_;
    std::vector<double> logits_;
};

/// Sum of per-position log-softmax values. When grad is given it must have
/// num_params() entries; (one-hot - softmax) * scale is added at every visited
/// position. Throws InvalidToken for out-of-range tokens or over-long input.
double sequence_logprob(const ToyPolicy& p, const Sequence& tokens, std::vector<double>* grad = nullptr,
                        double scale = 1.0);

struct TokenPair {
    Sequence chosen;
    Sequence rejected;
};

LogProbRecord score_pair(const ToyPolicy& policy, const ToyPolicy& ref, const TokenPair& pair);

/// Full-batch DPO objective against a frozen reference; fills the gradient
/// w.r.t. the policy logits when requested. Records are reduced in index order.
double objective(const ToyPolicy& policy, const ToyPolicy& ref, const std::vector<TokenPair>& data, double beta,
                 std::vector<double>* grad = nullptr);

double mean_margin(const ToyPolicy& policy, const ToyPolicy& ref, const std::vector<TokenPair>& data, double beta);

struct TrainStep {
    std::size_t step = 0;
    double loss = 0.0;
    double mean_margin = 0.0;

    json to_json() const;
};

struct TrainResult {
    ToyPolicy policy;
    ToyPolicy reference;
    std::vector<TrainStep> trajectory;  // entry s is measured after s updates
};

/// Gradient descent from `init`; the reference is a frozen copy of `init`.
/// Throws Diverged naming the first step with a non-finite loss.
TrainResult train_toy(const std::vector<TokenPair>& data, const DpoConfig& cfg, const ToyPolicy& init);
TrainResult train_toy(const std::vector<TokenPair>& data, const DpoConfig& cfg, std::size_t vocab_size,
                      std::size_t max_len);

// Whitespace/punctuation-normalized words mapped to ids (unknown -> 0),
// truncated to max_len.
Sequence tokenize(const std::string& s, const std::map<std::string, std::size_t>& vocab, std::size_t max_len);

// Vocabulary from the distinct words of `texts`, ids 1.. in lexicographic order; 0 is unknown.
std::map<std::string, std::size_t> build_vocab(const std::vector<std::string>& texts);

json recipe_metadata(double beta, const json& composition);

inline constexpr std::size_t kLoraRank = 64;
inline constexpr std::size_t kLoraAlpha = 128;

}  // namespace antidote::dpo
