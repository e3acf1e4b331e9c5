#include "antidote/dpo.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "antidote/error.hpp"
#include "antidote/random.hpp"
#include "antidote/text.hpp"

namespace antidote::dpo {

double neg_log_sigmoid(double z) {
    // log(1 + e^-z) for z >= 0; -z + log(1 + e^z) otherwise.
    if (z >= 0) return std::log1p(std::exp(-z));
    return -z + std::log1p(std::exp(z));
}

namespace {

// sigmoid(-z), the magnitude of d(-log sigmoid z)/dz.
double sigmoid_neg(double z) {
    if (z >= 0) {
        const double e = std::exp(-z);
        return e / (1.0 + e);
    }
    return 1.0 / (1.0 + std::exp(z));
}

void check_beta(double beta) {
    if (!(beta > 0.0) || !std::isfinite(beta)) throw ConfigError("beta must be a positive finite number");
}

}  // namespace

double preference_logit(const LogProbRecord& r, double beta) {
    return beta * ((r.policy_logprob_pos - r.ref_logprob_pos) - (r.policy_logprob_neg - r.ref_logprob_neg));
}

double dpo_loss(const std::vector<LogProbRecord>& batch, double beta) {
    check_beta(beta);
    if (batch.empty()) throw EmptyInput("dpo_loss of an empty batch");
    double sum = 0.0;
    for (const auto& r : batch) {
        if (!std::isfinite(r.policy_logprob_pos) || !std::isfinite(r.policy_logprob_neg) ||
            !std::isfinite(r.ref_logprob_pos) || !std::isfinite(r.ref_logprob_neg)) {
            throw DataError("log-probability record has a non-finite entry");
        }
        sum += neg_log_sigmoid(preference_logit(r, beta));
    }
    return sum / static_cast<double>(batch.size());
}

double reward(double policy_logprob, double ref_logprob, double beta) {
    check_beta(beta);
    const double r = beta * (policy_logprob - ref_logprob);
    if (!std::isfinite(r)) throw DataError("non-finite reward");
    return r;
}

double reward_margin(const LogProbRecord& r, double beta) {
    return reward(r.policy_logprob_pos, r.ref_logprob_pos, beta) - reward(r.policy_logprob_neg, r.ref_logprob_neg, beta);
}

void DpoConfig::validate() const {
    check_beta(beta);
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
}

json DpoConfig::to_json() const {
    return json{{"beta", beta}, {"learning_rate", learning_rate}, {"steps", steps}, {"seed", seed}};
}

ToyPolicy::ToyPolicy(std::size_t vocab_size, std::size_t max_len)
    : vocab_(vocab_size), max_len_(max_len), logits_(vocab_size * max_len, 0.0) {
    if (vocab_size == 0 || max_len == 0) throw ConfigError("toy policy needs vocab_size >= 1 and max_len >= 1");
}

ToyPolicy ToyPolicy::random(std::size_t vocab_size, std::size_t max_len, std::uint64_t seed, double scale) {
    ToyPolicy p(vocab_size, max_len);
    SeededRng rng(seed);
    for (double& x : p.logits_) x = rng.normal(0.0, scale);
    return p;
}

double sequence_logprob(const ToyPolicy& p, const Sequence& tokens, std::vector<double>* grad, double scale) {
    if (tokens.size() > p.max_len()) {
        throw InvalidToken("sequence of length " + std::to_string(tokens.size()) + " exceeds max_len " +
                           std::to_string(p.max_len()));
    }
    const std::size_t v = p.vocab_size();
    double total = 0.0;
    std::vector<double> probs(v);
    for (std::size_t pos = 0; pos < tokens.size(); ++pos) {
        const std::size_t tok = tokens[pos];
        if (tok >= v) throw InvalidToken("token " + std::to_string(tok) + " outside vocabulary of " + std::to_string(v));
        double mx = p.logit(pos, 0);
        for (std::size_t j = 1; j < v; ++j) mx = std::max(mx, p.logit(pos, j));
        double z = 0.0;
        for (std::size_t j = 0; j < v; ++j) z += std::exp(p.logit(pos, j) - mx);
        const double log_z = mx + std::log(z);
        total += p.logit(pos, tok) - log_z;
        if (grad) {
            for (std::size_t j = 0; j < v; ++j) {
                const double soft = std::exp(p.logit(pos, j) - log_z);
                (*grad)[pos * v + j] += scale * ((j == tok ? 1.0 : 0.0) - soft);
            }
        }
    }
    return total;
}

LogProbRecord score_pair(const ToyPolicy& policy, const ToyPolicy& ref, const TokenPair& pair) {
    return LogProbRecord{sequence_logprob(policy, pair.chosen), sequence_logprob(policy, pair.rejected),
                         sequence_logprob(ref, pair.chosen), sequence_logprob(ref, pair.rejected)};
}

double objective(const ToyPolicy& policy, const ToyPolicy& ref, const std::vector<TokenPair>& data, double beta,
                 std::vector<double>* grad) {
    check_beta(beta);
    if (data.empty()) throw EmptyInput("objective of an empty dataset");
    if (grad) grad->assign(policy.num_params(), 0.0);
    const double n = static_cast<double>(data.size());
    double sum = 0.0;
    for (const auto& pair : data) {
        const LogProbRecord r = score_pair(policy, ref, pair);
        const double z = preference_logit(r, beta);
        sum += neg_log_sigmoid(z);
        if (grad) {
            // d/dtheta of -log sigmoid(z) = -sigmoid(-z) * beta * (grad lp(chosen) - grad lp(rejected))
            const double w = -sigmoid_neg(z) * beta / n;
            sequence_logprob(policy, pair.chosen, grad, w);
            sequence_logprob(policy, pair.rejected, grad, -w);
        }
    }
    return sum / n;
}

double mean_margin(const ToyPolicy& policy, const ToyPolicy& ref, const std::vector<TokenPair>& data, double beta) {
    if (data.empty()) throw EmptyInput("mean margin of an empty dataset");
    double sum = 0.0;
    for (const auto& pair : data) sum += reward_margin(score_pair(policy, ref, pair), beta);
    return sum / static_cast<double>(data.size());
}

json TrainStep::to_json() const { return json{{"step", step}, {"loss", loss}, {"mean_margin", mean_margin}}; }

TrainResult train_toy(const std::vector<TokenPair>& data, const DpoConfig& cfg, const ToyPolicy& init) {
    cfg.validate();
    if (data.empty()) throw EmptyInput("toy training needs at least one preference pair");
    TrainResult result{init, init, {}};
    std::vector<double> grad;
    for (std::size_t step = 0;; ++step) {
        const double loss = objective(result.policy, result.reference, data, cfg.beta, &grad);
        if (!std::isfinite(loss)) throw Diverged(step);
        result.trajectory.push_back(
            TrainStep{step, loss, mean_margin(result.policy, result.reference, data, cfg.beta)});
        if (step == cfg.steps) break;
        auto& params = result.policy.params();
        for (std::size_t i = 0; i < params.size(); ++i) params[i] -= cfg.learning_rate * grad[i];
    }
    return result;
}

TrainResult train_toy(const std::vector<TokenPair>& data, const DpoConfig& cfg, std::size_t vocab_size,
                      std::size_t max_len) {
    return train_toy(data, cfg, ToyPolicy::random(vocab_size, max_len, cfg.seed));
}

Sequence tokenize(const std::string& s, const std::map<std::string, std::size_t>& vocab, std::size_t max_len) {
    Sequence out;
    for (const auto& w : text::split_words(text::normalize(s))) {
        if (out.size() == max_len) break;
        auto it = vocab.find(w);
        out.push_back(it == vocab.end() ? 0 : it->second);
    }
    return out;
}

std::map<std::string, std::size_t> build_vocab(const std::vector<std::string>& texts) {
    std::set<std::string> words;
    for (const auto& t : texts) {
        for (auto& w : text::split_words(text::normalize(t))) words.insert(std::move(w));
    }
    std::map<std::string, std::size_t> vocab;
    std::size_t id = 1;
    for (const auto& w : words) vocab[w] = id++;
    return vocab;
}

json recipe_metadata(double beta, const json& composition) {
    return json{{"beta", beta}, {"lora_r", kLoraRank}, {"lora_alpha", kLoraAlpha}, {"composition", composition}};
}

}  // namespace antidote::dpo
