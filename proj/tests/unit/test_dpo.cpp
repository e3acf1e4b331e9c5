#include <doctest.h>

#include <boost/multiprecision/cpp_dec_float.hpp>

#include <cmath>
#include <limits>

#include "antidote/dpo.hpp"
#include "antidote/error.hpp"
#include "antidote/random.hpp"

using namespace antidote;
using namespace antidote::dpo;

namespace {

using Big = boost::multiprecision::cpp_dec_float_50;

const double kLn2 = std::log(2.0);

std::vector<TokenPair> separable(std::size_t n, std::uint64_t seed) {
    SeededRng rng(seed);
    std::vector<TokenPair> data;
    for (std::size_t i = 0; i < n; ++i) {
        TokenPair p;
        for (int k = 0; k < 4; ++k) {
            p.chosen.push_back(rng.below(4));
            p.rejected.push_back(4 + rng.below(4));
        }
        data.push_back(std::move(p));
    }
    return data;
}

}  // namespace

TEST_SUITE("dpo") {
    TEST_CASE("equal log-probs give ln 2 and zero margin") {
        std::vector<LogProbRecord> batch{{-1, -1, -1, -1}, {-3.5, -3.5, -3.5, -3.5}};
        CHECK(std::abs(dpo_loss(batch, 0.1) - kLn2) < 1e-12);
        CHECK(reward_margin(batch[0], 0.1) == 0.0);
        CHECK(reward(-2.0, -2.0, 0.1) == 0.0);
    }

    TEST_CASE("worked example against 50-digit arithmetic") {
        const LogProbRecord r{-1.0, -2.0, -1.2, -1.5};
        CHECK(preference_logit(r, 0.1) == doctest::Approx(0.07).epsilon(1e-14));
        const Big z = Big("0.1") * ((Big("-1.0") - Big("-1.2")) - (Big("-2.0") - Big("-1.5")));
        const Big oracle = log(Big(1) + exp(-z));
        const double got = dpo_loss({r}, 0.1);
        CHECK(std::abs(got - oracle.convert_to<double>()) < 1e-15);
        CHECK(std::abs(reward_margin(r, 0.1) - 0.07) < 1e-15);
    }

    TEST_CASE("stable branches at extreme logits") {
        const double lo = neg_log_sigmoid(1e4);
        CHECK(std::isfinite(lo));
        CHECK(lo >= 0.0);
        CHECK(lo < 1e-300);
        const double hi = neg_log_sigmoid(-1e4);
        CHECK(std::isfinite(hi));
        CHECK(hi == doctest::Approx(1e4));
    }

    TEST_CASE("loss(z) - loss(-z) = -z and monotone decrease") {
        double prev = std::numeric_limits<double>::infinity();
        for (double z = -30; z <= 30; z += 0.25) {
            CHECK(std::abs(neg_log_sigmoid(z) - neg_log_sigmoid(-z) + z) < 1e-12);
            const double v = neg_log_sigmoid(z);
            CHECK(v < prev);
            prev = v;
        }
    }

    TEST_CASE("margin is linear in beta") {
        const LogProbRecord r{-1.0, -2.0, -1.2, -1.5};
        for (double c : {0.5, 2.0, 4.0, 10.0}) {
            CHECK(reward_margin(r, 0.1 * c) == doctest::Approx(c * reward_margin(r, 0.1)).epsilon(1e-13));
        }
    }

    TEST_CASE("loss input validation") {
        CHECK_THROWS_AS(dpo_loss({}, 0.1), EmptyInput);
        CHECK_THROWS_AS(dpo_loss({{std::nan(""), 0, 0, 0}}, 0.1), DataError);
        CHECK_THROWS_AS(dpo_loss({{0, 0, 0, 0}}, 0.0), ConfigError);
    }

    TEST_CASE("sequence log-prob closed forms") {
        ToyPolicy uniform(4, 3);
        CHECK(sequence_logprob(uniform, {0, 3, 2}) == doctest::Approx(3 * std::log(0.25)).epsilon(1e-15));
        ToyPolicy p(2, 1);
        p.logit(0, 1) = std::log(3.0);
        CHECK(std::abs(sequence_logprob(p, {1}) - std::log(0.75)) < 1e-15);
        CHECK_THROWS_AS(sequence_logprob(p, {2}), InvalidToken);
        CHECK_THROWS_AS(sequence_logprob(p, {0, 0}), InvalidToken);
    }

    TEST_CASE("objective gradient matches central differences") {
        const double h = 1e-5;
        double worst = 0.0;
        bool zero_ok = true;
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            const auto data = separable(12, 100 + seed);
            const auto ref = ToyPolicy::random(8, 4, 1000 + seed, 0.5);
            auto pol = ToyPolicy::random(8, 4, 2000 + seed, 0.5);
            std::vector<double> grad(pol.num_params(), 0.0);
            objective(pol, ref, data, 0.5, &grad);
            for (std::size_t i = 0; i < pol.num_params(); ++i) {
                const double keep = pol.params()[i];
                pol.params()[i] = keep + h;
                const double up = objective(pol, ref, data, 0.5);
                pol.params()[i] = keep - h;
                const double down = objective(pol, ref, data, 0.5);
                pol.params()[i] = keep;
                const double fd = (up - down) / (2 * h);
                // Tokens absent from every pair at a position have an exactly zero gradient
                // (the softmax terms of chosen and rejected cancel); relative error is undefined there.
                if (grad[i] == 0.0) {
                    zero_ok = zero_ok && std::abs(fd) <= 1e-9;
                    continue;
                }
                worst = std::max(worst, std::abs(fd - grad[i]) / std::max(std::abs(fd), std::abs(grad[i])));
            }
        }
        CHECK(worst < 1e-6);
        CHECK(zero_ok);
    }

    TEST_CASE("identical chosen and rejected pin the loss at ln 2") {
        std::vector<TokenPair> data{{{1, 2, 3}, {1, 2, 3}}, {{0, 0, 1}, {0, 0, 1}}};
        DpoConfig cfg;
        cfg.steps = 20;
        const auto r = train_toy(data, cfg, 4, 3);
        for (const auto& s : r.trajectory) CHECK(std::abs(s.loss - kLn2) < 1e-12);
        CHECK(r.policy.params() == r.reference.params());
    }

    TEST_CASE("training on separable data learns") {
        DpoConfig cfg;
        cfg.seed = 11;
        const auto data = separable(50, 5);
        const auto r = train_toy(data, cfg, 8, 4);
        REQUIRE(r.trajectory.size() == cfg.steps + 1);
        CHECK(r.trajectory.front().loss == doctest::Approx(kLn2).epsilon(0.05));
        CHECK(r.trajectory.back().loss < kLn2);
        CHECK(r.trajectory.back().mean_margin > 0.0);
    }

    TEST_CASE("small learning rate gives a non-increasing loss") {
        DpoConfig cfg;
        cfg.learning_rate = 0.01;
        cfg.seed = 2;
        const auto r = train_toy(separable(50, 5), cfg, 8, 4);
        for (std::size_t i = 1; i < r.trajectory.size(); ++i) CHECK(r.trajectory[i].loss <= r.trajectory[i - 1].loss);
    }

    TEST_CASE("huge learning rate diverges with the step named") {
        DpoConfig cfg;
        cfg.learning_rate = 1e308;
        cfg.beta = 1e3;
        cfg.steps = 10;
        CHECK_THROWS_AS(train_toy(separable(10, 1), cfg, 8, 4), Diverged);
    }

    TEST_CASE("tokenizer and vocabulary") {
        const auto v = build_vocab({"the boat", "A boat!"});
        CHECK(v == std::map<std::string, std::size_t>{{"a", 1}, {"boat", 2}, {"the", 3}});
        CHECK(tokenize("The BOAT sails", v, 8) == Sequence{3, 2, 0});
        CHECK(tokenize("The BOAT sails", v, 2) == Sequence{3, 2});
    }

    TEST_CASE("recipe metadata") {
        const auto j = recipe_metadata(0.1, json{{"CPQ", 5}});
        CHECK(j["beta"] == 0.1);
        CHECK(j["lora_r"] == 64);
        CHECK(j["lora_alpha"] == 128);
    }
}
