#include <doctest.h>

#include <algorithm>
#include <set>

#include "antidote/correction.hpp"
#include "antidote/error.hpp"
#include "support.hpp"

using namespace antidote;
using namespace antidote::correction;

namespace {

assessor::AssessedSample sample() {
    assessor::AssessedSample s;
    s.triplet = scene::SceneTriplet{"t7", "a speedboat on open water", {"boat", "water"}, {"bridge"},
                                    scene::TripletStatus::assessed, ""};
    s.image = assessor::GeneratedImage{"t7", "img://7", s.triplet.caption, "bridge", 1};
    return s;
}

ResponsePair pair(std::string id, QueryKind kind, std::string orig, std::string corr) {
    return ResponsePair{id, "t-" + id, kind, "img://" + id, "question " + id, std::move(orig), std::move(corr), std::nullopt};
}

// 30 pairs: 8 of each kind except Existence with 6.
std::vector<ResponsePair> fixture30() {
    std::vector<ResponsePair> v;
    const std::pair<QueryKind, int> plan[] = {
        {QueryKind::CPQ, 8}, {QueryKind::TPQ, 8}, {QueryKind::Existence, 6}, {QueryKind::Description, 8}};
    for (auto [k, n] : plan) {
        for (int i = 0; i < n; ++i) {
            const std::string id = std::string(querygen::to_string(k)) + "-" + std::to_string(i);
            v.push_back(pair(id, k, "bad " + id, "good " + id));
        }
    }
    return v;
}

CompositionConfig ratio5528(std::uint64_t seed = 3) {
    CompositionConfig c;
    c.counts = {{QueryKind::CPQ, 5}, {QueryKind::TPQ, 5}, {QueryKind::Existence, 2}, {QueryKind::Description, 8}};
    c.seed = seed;
    return c;
}

}  // namespace

TEST_SUITE("correction") {
    TEST_CASE("factual prompts") {
        TaskQuery cpq{"q", "t", QueryKind::CPQ, "What is the bridge made of?", {"bridge"}, "there is no bridge"};
        CHECK(build_factual_prompt(cpq) ==
              "Given the fact that there is no bridge, please answer: What is the bridge made of?");
        TaskQuery ex{"q", "t", QueryKind::Existence, "Is there a boat in the image?", {"boat"}, "there is a boat"};
        CHECK(build_factual_prompt(ex) ==
              "Given the fact that there is a boat, please answer: Is there a boat in the image?");
        const auto s = sample();
        TaskQuery d{"q", "t", QueryKind::Description, "Please describe the image in detail.", {},
                    querygen::description_prior(s.triplet)};
        CHECK(build_factual_prompt(d) ==
              "Given the hint of the image: the image caption: a speedboat on open water, the object(s) you can see: "
              "boat, water, the object(s) you cannot see: bridge, please describe the image in detail.");
        TaskQuery none{"q", "t", QueryKind::CPQ, "x", {"bridge"}, ""};
        CHECK_THROWS_AS(build_factual_prompt(none), ConfigError);
    }

    TEST_CASE("collect_pair asks without then with the prior") {
        auto tr = std::make_shared<testsupport::ScriptedTransport>([](gateway::Role, const json& req) {
            return testsupport::text_reply(req["vars"]["with_prior"] == "true"
                                               ? "I cannot answer, as there is no bridge in the image."
                                               : "It is made of steel.");
        });
        auto c = testsupport::client(gateway::Role::textgen, tr);
        TaskQuery q{"t7-cpq-0", "t7", QueryKind::CPQ, "What is the bridge made of?", {"bridge"}, "there is no bridge"};
        const auto p = collect_pair(q, sample(), *c);
        CHECK(p.original == "It is made of steel.");
        CHECK(p.corrected == "I cannot answer, as there is no bridge in the image.");
        CHECK(p.prompt_text == q.text);
        CHECK(p.image_ref == "img://7");
        const auto reqs = tr->requests();
        REQUIRE(reqs.size() == 2);
        CHECK(reqs[0]["prompt"] == q.text);
        CHECK(reqs[1]["prompt"] == build_factual_prompt(q));
    }

    TEST_CASE("identical answers get similarity 1 and empty answers fail") {
        auto same = testsupport::client(gateway::Role::textgen, std::make_shared<testsupport::ScriptedTransport>(
                                                                    [](gateway::Role, const json&) { return testsupport::text_reply("same"); }));
        TaskQuery q{"q", "t7", QueryKind::TPQ, "What colour is the boat?", {"boat"}, "there is a boat"};
        CHECK(collect_pair(q, sample(), *same).similarity == std::optional<double>(1.0));
        auto empty = testsupport::client(gateway::Role::textgen, std::make_shared<testsupport::ScriptedTransport>(
                                                                     [](gateway::Role, const json&) { return testsupport::text_reply("  "); }));
        CHECK_THROWS_AS(collect_pair(q, sample(), *empty), DataError);
    }

    TEST_CASE("keyed stub policy gives a deterministic pair") {
        auto a = testsupport::client(gateway::Role::textgen, testsupport::stub(gateway::Role::textgen));
        auto b = testsupport::client(gateway::Role::textgen, testsupport::stub(gateway::Role::textgen));
        TaskQuery q{"t7-cpq-0", "t7", QueryKind::CPQ, "What is the bridge made of?", {"bridge"}, "there is no bridge"};
        CHECK(collect_pair(q, sample(), *a).to_json() == collect_pair(q, sample(), *b).to_json());
    }

    TEST_CASE("identical pairs dropped, orthogonal kept") {
        auto tr = std::make_shared<testsupport::ScriptedTransport>([](gateway::Role, const json& req) {
            json vecs = json::array();
            for (const auto& t : req["texts"]) {
                vecs.push_back(t.get<std::string>().rfind("x", 0) == 0 ? std::vector<double>{1, 0} : std::vector<double>{0, 1});
            }
            return json{{"vectors", vecs}};
        });
        auto emb = testsupport::client(gateway::Role::embed, tr);
        const auto r = filter_pairs({pair("a", QueryKind::CPQ, "x1", "y1"), pair("b", QueryKind::CPQ, "x2", "x3"),
                                     pair("c", QueryKind::CPQ, "same", " same ")},
                                    *emb, 0.9);
        REQUIRE(r.kept.size() == 1);
        CHECK(r.kept[0].query_id == "a");
        CHECK(*r.kept[0].similarity == 0.0);
        CHECK(r.report.dropped_similar == 1);
        CHECK(r.report.dropped_degenerate == 1);
        CHECK_THROWS_AS(filter_pairs({}, *emb, 1.5), ConfigError);
    }

    TEST_CASE("calibration fixture discards about 15 percent") {
        // 15 of 100 pairs share an embedding between answers; the rest are orthogonal.
        std::vector<ResponsePair> pairs;
        for (int i = 0; i < 100; ++i) {
            const std::string tag = i < 15 ? "near" : "far";
            pairs.push_back(pair(std::to_string(i), QueryKind::TPQ, "orig " + std::to_string(i), tag + " " + std::to_string(i)));
        }
        auto tr = std::make_shared<testsupport::ScriptedTransport>([](gateway::Role, const json& req) {
            json vecs = json::array();
            for (const auto& t : req["texts"]) {
                const std::string s = t;
                vecs.push_back(s.rfind("far", 0) == 0 ? std::vector<double>{0, 1, 0} : std::vector<double>{1, 0.1, 0});
            }
            return json{{"vectors", vecs}};
        });
        auto emb = testsupport::client(gateway::Role::embed, tr);
        const auto r = filter_pairs(pairs, *emb, 0.9);
        CHECK(r.report.kept == 85);
        CHECK(r.report.discard_fraction == doctest::Approx(0.15));
    }

    TEST_CASE("5:5:2:8 composition from a 30-pair fixture") {
        const auto out = compose_dataset(fixture30(), ratio5528());
        REQUIRE(out.size() == 20);
        std::map<QueryKind, int> n;
        for (const auto& p : out) ++n[p.kind];
        CHECK(n[QueryKind::CPQ] == 5);
        CHECK(n[QueryKind::TPQ] == 5);
        CHECK(n[QueryKind::Existence] == 2);
        CHECK(n[QueryKind::Description] == 8);
        for (const auto& p : out) {
            CHECK(p.chosen.rfind("good", 0) == 0);
            CHECK(p.rejected.rfind("bad", 0) == 0);
            CHECK_FALSE(contains_prior_clause(p.prompt_text));
        }
    }

    TEST_CASE("composition is deterministic and independent of input order") {
        auto a = fixture30();
        auto b = a;
        std::reverse(b.begin(), b.end());
        auto dump = [](const std::vector<PreferencePair>& v) {
            std::string s;
            for (const auto& p : v) s += p.to_json().dump() + "\n";
            return s;
        };
        CHECK(dump(compose_dataset(a, ratio5528())) == dump(compose_dataset(a, ratio5528())));
        CHECK(dump(compose_dataset(a, ratio5528())) == dump(compose_dataset(b, ratio5528())));
        CHECK(dump(compose_dataset(a, ratio5528(3))) != dump(compose_dataset(a, ratio5528(4))));
    }

    TEST_CASE("shortfall names the short kind") {
        auto v = fixture30();
        v.erase(std::remove_if(v.begin(), v.end(),
                               [](const ResponsePair& p) { return p.kind == QueryKind::CPQ && p.query_id != "CPQ-0" && p.query_id != "CPQ-1" &&
                                                                  p.query_id != "CPQ-2" && p.query_id != "CPQ-3" && p.query_id != "CPQ-4"; }),
                v.end());
        auto cfg = ratio5528();
        cfg.counts[QueryKind::CPQ] = 6;
        try {
            compose_dataset(v, cfg);
            FAIL("expected InsufficientData");
        } catch (const InsufficientData& e) {
            CHECK(e.shortfall() == std::map<std::string, std::size_t>{{"CPQ", 1}});
        }
    }

    TEST_CASE("a prior clause in prompt text is refused") {
        auto v = fixture30();
        v[0].prompt_text = "Given the fact that there is no bridge, please answer: x";
        CHECK_THROWS_AS(compose_dataset(v, ratio5528()), DataError);
        CHECK(contains_prior_clause("Given the hint of the image: y"));
        CHECK_FALSE(contains_prior_clause("What is the bridge made of?"));
    }

    TEST_CASE("preference record field set is frozen") {
        const auto p = compose_dataset(fixture30(), ratio5528()).front().to_json();
        std::set<std::string> keys;
        for (const auto& [k, _] : p.items()) keys.insert(k);
        CHECK(keys == std::set<std::string>{"prompt_text", "image_ref", "chosen", "rejected", "kind", "triplet_id"});
    }
}
