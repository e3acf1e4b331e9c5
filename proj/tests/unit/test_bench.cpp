#include <doctest.h>

#include <algorithm>

#include "antidote/bench.hpp"
#include "antidote/error.hpp"
#include "antidote/random.hpp"
#include "support.hpp"

using namespace antidote;
using namespace antidote::bench;
using querygen::QueryKind;
using querygen::TaskQuery;

namespace {

std::map<std::string, assessor::AssessedSample> samples_for(const std::vector<TaskQuery>& qs) {
    std::map<std::string, assessor::AssessedSample> m;
    for (const auto& q : qs) {
        assessor::AssessedSample s;
        s.triplet = scene::SceneTriplet{q.triplet_id, "cap " + q.triplet_id, {"boat"}, {"bridge"}, scene::TripletStatus::assessed, ""};
        s.image = assessor::GeneratedImage{q.triplet_id, "img://" + q.triplet_id, s.triplet.caption, "bridge", 1};
        m[q.triplet_id] = s;
    }
    return m;
}

std::vector<TaskQuery> queries(int n_cpq, int n_tpq) {
    std::vector<TaskQuery> v;
    for (int i = 0; i < n_cpq; ++i) {
        v.push_back({"c" + std::to_string(i), "t" + std::to_string(i), QueryKind::CPQ, "What is the bridge made of?", {"bridge"}, "there is no bridge"});
    }
    for (int i = 0; i < n_tpq; ++i) {
        v.push_back({"p" + std::to_string(i), "u" + std::to_string(i), QueryKind::TPQ, "What colour is the boat?", {"boat"}, "there is a boat"});
    }
    v.push_back({"e0", "t0", QueryKind::Existence, "Is there a boat?", {"boat"}, "there is a boat"});
    return v;
}

BenchSample cpq_sample() {
    return BenchSample{"b-1", "img://1", "What is the bridge made of?", Label::positive, Category::unspecified,
                       "objects in the image: boat; objects not in the image: bridge", "t1", "bridge"};
}

JudgeVerdict v(std::string id, Predicted p) { return JudgeVerdict{std::move(id), p, ""}; }

}  // namespace

TEST_SUITE("bench") {
    TEST_CASE("2+2 from a 4-query pool uses every query, deterministically") {
        const auto qs = queries(2, 2);
        const auto a = assemble_dev_set(qs, samples_for(qs), 2, 2, 9);
        REQUIRE(a.size() == 4);
        CHECK(a[0].label == Label::positive);
        CHECK(a[1].label == Label::positive);
        CHECK(a[2].label == Label::negative);
        CHECK(a[3].label == Label::negative);
        std::vector<std::string> ids;
        for (const auto& s : a) ids.push_back(s.id);
        std::sort(ids.begin(), ids.end());
        CHECK(ids == std::vector<std::string>{"b-c0", "b-c1", "b-p0", "b-p1"});
        const auto b = assemble_dev_set(qs, samples_for(qs), 2, 2, 9);
        for (std::size_t i = 0; i < 4; ++i) CHECK(a[i].to_json() == b[i].to_json());
        CHECK(a[0].image_ref == "img://" + a[0].triplet_id);
        CHECK(a[0].ground_facts == "objects in the image: boat; objects not in the image: bridge");
    }

    TEST_CASE("shortfall raises InsufficientData") {
        const auto qs = queries(1, 3);
        try {
            assemble_dev_set(qs, samples_for(qs), 2, 2, 0);
            FAIL("expected InsufficientData");
        } catch (const InsufficientData& e) {
            CHECK(e.shortfall() == std::map<std::string, std::size_t>{{"CPQ", 1}});
        }
    }

    TEST_CASE("queries without an assessed image are not eligible") {
        const auto qs = queries(2, 2);
        auto samples = samples_for(qs);
        samples.erase("t0");
        CHECK_THROWS_AS(assemble_dev_set(qs, samples, 2, 2, 0), InsufficientData);
    }

    TEST_CASE("verdict parsing") {
        CHECK(parse_verdict("YES\nbecause") == std::optional<bool>(true));
        CHECK(parse_verdict("  no.") == std::optional<bool>(false));
        CHECK(parse_verdict("**Yes**, it does") == std::optional<bool>(true));
        CHECK_FALSE(parse_verdict("maybe").has_value());
        CHECK_FALSE(parse_verdict("").has_value());
    }

    TEST_CASE("stub judge on CPQ responses") {
        auto c = testsupport::client(gateway::Role::judge, testsupport::stub(gateway::Role::judge));
        const auto t = TemplateSet::builtin();
        CHECK(judge(cpq_sample(), "I cannot answer; there is no bridge", *c, t).predicted == Predicted::positive);
        CHECK(judge(cpq_sample(), "It is made of steel", *c, t).predicted == Predicted::negative);
        auto tpq = cpq_sample();
        tpq.label = Label::negative;
        CHECK(judge(tpq, "It is white.", *c, t).predicted == Predicted::negative);
        CHECK(judge(tpq, "There is no boat.", *c, t).predicted == Predicted::positive);
        CHECK_THROWS_AS(judge(cpq_sample(), " ", *c, t), DataError);
    }

    TEST_CASE("judge answering maybe twice is unparsable") {
        auto tr = std::make_shared<testsupport::ScriptedTransport>(
            [](gateway::Role, const json&) { return testsupport::text_reply("maybe"); });
        auto c = testsupport::client(gateway::Role::judge, tr);
        const auto verdict = judge(cpq_sample(), "x", *c, TemplateSet::builtin());
        CHECK(verdict.predicted == Predicted::unparsable);
        CHECK(tr->requests().size() == 2);
        CHECK(tr->requests()[0]["image_ref"] == "img://1");
    }

    TEST_CASE("metrics: perfect, hand-computed, degenerate") {
        std::map<std::string, Label> labels;
        std::vector<JudgeVerdict> all;
        for (int i = 0; i < 4; ++i) {
            labels["p" + std::to_string(i)] = Label::positive;
            labels["n" + std::to_string(i)] = Label::negative;
            all.push_back(v("p" + std::to_string(i), Predicted::positive));
            all.push_back(v("n" + std::to_string(i), Predicted::negative));
        }
        const auto perfect = compute_metrics(all, labels);
        CHECK(perfect.precision == 1.0);
        CHECK(perfect.recall == 1.0);
        CHECK(perfect.f1 == 1.0);
        CHECK(perfect.accuracy == 1.0);

        // TP=3 FN=1 FP=1 TN=3
        all[0].predicted = Predicted::negative;
        all[1].predicted = Predicted::positive;
        const auto m = compute_metrics(all, labels);
        CHECK(m.tp == 3);
        CHECK(m.fn == 1);
        CHECK(m.fp == 1);
        CHECK(m.tn == 3);
        CHECK(m.precision == 0.75);
        CHECK(m.recall == 0.75);
        CHECK(m.f1 == 0.75);
        CHECK(m.accuracy == 0.75);

        for (auto& x : all) x.predicted = Predicted::negative;
        const auto none = compute_metrics(all, labels);
        CHECK(none.precision == 0.0);
        CHECK(none.f1 == 0.0);
        CHECK(none.accuracy == 0.5);
        CHECK(std::find(none.flags.begin(), none.flags.end(), "precision: zero denominator") != none.flags.end());
    }

    TEST_CASE("unparsable counts against accuracy only") {
        const std::map<std::string, Label> labels{{"a", Label::positive}, {"b", Label::negative}, {"c", Label::positive}};
        const auto m = compute_metrics({v("a", Predicted::positive), v("b", Predicted::negative), v("c", Predicted::unparsable)}, labels);
        CHECK(m.unparsable == 1);
        CHECK(m.recall == 1.0);
        CHECK(m.accuracy == doctest::Approx(2.0 / 3.0));
    }

    TEST_CASE("metrics are permutation invariant and reject unknown ids") {
        std::map<std::string, Label> labels;
        std::vector<JudgeVerdict> vs;
        SeededRng rng(4);
        for (int i = 0; i < 40; ++i) {
            const std::string id = "s" + std::to_string(i);
            labels[id] = rng.below(2) ? Label::positive : Label::negative;
            vs.push_back(v(id, static_cast<Predicted>(rng.below(3))));
        }
        const auto base = compute_metrics(vs, labels).to_json();
        for (int k = 0; k < 5; ++k) {
            rng.shuffle(vs);
            CHECK(compute_metrics(vs, labels).to_json() == base);
        }
        vs.push_back(v("ghost", Predicted::positive));
        CHECK_THROWS_AS(compute_metrics(vs, labels), DataError);
    }
}
