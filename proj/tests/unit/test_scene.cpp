#include <doctest.h>

#include "antidote/error.hpp"
#include "antidote/scene.hpp"
#include "antidote/templates.hpp"
#include "support.hpp"

using namespace antidote;
using namespace antidote::scene;

namespace {

const std::string kApproveAll = "object_count: pass\nvisible_entities: pass\nno_conflict: pass";

// Scripted text backend answering per task tag.
std::shared_ptr<testsupport::ScriptedTransport> scripted(std::string rewrite, std::string extract,
                                                         std::string verify = kApproveAll) {
    return std::make_shared<testsupport::ScriptedTransport>([=](gateway::Role, const json& req) {
        const std::string task = req.value("task", "");
        if (task == "P1-rewrite") return testsupport::text_reply(rewrite.empty() ? req["vars"]["caption"].get<std::string>() : rewrite);
        if (task == "P1-extract") return testsupport::text_reply(extract);
        return testsupport::text_reply(verify);
    });
}

SceneTriplet proposed(std::vector<std::string> pre, std::vector<std::string> hallu) {
    return SceneTriplet{"t1", "a speedboat on open water", std::move(pre), std::move(hallu), TripletStatus::proposed, ""};
}

corpus::Caption cap(std::string text) { return corpus::Caption{"c1", std::move(text), std::nullopt, ""}; }

}  // namespace

TEST_SUITE("scene") {
    TEST_CASE("reply parsing on one line or two") {
        auto [p, a] = parse_triplet_reply("present: [boat, water]; absent-candidates: [bridge, dock]");
        CHECK(p == std::vector<std::string>{"boat", "water"});
        CHECK(a == std::vector<std::string>{"bridge", "dock"});
        auto [p2, a2] = parse_triplet_reply("Present: [\"Boat\", boat ]\nAbsent-Candidates: [ 'Dock'. ]");
        CHECK(p2 == std::vector<std::string>{"boat"});
        CHECK(a2 == std::vector<std::string>{"dock"});
    }

    TEST_CASE("malformed replies are parse errors") {
        CHECK_THROWS_AS(parse_triplet_reply("boat, water"), ParseError);
        CHECK_THROWS_AS(parse_triplet_reply("present: [boat]"), ParseError);
        CHECK_THROWS_AS(parse_triplet_reply("present: boat\nabsent-candidates: [x]"), ParseError);
        CHECK_THROWS_AS(parse_triplet_reply("present: [boat\nabsent-candidates: [x]"), ParseError);
    }

    TEST_CASE("ten-word rewrite is accepted unchanged") {
        const std::string ten = "a small red boat floats on calm blue lake water";
        auto c = testsupport::client(gateway::Role::textgen, scripted("", ""));
        CHECK(rewrite_caption(cap(ten), *c, TemplateSet::builtin(), {}) == ten);
    }

    TEST_CASE("over-long rewrite is re-requested once, then RewriteFailed") {
        const std::string twenty = "one two three four five six seven eight nine ten eleven twelve thirteen fourteen "
                                   "fifteen sixteen seventeen eighteen nineteen twenty";
        auto t = scripted(twenty, "");
        auto c = testsupport::client(gateway::Role::textgen, t);
        CHECK_THROWS_AS(rewrite_caption(cap("x y z"), *c, TemplateSet::builtin(), {}), RewriteFailed);
        CHECK(t->requests().size() == 2);
    }

    TEST_CASE("REJECT sentinel drops the caption") {
        auto c = testsupport::client(gateway::Role::textgen, scripted("REJECT", ""));
        CHECK_THROWS_AS(rewrite_caption(cap("blurry"), *c, TemplateSet::builtin(), {}), CaptionRejected);
        auto c2 = testsupport::client(gateway::Role::textgen, scripted("REJECT", ""));
        const auto out = run_scene({cap("blurry")}, *c2, TemplateSet::builtin(), {});
        REQUIRE(out.size() == 1);
        CHECK_FALSE(out[0].triplet.has_value());
        CHECK(out[0].dropped_reason.rfind("rejected", 0) == 0);
    }

    TEST_CASE("extraction yields a proposed triplet, overlap included") {
        auto c = testsupport::client(gateway::Role::textgen,
                                     scripted("", "present: [boat, water]; absent-candidates: [boat, dock]"));
        const auto t = extract_triplet("t9", "a boat", *c, TemplateSet::builtin(), {});
        CHECK(t.status == TripletStatus::proposed);
        CHECK(t.present_objects == std::vector<std::string>{"boat", "water"});
        CHECK(t.hallucination_candidates == std::vector<std::string>{"boat", "dock"});
    }

    TEST_CASE("extraction retries malformed replies then raises") {
        auto t = scripted("", "nothing useful");
        auto c = testsupport::client(gateway::Role::textgen, t);
        CHECK_THROWS_AS(extract_triplet("t9", "a boat", *c, TemplateSet::builtin(), {}), ParseError);
        CHECK(t->requests().size() == 3);
    }

    TEST_CASE("approved disjoint triplet verifies") {
        auto c = testsupport::client(gateway::Role::textgen, scripted("", ""));
        auto t = proposed({"boat", "water"}, {"bridge", "dock"});
        const auto r = verify_triplet(t, *c, TemplateSet::builtin(), {});
        CHECK(r.passed());
        CHECK(t.status == TripletStatus::verified);
    }

    TEST_CASE("overlapping lists fail on disjointness") {
        auto tr = scripted("", "");
        auto c = testsupport::client(gateway::Role::textgen, tr);
        auto t = proposed({"boat", "water"}, {"boat", "dock"});
        const auto r = verify_triplet(t, *c, TemplateSet::builtin(), {});
        CHECK_FALSE(r.checks.at("disjoint").passed);
        CHECK(t.status == TripletStatus::discarded);
        CHECK(t.discard_reason.find("disjoint") != std::string::npos);
        CHECK(tr->requests().empty());  // local failure skips reflection
    }

    TEST_CASE("seven candidates fail the count bound") {
        auto c = testsupport::client(gateway::Role::textgen, scripted("", ""));
        auto t = proposed({"boat"}, {"a", "b", "c", "d", "e", "f", "g"});
        const auto r = verify_triplet(t, *c, TemplateSet::builtin(), {});
        CHECK_FALSE(r.checks.at("count_hallucination").passed);
        CHECK(r.checks.at("count_present").passed);
        CHECK(t.status == TripletStatus::discarded);
    }

    TEST_CASE("a failed reflection rule discards") {
        auto c = testsupport::client(gateway::Role::textgen,
                                     scripted("", "", "object_count: pass\nvisible_entities: fail (air)\nno_conflict: pass"));
        auto t = proposed({"boat"}, {"bridge"});
        const auto r = verify_triplet(t, *c, TemplateSet::builtin(), {});
        CHECK_FALSE(r.checks.at("reflection.visible_entities").passed);
        CHECK(t.status == TripletStatus::discarded);
    }

    TEST_CASE("verification is idempotent on a verified triplet") {
        auto c = testsupport::client(gateway::Role::textgen, scripted("", ""));
        auto t = proposed({"boat"}, {"bridge"});
        const auto first = verify_triplet(t, *c, TemplateSet::builtin(), {});
        const SceneTriplet snapshot = t;
        const auto second = verify_triplet(t, *c, TemplateSet::builtin(), {});
        CHECK(t == snapshot);
        CHECK(first == second);
    }

    TEST_CASE("triplet json round trip") {
        auto t = proposed({"boat"}, {"bridge"});
        t.status = TripletStatus::discarded;
        t.discard_reason = "x";
        CHECK(SceneTriplet::from_json(t.to_json()) == t);
        CHECK_THROWS_AS(SceneTriplet::from_json(json{{"id", 1}}), DataError);
    }

    TEST_CASE("run_scene with the synthetic stub keeps input order") {
        auto c = testsupport::client(gateway::Role::textgen, testsupport::stub(gateway::Role::textgen));
        std::vector<corpus::Caption> caps{{"a", "a speedboat on open water near the coast", std::nullopt, ""},
                                          {"b", "a dog playing with a ball in the park", std::nullopt, ""}};
        const auto out = run_scene(caps, *c, TemplateSet::builtin(), {});
        REQUIRE(out.size() == 2);
        CHECK(out[0].caption_id == "a");
        CHECK(out[1].caption_id == "b");
        for (const auto& o : out) {
            REQUIRE(o.triplet.has_value());
            CHECK(o.triplet->status == TripletStatus::verified);
        }
    }
}
