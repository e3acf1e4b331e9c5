#include <doctest.h>

#include <set>
#include <stdexcept>

#include "antidote/error.hpp"
#include "antidote/hash.hpp"
#include "antidote/jsonl.hpp"
#include "antidote/parallel.hpp"
#include "antidote/random.hpp"
#include "antidote/text.hpp"
#include "support.hpp"

using namespace antidote;

TEST_SUITE("util") {
    TEST_CASE("normalize lowercases, strips punctuation, collapses whitespace") {
        CHECK(text::normalize("  A Dog,  on   the GRASS! ") == "a dog on the grass");
        CHECK(text::normalize("...") == "");
    }

    TEST_CASE("render keeps unknown placeholders") {
        const std::map<std::string, std::string> vars{{"a", "x"}};
        CHECK(text::render("{a}-{b}-{a}", vars) == "x-{b}-x");
    }

    TEST_CASE("case-insensitive helpers") {
        CHECK(text::starts_with_icase("Is there a dog", "is there"));
        CHECK_FALSE(text::starts_with_icase("Is", "is there"));
        CHECK(text::contains_icase("What is the BRIDGE made of", "bridge"));
    }

    TEST_CASE("fnv1a64 reference values") {
        // Published FNV-1a 64-bit test vectors.
        CHECK(hash::fnv1a64("") == 0xcbf29ce484222325ULL);
        CHECK(hash::fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
        CHECK(hash::fnv1a64("foobar") == 0x85944171f73967e8ULL);
    }

    TEST_CASE("sha256 reference values") {
        CHECK(hash::sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
        CHECK(hash::sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    }

    TEST_CASE("base64 round trip including padding cases") {
        for (const std::string& s : std::vector<std::string>{"", "f", "fo", "foo", "foob", "fooba", "foobar", std::string("\0\xff\x10", 3)}) {
            CHECK(hash::base64_decode(hash::base64_encode(s)) == s);
        }
        CHECK(hash::base64_encode("foobar") == "Zm9vYmFy");
        CHECK(hash::base64_encode("fo") == "Zm8=");
    }

    TEST_CASE("seeded rng is reproducible and below() stays in range") {
        SeededRng a(42), b(42);
        for (int i = 0; i < 100; ++i) CHECK(a.next() == b.next());
        SeededRng r(7);
        std::set<std::uint64_t> seen;
        for (int i = 0; i < 2000; ++i) {
            const auto x = r.below(5);
            CHECK(x < 5);
            seen.insert(x);
        }
        CHECK(seen.size() == 5);
    }

    TEST_CASE("shuffle is a permutation") {
        std::vector<int> v(50);
        for (int i = 0; i < 50; ++i) v[i] = i;
        SeededRng r(1);
        r.shuffle(v);
        std::set<int> s(v.begin(), v.end());
        CHECK(s.size() == 50);
    }

    TEST_CASE("parallel_for fills every slot and rethrows the lowest failing index") {
        std::vector<int> out(100, 0);
        parallel_for(out.size(), 8, [&](std::size_t i) { out[i] = static_cast<int>(i) * 2; });
        for (int i = 0; i < 100; ++i) CHECK(out[i] == 2 * i);

        try {
            parallel_for(20, 4, [](std::size_t i) {
                if (i == 7 || i == 13) throw std::runtime_error("fail " + std::to_string(i));
            });
            FAIL("expected an exception");
        } catch (const std::runtime_error& e) {
            CHECK(std::string(e.what()) == "fail 7");
        }
    }

    TEST_CASE("jsonl round trip and parse errors carry the line number") {
        testsupport::TempDir dir("jsonl");
        const auto p = dir.path() / "sub" / "x.jsonl";
        jsonl::write(p, {json{{"a", 1}}, json{{"b", "two"}}});
        const auto back = jsonl::read(p);
        REQUIRE(back.size() == 2);
        CHECK(back[1]["b"] == "two");

        jsonl::write_text(dir.path() / "bad.jsonl", "{\"a\":1}\n\n{oops\n");
        try {
            jsonl::read(dir.path() / "bad.jsonl");
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            CHECK(std::string(e.what()).find("bad.jsonl:3:") != std::string::npos);
        }
    }

    TEST_CASE("exit codes by error type") {
        CHECK(exit_code(ConfigError("x")) == 2);
        CHECK(exit_code(StageOrderError("x")) == 2);
        CHECK(exit_code(BackendError("textgen", 1, "x")) == 3);
        CHECK(exit_code(InsufficientData({{"CPQ", 1}})) == 4);
        CHECK(exit_code(DataError("x")) == 1);
    }
}
