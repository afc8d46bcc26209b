// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <fstream>
#include <set>

#include "fuzzsel/corpus.hpp"
#include "fuzzsel/errors.hpp"
#include "fuzzsel/jsonl.hpp"
#include "helpers.hpp"

using namespace fuzzsel;
using namespace fuzzsel::corpus;

namespace {

std::string write_lines(const testutil::TempDir& dir, const std::string& name,
                        const std::vector<std::string>& lines) {
    const std::string path = dir.str(name);
    std::ofstream out(path, std::ios::binary);
    for (const auto& l : lines) out << l << "\n";
    return path;
}

} // namespace

TEST_SUITE("corpus") {

TEST_CASE("gsm8k gold answer comes from the last #### marker") {
    testutil::TempDir dir("corpus");
    const auto path = write_lines(
        dir, "c.jsonl",
        {R"({"id":"q1","prompt":"How much per day?","solution":"So she makes $10 every day.\n#### 10"})"});
    const auto c = load_corpus(path, Format::gsm8k);
    REQUIRE(c.size() == 1);
    CHECK(c.examples()[0].gold_answer == "10");
    CHECK(*c.examples()[0].reference_solution ==
          "So she makes $10 every day.\n#### 10");
}

TEST_CASE("last of several markers wins") {
    testutil::TempDir dir("corpus");
    const auto path = write_lines(
        dir, "c.jsonl",
        {R"({"id":"q1","prompt":"p","solution":"#### 3 was wrong\nreally\n#### 7"})"});
    const auto c = load_corpus(path, Format::gsm8k);
    CHECK(c.examples()[0].gold_answer == "7");
}

TEST_CASE("empty file is an error") {
    testutil::TempDir dir("corpus");
    const auto path = write_lines(dir, "empty.jsonl", {});
    CHECK_THROWS_WITH_AS(load_corpus(path, Format::gsm8k),
                         doctest::Contains("empty corpus"), DataError);
}

TEST_CASE("duplicate ids are an error naming the id") {
    testutil::TempDir dir("corpus");
    const auto path = write_lines(dir, "dup.jsonl",
                                  {R"({"id":"q1","prompt":"a","solution":"#### 1"})",
                                   R"({"id":"q1","prompt":"b","solution":"#### 2"})"});
    CHECK_THROWS_WITH_AS(load_corpus(path, Format::gsm8k), doctest::Contains("q1"), DataError);
}

TEST_CASE("malformed line is an error naming the line number") {
    testutil::TempDir dir("corpus");
    const auto path = write_lines(dir, "bad.jsonl",
                                  {R"({"id":"q1","prompt":"a","solution":"#### 1"})",
                                   R"(not json at all)"});
    CHECK_THROWS_WITH_AS(load_corpus(path, Format::gsm8k), doctest::Contains(":2"), DataError);
}

TEST_CASE("missing final-answer marker names the record id") {
    testutil::TempDir dir("corpus");
    const auto path =
        write_lines(dir, "nm.jsonl", {R"({"id":"q9","prompt":"a","solution":"no marker"})"});
    CHECK_THROWS_WITH_AS(load_corpus(path, Format::gsm8k), doctest::Contains("q9"), DataError);
}

TEST_CASE("invalid UTF-8 is a load error") {
    testutil::TempDir dir("corpus");
    const std::string path = dir.str("utf8.jsonl");
    std::ofstream out(path, std::ios::binary);
    out << "{\"id\":\"q1\",\"prompt\":\"a\xFF\x01\",\"solution\":\"#### 1\"}\n";
    out.close();
    CHECK_THROWS_WITH_AS(load_corpus(path, Format::gsm8k), doctest::Contains("UTF-8"),
                         DataError);
}

TEST_CASE("ids synthesized as zero-padded indices when absent") {
    testutil::TempDir dir("corpus");
    const auto path = write_lines(dir, "noid.jsonl",
                                  {R"({"prompt":"a","solution":"#### 1"})",
                                   R"({"prompt":"b","solution":"#### 2"})"});
    const auto c = load_corpus(path, Format::gsm8k);
    CHECK(c.examples()[0].id == "00000000");
    CHECK(c.examples()[1].id == "00000001");
}

TEST_CASE("generic format takes gold from the answer field") {
    testutil::TempDir dir("corpus");
    const auto path = write_lines(dir, "gen.jsonl",
                                  {R"({"id":"g1","prompt":"pick","answer":"blue"})"});
    const auto c = load_corpus(path, Format::generic);
    CHECK(c.examples()[0].gold_answer == "blue");
    CHECK(!c.examples()[0].reference_solution.has_value());
}

TEST_CASE("round-trip: export all ids then reload yields an equal corpus") {
    testutil::TempDir dir("corpus");
    testutil::write_corpus_file(dir.str("src.jsonl"), 23);
    const auto c = load_corpus(dir.str("src.jsonl"), Format::gsm8k);

    std::set<std::string> all;
    for (const auto& ex : c.examples()) all.insert(ex.id);
    const auto written = export_subset(c, all, dir.str("copy.jsonl"));
    CHECK(written == 23);

    const auto c2 = load_corpus(dir.str("copy.jsonl"), Format::gsm8k);
    REQUIRE(c2.size() == c.size());
    for (std::size_t i = 0; i < c.size(); ++i) {
        CHECK(c.examples()[i].id == c2.examples()[i].id);
        CHECK(c.examples()[i].prompt == c2.examples()[i].prompt);
        CHECK(c.examples()[i].reference_solution == c2.examples()[i].reference_solution);
        CHECK(c.examples()[i].gold_answer == c2.examples()[i].gold_answer);
    }
    CHECK(c.content_hash() == c2.content_hash());
}

TEST_CASE("subset export preserves corpus order") {
    testutil::TempDir dir("corpus");
    testutil::write_corpus_file(dir.str("src.jsonl"), 10);
    const auto c = load_corpus(dir.str("src.jsonl"), Format::gsm8k);

    // insertion order of the set is irrelevant
    const std::set<std::string> ids{testutil::test_id(7), testutil::test_id(2),
                                    testutil::test_id(4)};
    export_subset(c, ids, dir.str("sub.jsonl"));
    const auto sub = load_corpus(dir.str("sub.jsonl"), Format::gsm8k);
    REQUIRE(sub.size() == 3);
    CHECK(sub.examples()[0].id == testutil::test_id(2));
    CHECK(sub.examples()[1].id == testutil::test_id(4));
    CHECK(sub.examples()[2].id == testutil::test_id(7));
}

TEST_CASE("empty subset writes an empty file and returns 0") {
    testutil::TempDir dir("corpus");
    testutil::write_corpus_file(dir.str("src.jsonl"), 3);
    const auto c = load_corpus(dir.str("src.jsonl"), Format::gsm8k);
    CHECK(export_subset(c, {}, dir.str("none.jsonl")) == 0);
    CHECK(read_file(dir.str("none.jsonl")).empty());
}

TEST_CASE("unknown subset ids are an error listing them") {
    testutil::TempDir dir("corpus");
    testutil::write_corpus_file(dir.str("src.jsonl"), 3);
    const auto c = load_corpus(dir.str("src.jsonl"), Format::gsm8k);
    CHECK_THROWS_WITH_AS(export_subset(c, {"ghost1", "ghost2"}, dir.str("x.jsonl")),
                         doctest::Contains("ghost1"), DataError);
}

TEST_CASE("empty prompt is rejected") {
    testutil::TempDir dir("corpus");
    const auto path =
        write_lines(dir, "ep.jsonl", {R"({"id":"q1","prompt":"","solution":"#### 1"})"});
    CHECK_THROWS_AS(load_corpus(path, Format::gsm8k), DataError);
}

} // TEST_SUITE
