// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "fuzzsel/errors.hpp"
#include "fuzzsel/reward.hpp"
#include "reward_cases.hpp"

using namespace fuzzsel;
using namespace fuzzsel::reward;

TEST_SUITE("reward") {

TEST_CASE("marker rule extracts the text after the last ####") {
    const auto ans = extract_final_answer("...so the total is 72.\n#### 72");
    REQUIRE(ans.has_value());
    CHECK(ans->raw == "72");
    REQUIRE(ans->is_numeric());
    CHECK(ans->numeric->rat == Rational::make(72, 1));
}

TEST_CASE("boxed fraction parses to an exact rational") {
    const auto ans = extract_final_answer("the answer is \\boxed{\\frac{1}{2}}");
    REQUIRE(ans.has_value());
    REQUIRE(ans->is_numeric());
    CHECK(ans->numeric->exact);
    CHECK(ans->numeric->rat == Rational::make(1, 2));
}

TEST_CASE("no rule matches on digit-free text") {
    CHECK(!extract_final_answer("no digits here").has_value());
    CHECK(!extract_final_answer("").has_value());
}

TEST_CASE("binary reward basics") {
    const auto gold = make_gold("72");
    CHECK(binary_reward("#### 72", gold) == 1);
    CHECK(binary_reward("#### 71", gold) == 0);
    CHECK(binary_reward("#### 1,000", make_gold("1000")) == 1);
    CHECK(binary_reward("nothing to see", gold) == 0);
}

TEST_CASE("reward is always 0 or 1 across the case table") {
    for (const auto& c : testutil::reward_cases()) {
        const int r = binary_reward(c.prediction, make_gold(c.gold));
        CHECK((r == 0 || r == 1));
        CHECK_MESSAGE(r == c.expected, "prediction=<", c.prediction, "> gold=<", c.gold, ">");
    }
}

TEST_CASE("normalization is idempotent on every extracted answer") {
    for (const auto& c : testutil::reward_cases()) {
        const auto first = extract_final_answer(c.prediction);
        if (!first) continue;
        const auto again = canonicalize(first->raw);
        REQUIRE(again.has_value());
        CHECK(again->raw == first->raw);
        CHECK(again->is_numeric() == first->is_numeric());
        if (first->is_numeric() && first->numeric->exact) {
            CHECK(again->numeric->exact);
            CHECK(again->numeric->rat == first->numeric->rat);
        }
        // golds too
        const auto g1 = make_gold(c.gold);
        const auto g2 = canonicalize(g1.raw);
        REQUIRE(g2.has_value());
        CHECK(g2->raw == g1.raw);
    }
}

TEST_CASE("numeric equality is symmetric") {
    const std::vector<std::pair<std::string, std::string>> pairs = {
        {"72", "72.0"}, {"1/2", "0.5"}, {"-3", "-3"}, {"1000", "1,000"}, {"2/4", "1/2"},
        {"5", "7"},     {"0.1", "1/3"},
    };
    for (const auto& [a, b] : pairs) {
        const int ab = binary_reward("#### " + a, make_gold(b));
        const int ba = binary_reward("#### " + b, make_gold(a));
        CHECK(ab == ba);
    }
}

TEST_CASE("extraction is deterministic") {
    const std::string text = "some working\n#### 1,250.50 dollars";
    const auto a = extract_final_answer(text);
    const auto b = extract_final_answer(text);
    REQUIRE(a.has_value());
    REQUIRE(b.has_value());
    CHECK(a->raw == b->raw);
    CHECK(a->is_numeric() == b->is_numeric());
}

TEST_CASE("tolerance applies only to inexact parses") {
    // 30 significant digits force the inexact path
    const int near_hit = binary_reward("#### 2.00000000000000000000000000001", make_gold("2"));
    CHECK(near_hit == 1);
    // exact parses stay exact even when close
    CHECK(binary_reward("#### 2.0000001", make_gold("2")) == 0);
}

TEST_CASE("rational reduction and sign normalization") {
    CHECK(Rational::make(2, 4) == Rational::make(1, 2));
    CHECK(Rational::make(1, -2) == Rational::make(-1, 2));
    CHECK(Rational::make(0, 5) == Rational::make(0, 1));
    CHECK_THROWS_AS(Rational::make(1, 0), DataError);
}

TEST_CASE("gold that normalizes to nothing is rejected") {
    CHECK_THROWS_AS(make_gold("  "), DataError);
}

} // TEST_SUITE
