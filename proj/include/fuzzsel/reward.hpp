// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace fuzzsel::reward {

// Exact rational with int64 components, normalized (den > 0, gcd 1).
struct Rational {
    std::int64_t num = 0;
    std::int64_t den = 1;

    static Rational make(std::int64_t num, std::int64_t den); // normalizes
    bool operator==(const Rational&) const = default;
    double to_double() const { return static_cast<double>(num) / static_cast<double>(den); }
};

// Parsed numeric value. `exact` is false when the literal could not be
// represented as an int64/int64 rational (too many digits); such values carry
// only a double approximation and are compared with the absolute tolerance.
struct NumericValue {
    bool exact = true;
    Rational rat;
    double approx = 0.0;

    double value() const { return exact ? rat.to_double() : approx; }
};

struct CanonicalAnswer {
    std::string raw; // normalized comparison form, trimmed, non-empty
    std::optional<NumericValue> numeric;

    bool is_numeric() const { return numeric.has_value(); }
};

// Normalizes a raw candidate string: trims, unwraps quotes/brackets/markdown,
// scrubs the supported LaTeX forms (\frac -> a/b, \text{X} -> X, \% -> %,
// math-mode $), strips trailing sentence punctuation, leading currency,
// validated thousands separators and trailing unit words, then attempts an
// exact numeric parse. Returns nullopt when nothing is left. The full rule
// table lives in docs/answer-grammar.md. Idempotent: canonicalizing a
// returned raw form reproduces the same answer.
std::optional<CanonicalAnswer> canonicalize(std::string_view candidate);

// Applies the extraction rules in priority order:
//   1. text after the last "####" marker, cut at end of line;
//   2. content of the last balanced "\boxed{...}";
//   3. the last standalone number in the text.
// Returns nullopt if no rule yields a usable answer.
std::optional<CanonicalAnswer> extract_final_answer(std::string_view text);

// Canonicalizes a gold answer string directly (no extraction rules).
// Throws DataError if the gold normalizes to nothing.
CanonicalAnswer make_gold(std::string_view gold_text);

// 1 iff an answer can be extracted from `prediction` and it matches `gold`.
// Numeric match is exact rational equality; the absolute tolerance applies
// only when either side is an inexact parse. String match is ASCII
// case-insensitive comparison of raw forms. Extraction failure scores 0.
int binary_reward(std::string_view prediction, const CanonicalAnswer& gold,
                  double tolerance = 1e-6);

} // namespace fuzzsel::reward
