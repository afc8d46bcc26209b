// SPDX-License-Identifier: Apache-2.0
#include "fuzzsel/reward.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <vector>

#include "fuzzsel/errors.hpp"

namespace fuzzsel::reward {

namespace {

bool is_digit(char c) { return c >= '0' && c <= '9'; }
bool is_alpha(char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
}
bool is_alnum(char c) { return is_digit(c) || is_alpha(c); }

std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

std::string ascii_lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

// ---- exact numeric parsing -------------------------------------------------

// At most 18 significant digits fit an int64 without overflow checks.
constexpr int kMaxExactDigits = 18;

std::optional<std::int64_t> parse_digits_exact(std::string_view digits) {
    if (digits.empty() || digits.size() > kMaxExactDigits) return std::nullopt;
    std::int64_t v = 0;
    for (char c : digits) {
        if (!is_digit(c)) return std::nullopt;
        v = v * 10 + (c - '0');
    }
    return v;
}

std::optional<double> parse_double(const std::string& s) {
    if (s.empty()) return std::nullopt;
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size()) return std::nullopt;
    if (!std::isfinite(v)) return std::nullopt;
    return v;
}

// Splits "[+-]?intpart[.fracpart]" without separators; returns false on any
// other shape.
struct DecimalParts {
    bool negative = false;
    std::string int_part;
    std::string frac_part;
    bool has_dot = false;
};

bool split_decimal(std::string_view s, DecimalParts& out) {
    std::size_t i = 0;
    if (i < s.size() && (s[i] == '+' || s[i] == '-')) {
        out.negative = s[i] == '-';
        ++i;
    }
    bool any_digit = false;
    while (i < s.size() && is_digit(s[i])) {
        out.int_part += s[i++];
        any_digit = true;
    }
    if (i < s.size() && s[i] == '.') {
        out.has_dot = true;
        ++i;
        while (i < s.size() && is_digit(s[i])) {
            out.frac_part += s[i++];
            any_digit = true;
        }
    }
    return any_digit && i == s.size();
}

std::optional<NumericValue> parse_decimal_or_int(std::string_view s) {
    DecimalParts d;
    if (!split_decimal(s, d)) return std::nullopt;

    std::string digits = d.int_part + d.frac_part;
    // strip leading zeros for the digit-count check ("0072" is still exact)
    std::size_t nz = digits.find_first_not_of('0');
    const std::size_t significant = nz == std::string::npos ? 0 : digits.size() - nz;

    if (significant <= kMaxExactDigits && d.frac_part.size() <= kMaxExactDigits) {
        const auto mant = parse_digits_exact(digits.substr(nz == std::string::npos ? 0 : nz));
        if (mant) {
            std::int64_t den = 1;
            bool ok = true;
            for (std::size_t k = 0; k < d.frac_part.size(); ++k) {
                if (den > INT64_MAX / 10) {
                    ok = false;
                    break;
                }
                den *= 10;
            }
            if (ok) {
                NumericValue v;
                v.exact = true;
                v.rat = Rational::make(d.negative ? -*mant : *mant, den);
                v.approx = v.rat.to_double();
                return v;
            }
        }
    }
    // Inexact fallback: the literal has too many digits for the exact path.
    const auto dv = parse_double(std::string(s));
    if (!dv) return std::nullopt;
    NumericValue v;
    v.exact = false;
    v.approx = *dv;
    return v;
}

std::optional<NumericValue> parse_fraction(std::string_view s) {
    const auto slash = s.find('/');
    if (slash == std::string_view::npos || slash == 0 || slash + 1 >= s.size())
        return std::nullopt;
    std::string_view num_s = s.substr(0, slash);
    std::string_view den_s = s.substr(slash + 1);

    bool neg = false;
    if (!num_s.empty() && (num_s[0] == '+' || num_s[0] == '-')) {
        neg = num_s[0] == '-';
        num_s.remove_prefix(1);
    }
    const auto num = parse_digits_exact(num_s);
    const auto den = parse_digits_exact(den_s);
    if (!num || !den || *den == 0) return std::nullopt;

    NumericValue v;
    v.exact = true;
    v.rat = Rational::make(neg ? -*num : *num, *den);
    v.approx = v.rat.to_double();
    return v;
}

std::optional<NumericValue> parse_numeric(std::string_view s) {
    if (s.find('/') != std::string_view::npos) return parse_fraction(s);
    return parse_decimal_or_int(s);
}

// ---- normalization steps ---------------------------------------------------

// "1,234,567.89" -> "1234567.89" when the comma grouping is a valid
// thousands pattern; anything else is returned unchanged.
std::string strip_thousands(const std::string& s) {
    if (s.find(',') == std::string::npos) return s;
    std::size_t i = 0;
    std::string out;
    if (i < s.size() && (s[i] == '+' || s[i] == '-')) out += s[i++];
    std::size_t lead = 0;
    while (i + lead < s.size() && is_digit(s[i + lead])) ++lead;
    if (lead == 0 || lead > 3) return s;
    out.append(s, i, lead);
    i += lead;
    bool any_group = false;
    while (i < s.size() && s[i] == ',') {
        if (i + 4 > s.size()) return s;
        if (!(is_digit(s[i + 1]) && is_digit(s[i + 2]) && is_digit(s[i + 3]))) return s;
        out.append(s, i + 1, 3);
        i += 4;
        any_group = true;
    }
    if (!any_group) return s;
    if (i < s.size()) {
        if (s[i] != '.') return s;
        out += s[i++];
        while (i < s.size() && is_digit(s[i])) out += s[i++];
        if (i != s.size()) return s;
    }
    return out;
}

// Minimal LaTeX scrub: \frac{a}{b} -> a/b (also \dfrac, \tfrac, \frac12),
// \text{X}/\mathrm{X} -> X, drop \left/\right/\boxed-free spacing macros,
// \% -> %, \$ -> $, remove remaining braces and math-mode dollars.
std::string scrub_latex(const std::string& in) {
    if (in.find('\\') == std::string::npos && in.find('{') == std::string::npos &&
        in.find('$') == std::string::npos)
        return in;

    std::string s = in;
    auto replace_all = [](std::string& str, std::string_view from, std::string_view to) {
        std::size_t pos = 0;
        while ((pos = str.find(from, pos)) != std::string::npos) {
            str.replace(pos, from.size(), to);
            pos += to.size();
        }
    };
    replace_all(s, "\\left", "");
    replace_all(s, "\\right", "");
    replace_all(s, "\\!", "");
    replace_all(s, "\\,", " ");
    replace_all(s, "\\;", " ");
    replace_all(s, "\\ ", " ");
    replace_all(s, "\\%", "%");
    replace_all(s, "\\$", "$");
    replace_all(s, "\\dfrac", "\\frac");
    replace_all(s, "\\tfrac", "\\frac");

    // \text{X} and \mathrm{X} -> X
    for (const char* macro : {"\\text{", "\\mathrm{"}) {
        std::size_t pos;
        while ((pos = s.find(macro)) != std::string::npos) {
            const std::size_t open = pos + std::string_view(macro).size() - 1;
            int depth = 0;
            std::size_t close = std::string::npos;
            for (std::size_t j = open; j < s.size(); ++j) {
                if (s[j] == '{') ++depth;
                else if (s[j] == '}') {
                    if (--depth == 0) {
                        close = j;
                        break;
                    }
                }
            }
            if (close == std::string::npos) break;
            const std::string inner = s.substr(open + 1, close - open - 1);
            s = s.substr(0, pos) + inner + s.substr(close + 1);
        }
    }

    // \frac{a}{b} -> a/b, \frac12 -> 1/2
    std::size_t pos;
    while ((pos = s.find("\\frac")) != std::string::npos) {
        std::size_t j = pos + 5;
        auto grab = [&](std::string& out) -> bool {
            if (j < s.size() && s[j] == '{') {
                int depth = 0;
                const std::size_t open = j;
                for (std::size_t k = open; k < s.size(); ++k) {
                    if (s[k] == '{') ++depth;
                    else if (s[k] == '}') {
                        if (--depth == 0) {
                            out = s.substr(open + 1, k - open - 1);
                            j = k + 1;
                            return true;
                        }
                    }
                }
                return false;
            }
            if (j < s.size() && is_digit(s[j])) {
                out = s.substr(j, 1);
                ++j;
                return true;
            }
            return false;
        };
        std::string a, b;
        if (!grab(a) || !grab(b)) break;
        s = s.substr(0, pos) + a + "/" + b + s.substr(j);
    }

    replace_all(s, "{", "");
    replace_all(s, "}", "");
    // plain "\word" macros: drop the backslash, keep the word
    replace_all(s, "\\", "");
    // math-mode wrapper "$...$"; a lone leading $ stays (currency)
    std::string t = trim(s);
    if (t.size() >= 2 && t.front() == '$' && t.back() == '$')
        t = trim(t.substr(1, t.size() - 2));
    return t;
}

// Strips one layer of symmetric wrappers: quotes, brackets, markdown stars.
bool strip_wrapper(std::string& s) {
    if (s.size() < 2) return false;
    static constexpr std::pair<char, char> kPairs[] = {
        {'"', '"'}, {'\'', '\''}, {'`', '`'}, {'(', ')'}, {'[', ']'}, {'<', '>'}};
    for (const auto& [open, close] : kPairs) {
        if (s.front() == open && s.back() == close) {
            s = trim(std::string_view(s).substr(1, s.size() - 2));
            return true;
        }
    }
    if (s.front() == '*' && s.back() == '*') {
        std::size_t b = 0, e = s.size();
        while (b < e && s[b] == '*') ++b;
        while (e > b && s[e - 1] == '*') --e;
        s = trim(std::string_view(s).substr(b, e - b));
        return true;
    }
    return false;
}

bool is_currency_prefix(std::string_view s, std::size_t& len) {
    static constexpr std::string_view kSymbols[] = {"$", "\xe2\x82\xac" /* euro */,
                                                    "\xc2\xa3" /* pound */,
                                                    "\xc2\xa5" /* yen */};
    for (const auto sym : kSymbols) {
        if (s.substr(0, sym.size()) == sym) {
            len = sym.size();
            return true;
        }
    }
    return false;
}

// "[currency]*[sign]?[currency]*rest[currency]*" -> "[sign]?rest". Only used
// on the numeric path; the caller reverts when nothing numeric comes out.
std::string strip_sign_currency(const std::string& in) {
    std::string_view s = in;
    std::string sign;
    bool progress = true;
    while (progress) {
        progress = false;
        std::size_t len = 0;
        while (is_currency_prefix(s, len)) {
            s.remove_prefix(len);
            progress = true;
        }
        if (sign.empty() && !s.empty() && (s[0] == '+' || s[0] == '-')) {
            sign = s[0];
            s.remove_prefix(1);
            progress = true;
        }
    }
    // trailing currency ("72$")
    bool more = true;
    while (more && !s.empty()) {
        more = false;
        static constexpr std::string_view kTails[] = {"$", "\xe2\x82\xac", "\xc2\xa3",
                                                      "\xc2\xa5"};
        for (const auto sym : kTails) {
            if (s.size() >= sym.size() && s.substr(s.size() - sym.size()) == sym) {
                s.remove_suffix(sym.size());
                more = true;
                break;
            }
        }
    }
    return sign + trim(s);
}

// Trailing "%"/unit words; returns candidates in stripping order, e.g.
// "72 square meters" -> ["72 square meters", "72 square", "72"].
std::vector<std::string> unit_strip_chain(const std::string& s) {
    std::vector<std::string> chain{s};
    std::string cur = s;
    for (int round = 0; round < 3; ++round) {
        std::string next = cur;
        if (!next.empty() && next.back() == '%') {
            next.pop_back();
            next = trim(next);
        } else {
            std::size_t e = next.size();
            // tolerate an abbreviation dot ("kg.")
            if (e > 0 && next[e - 1] == '.') --e;
            std::size_t b = e;
            while (b > 0 && is_alpha(next[b - 1])) --b;
            const std::size_t word_len = e - b;
            if (word_len == 0 || word_len > 12) break;
            next = trim(next.substr(0, b));
        }
        if (next.empty() || next == cur) break;
        chain.push_back(next);
        cur = next;
    }
    return chain;
}

std::string strip_trailing_punct(std::string s) {
    while (!s.empty()) {
        const char c = s.back();
        if (c == '.' || c == ',' || c == ';' || c == ':' || c == '!' || c == '?') {
            s.pop_back();
            continue;
        }
        break;
    }
    return trim(s);
}

// ---- rule 3: last standalone number -----------------------------------------

bool boundary_ok(std::string_view text, std::size_t pos_before, std::size_t pos_after) {
    if (pos_before != std::string_view::npos) {
        const char c = text[pos_before];
        if (is_alnum(c) || c == '.' || c == ',' || c == '/' || c == '_') return false;
    }
    if (pos_after < text.size()) {
        const char c = text[pos_after];
        if (is_alnum(c) || c == '_') return false;
    }
    return true;
}

struct NumberSpan {
    std::size_t begin;
    std::size_t end;
};

// Scans for number tokens: [sign] digits[,ddd]* [.digits] [/digits] or
// [sign] .digits. Returns every boundary-valid span, in order.
std::vector<NumberSpan> number_spans(std::string_view t) {
    std::vector<NumberSpan> spans;
    const std::size_t n = t.size();
    std::size_t i = 0;
    while (i < n) {
        std::size_t start = i;
        std::size_t j = i;
        if (t[j] == '+' || t[j] == '-') {
            if (j + 1 < n && (is_digit(t[j + 1]) || (t[j + 1] == '.' && j + 2 < n && is_digit(t[j + 2])))) {
                ++j;
            } else {
                ++i;
                continue;
            }
        }
        if (j < n && t[j] == '.') {
            if (j + 1 < n && is_digit(t[j + 1])) {
                ++j;
                while (j < n && is_digit(t[j])) ++j;
            } else {
                ++i;
                continue;
            }
        } else if (j < n && is_digit(t[j])) {
            while (j < n && is_digit(t[j])) ++j;
            // validated thousands groups
            while (j < n && t[j] == ',' && j + 3 < n && is_digit(t[j + 1]) &&
                   is_digit(t[j + 2]) && is_digit(t[j + 3])) {
                j += 4;
            }
            if (j < n && t[j] == '.' && j + 1 < n && is_digit(t[j + 1])) {
                ++j;
                while (j < n && is_digit(t[j])) ++j;
            }
            if (j < n && t[j] == '/' && j + 1 < n && is_digit(t[j + 1])) {
                std::size_t k = j + 1;
                while (k < n && is_digit(t[k])) ++k;
                // only accept the fraction if it ends at a boundary
                if (k >= n || !is_alnum(t[k])) j = k;
            }
        } else {
            ++i;
            continue;
        }
        const std::size_t before = start == 0 ? std::string_view::npos : start - 1;
        if (boundary_ok(t, before, j)) spans.push_back({start, j});
        i = j > i ? j : i + 1;
    }
    return spans;
}

// ---- rule 2: last \boxed{...} ------------------------------------------------

std::optional<std::string> last_boxed_content(std::string_view t) {
    const std::string needle = "boxed{";
    std::size_t best = std::string_view::npos;
    std::size_t pos = t.find(needle);
    while (pos != std::string_view::npos) {
        best = pos;
        pos = t.find(needle, pos + 1);
    }
    if (best == std::string_view::npos) return std::nullopt;
    const std::size_t open = best + needle.size() - 1;
    int depth = 0;
    for (std::size_t j = open; j < t.size(); ++j) {
        if (t[j] == '{') ++depth;
        else if (t[j] == '}') {
            if (--depth == 0) return std::string(t.substr(open + 1, j - open - 1));
        }
    }
    return std::nullopt; // unbalanced, rule fails
}

} // namespace

Rational Rational::make(std::int64_t num, std::int64_t den) {
    if (den == 0) throw DataError("rational with zero denominator");
    if (den < 0) {
        num = -num;
        den = -den;
    }
    const std::int64_t g = std::gcd(num < 0 ? -num : num, den);
    if (g > 1) {
        num /= g;
        den /= g;
    }
    return Rational{num, den};
}

std::optional<CanonicalAnswer> canonicalize(std::string_view candidate) {
    std::string s = trim(candidate);
    if (s.empty()) return std::nullopt;

    s = scrub_latex(s);
    s = trim(s);
    while (strip_wrapper(s)) {
    }
    s = strip_trailing_punct(s);
    if (s.empty()) return std::nullopt;

    // Numeric attempt: sign/currency normalization, thousands separators,
    // then the unit-strip chain. Commits only when a parse succeeds.
    const std::string base = strip_sign_currency(s);
    for (const std::string& step : unit_strip_chain(base)) {
        const std::string cleaned = strip_trailing_punct(strip_thousands(step));
        if (cleaned.empty()) continue;
        if (auto num = parse_numeric(cleaned)) {
            CanonicalAnswer ans;
            ans.raw = cleaned;
            ans.numeric = *num;
            return ans;
        }
    }

    CanonicalAnswer ans;
    ans.raw = s;
    return ans;
}

std::optional<CanonicalAnswer> extract_final_answer(std::string_view text) {
    // rule 1: after the last "####", cut at end of line
    const auto marker = text.rfind("####");
    if (marker != std::string_view::npos) {
        std::string_view rest = text.substr(marker + 4);
        const auto nl = rest.find('\n');
        if (nl != std::string_view::npos) rest = rest.substr(0, nl);
        if (auto ans = canonicalize(rest)) return ans;
    }

    // rule 2: last balanced \boxed{...}
    if (auto boxed = last_boxed_content(text)) {
        if (auto ans = canonicalize(*boxed)) return ans;
    }

    // rule 3: last standalone number that canonicalizes to a numeric
    const auto spans = number_spans(text);
    for (auto it = spans.rbegin(); it != spans.rend(); ++it) {
        const auto ans = canonicalize(text.substr(it->begin, it->end - it->begin));
        if (ans && ans->is_numeric()) return ans;
    }
    return std::nullopt;
}

CanonicalAnswer make_gold(std::string_view gold_text) {
    auto ans = canonicalize(gold_text);
    if (!ans) throw DataError("gold answer normalizes to nothing: \"" + std::string(gold_text) + "\"");
    return *ans;
}

namespace {

bool numeric_equal(const NumericValue& a, const NumericValue& b, double tolerance) {
    if (a.exact && b.exact) {
        // cross-multiplied exact comparison; 128-bit to dodge overflow
        const __int128 lhs = static_cast<__int128>(a.rat.num) * b.rat.den;
        const __int128 rhs = static_cast<__int128>(b.rat.num) * a.rat.den;
        return lhs == rhs;
    }
    return std::fabs(a.value() - b.value()) <= tolerance;
}

} // namespace

int binary_reward(std::string_view prediction, const CanonicalAnswer& gold, double tolerance) {
    const auto extracted = extract_final_answer(prediction);
    if (!extracted) return 0;
    if (extracted->is_numeric() && gold.is_numeric())
        return numeric_equal(*extracted->numeric, *gold.numeric, tolerance) ? 1 : 0;
    return ascii_lower(extracted->raw) == ascii_lower(gold.raw) ? 1 : 0;
}

} // namespace fuzzsel::reward
