// SPDX-License-Identifier: Apache-2.0
#include "fuzzsel/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fuzzsel/errors.hpp"

namespace fuzzsel::analysis {

std::vector<double> average_ranks(std::span<const double> values) {
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });

    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
        // ties share the average of their 1-based positions
        const double avg = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
        i = j + 1;
    }
    return ranks;
}

namespace {

bool is_constant(std::span<const double> v) {
    for (const double x : v)
        if (x != v.front()) return false;
    return true;
}

std::optional<double> pearson_of(std::span<const double> x, std::span<const double> y) {
    const std::size_t n = x.size();
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) return std::nullopt;
    return sxy / std::sqrt(sxx * syy);
}

// tau-b with explicit tie counts; quadratic, fine at corpus scale.
std::optional<double> kendall_tau_b(std::span<const double> x, std::span<const double> y) {
    const std::size_t n = x.size();
    std::uint64_t concordant = 0, discordant = 0, ties_x = 0, ties_y = 0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double dx = x[i] - x[j];
            const double dy = y[i] - y[j];
            if (dx == 0.0 && dy == 0.0) continue; // tied in both, ignored
            if (dx == 0.0) ++ties_x;
            else if (dy == 0.0) ++ties_y;
            else if ((dx > 0.0) == (dy > 0.0)) ++concordant;
            else ++discordant;
        }
    }
    const long double cd = static_cast<long double>(concordant) + discordant;
    const long double denom = std::sqrt((cd + ties_x) * (cd + ties_y));
    if (denom == 0.0L) return std::nullopt;
    return static_cast<double>((static_cast<long double>(concordant) -
                                static_cast<long double>(discordant)) /
                               denom);
}

} // namespace

SimilarityResult rank_similarity(std::span<const double> s_scores,
                                 std::span<const double> p_scores) {
    if (s_scores.size() != p_scores.size())
        throw DataError("rank_similarity: vectors are not aligned");

    SimilarityResult result;
    result.m_examples = s_scores.size();
    if (result.m_examples < 2) {
        result.not_computable_reason = "fewer than two examples";
        return result;
    }
    if (is_constant(s_scores) || is_constant(p_scores)) {
        result.not_computable_reason = "constant input vector";
        return result;
    }

    const auto rs = average_ranks(s_scores);
    const auto rp = average_ranks(p_scores);
    result.spearman = pearson_of(rs, rp);
    result.pearson = pearson_of(s_scores, p_scores);
    result.kendall = kendall_tau_b(s_scores, p_scores);
    if (!result.spearman) result.not_computable_reason = "degenerate rank variance";
    return result;
}

bool Band::contains(double v) const {
    const bool lo_ok = lo_closed ? v >= lo : v > lo;
    const bool hi_ok = hi_closed ? v <= hi : v < hi;
    return lo_ok && hi_ok;
}

std::vector<Band> default_bands(const std::string& var) {
    return {
        Band{0.0, 0.0, true, true, var + "=0"},
        Band{0.0, 0.15, true, false, "[0,0.15)"},
        Band{0.85, 1.0, false, true, "(0.85,1]"},
        Band{1.0, 1.0, true, true, var + "=1"},
    };
}

std::vector<BandFraction> accuracy_distribution(std::span<const double> p_scores,
                                                std::span<const Band> bands) {
    if (p_scores.empty()) throw DataError("accuracy_distribution: no scores");
    for (const auto& b : bands)
        if (!(b.lo <= b.hi)) throw ConfigError("malformed band: " + b.label);

    std::vector<BandFraction> out;
    out.reserve(bands.size());
    for (const auto& band : bands) {
        BandFraction f;
        f.band = band;
        for (const double p : p_scores)
            if (band.contains(p)) ++f.count;
        f.percent = 100.0 * static_cast<double>(f.count) /
                    static_cast<double>(p_scores.size());
        out.push_back(std::move(f));
    }
    return out;
}

std::string cost_mode_name(CostMode m) {
    return m == CostMode::accuracy ? "accuracy" : "confidence";
}

CostReport cost_model(std::size_t m, int n, CostMode mode) {
    if (m < 1) throw ConfigError("cost_model: m must be >= 1");
    if (n < 1) throw ConfigError("cost_model: n must be >= 1");
    CostReport r;
    r.mode = mode;
    r.request_count = mode == CostMode::accuracy
                          ? static_cast<std::uint64_t>(m) * static_cast<std::uint64_t>(n)
                          : static_cast<std::uint64_t>(m);
    return r;
}

CostReport cost_from_stats(const inference::BackendStats& stats, CostMode mode,
                           double wall_seconds) {
    CostReport r;
    r.mode = mode;
    r.request_count = mode == CostMode::accuracy ? stats.generation_requests.load()
                                                 : stats.scoring_requests.load();
    r.generated_token_count = stats.generated_tokens.load();
    r.scored_token_count = stats.scored_tokens.load();
    r.wall_seconds = wall_seconds;
    return r;
}

} // namespace fuzzsel::analysis
