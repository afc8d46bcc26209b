// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fuzzsel/inference.hpp"

namespace fuzzsel::analysis {

// Rank agreement between two aligned score vectors. A coefficient is absent
// (not NaN) when it is undefined: fewer than two points or a constant input.
struct SimilarityResult {
    std::optional<double> spearman; // headline, average-rank tie handling
    std::optional<double> pearson;
    std::optional<double> kendall;  // tau-b
    std::size_t m_examples = 0;
    std::string not_computable_reason; // empty when all defined

    bool computable() const { return spearman.has_value(); }
};

SimilarityResult rank_similarity(std::span<const double> s_scores,
                                 std::span<const double> p_scores);

// Average ranks (1-based, ties averaged). Exposed for the analysis report.
std::vector<double> average_ranks(std::span<const double> values);

// Closed/open interval on p. A point band has lo == hi, both closed.
struct Band {
    double lo;
    double hi;
    bool lo_closed;
    bool hi_closed;
    std::string label;

    bool contains(double v) const;
};

// {p=0}, [0,0.15), (0.85,1], {p=1}; `var` only changes the labels.
std::vector<Band> default_bands(const std::string& var = "p");

struct BandFraction {
    Band band;
    std::size_t count = 0;
    double percent = 0.0;
};

// Fraction of examples per band, as percentages. Bands may overlap; each is
// counted independently.
std::vector<BandFraction> accuracy_distribution(std::span<const double> p_scores,
                                                std::span<const Band> bands);

enum class CostMode { accuracy, confidence };
std::string cost_mode_name(CostMode m);

struct CostReport {
    CostMode mode;
    std::uint64_t request_count = 0;
    std::uint64_t generated_token_count = 0;
    std::uint64_t scored_token_count = 0;
    double wall_seconds = 0.0; // informational only, never asserted
};

// Analytic request counts: accuracy issues m*n requests, confidence m.
CostReport cost_model(std::size_t m, int n, CostMode mode);

// Counts observed by an instrumented backend.
CostReport cost_from_stats(const inference::BackendStats& stats, CostMode mode,
                           double wall_seconds = 0.0);

} // namespace fuzzsel::analysis
