// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fuzzsel/estimators.hpp"

namespace fuzzsel::selection {

enum class Strategy { full, high_conf, low_conf, random, acc_filter, ufo };
enum class MuMode { s_mean, exp_conf_mean };

Strategy parse_strategy(const std::string& name);
std::string strategy_name(Strategy s);
MuMode parse_mu_mode(const std::string& name);
std::string mu_mode_name(MuMode m);

struct SelectionConfig {
    Strategy strategy = Strategy::ufo;
    double fraction = 0.10; // in (0, 1]
    std::uint64_t seed = 0;
    int k_bins = 10;
    int n_random_runs = 5;
    MuMode mu_mode = MuMode::s_mean;

    void validate() const;
};

// s = exp(conf), the geometric mean of the token probabilities. conf must be
// finite and <= 0; the result is floored at the smallest normal double so s
// stays strictly positive.
double certainty(double conf);

// Arithmetic mean over the candidate set's s values. Empty input is an error.
double mean_certainty(std::span<const double> s_values);

// 1 - (s - mu)^2. Maximal when certainty sits at the dataset mean.
double fuzziness_score(double s, double mu);

struct SelectedEntry {
    std::string id;
    std::optional<double> s;
    std::optional<double> p;
    std::optional<double> fuzziness;
};

struct SelectionReport {
    Strategy strategy;
    double fraction;
    std::uint64_t seed;
    int k_bins;
    MuMode mu_mode;
    std::optional<double> mu;        // set for ufo
    std::optional<int> run_index;    // set for random runs
    std::size_t candidate_count = 0; // M used for ceil(fraction * M)
    std::vector<SelectedEntry> selected;
    std::string config_hash;
    std::string input_table_hash;
};

// Applies one strategy to a score table:
//   full       every scored id, table order
//   high_conf  top-ceil(fraction*M) by s descending
//   low_conf   top-ceil(fraction*M) by s ascending
//   random     ceil(fraction*M) without replacement; one report per run
//   acc_filter every id with 0 < p < 1 (drops exactly the 0%/100% rows)
//   ufo        top-ceil(fraction*M) by fuzziness 1-(s-mu)^2 descending
// Ties everywhere break by ascending example_id. Rows missing the needed
// score are excluded from the candidate set; a table with no usable column
// is a configuration error.
std::vector<SelectionReport> select(const estimators::ScoreTable& table,
                                    const SelectionConfig& config,
                                    const std::string& input_table_hash = "");

struct BinAssignment {
    std::string example_id;
    int bin_index; // 0 = lowest keys
};

// Stable sort by key ascending (ties by id), then split into k contiguous
// bins whose sizes differ by at most one; low-index bins take the remainder.
std::vector<BinAssignment> bin_by_difficulty(
    std::vector<std::pair<std::string, double>> keyed, int k = 10);

std::string report_to_json(const SelectionReport& report);
SelectionReport report_from_json_file(const std::string& path);

} // namespace fuzzsel::selection
