// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "fuzzsel/corpus.hpp"
#include "fuzzsel/inference.hpp"

namespace fuzzsel::estimators {

enum class ConfidenceMode { teacher_forced, generate_once };
enum class Which { accuracy, confidence, both };

ConfidenceMode parse_mode(const std::string& name);
std::string mode_name(ConfidenceMode m);
Which parse_which(const std::string& name);
std::string which_name(Which w);

struct EstimatorConfig {
    int n_samples = 16;
    double temperature = 1.0;
    ConfidenceMode mode = ConfidenceMode::teacher_forced;
    int max_new_tokens = 512;
    int max_target_tokens = 512;
    std::uint64_t run_seed = 0;
    std::string prompt_template = "{prompt}"; // must contain {prompt}
    std::optional<double> top_p;

    std::string apply_template(const std::string& prompt) const;
    void validate() const;
};

// Sampling accuracy p = mean of N binary rewards.
struct AccuracyEstimate {
    std::string example_id;
    std::vector<int> rewards; // each 0 or 1, length n_samples
    double p = 0.0;
    int n_samples = 0;
    double temperature = 1.0;
};

// Average log-probability over the scored (or generated) tokens.
struct ConfidenceEstimate {
    std::string example_id;
    std::vector<double> token_logprobs;
    std::size_t t_count = 0;
    double conf = 0.0; // mean of token_logprobs, <= 0
    ConfidenceMode mode = ConfidenceMode::teacher_forced;
    bool truncated = false;
};

AccuracyEstimate estimate_sampling_accuracy(const corpus::Example& example,
                                            inference::Backend& backend,
                                            const EstimatorConfig& config);

// teacher_forced scores the reference solution in one call (requires echo
// scoring and a reference); generate_once scores a single greedy generation
// with logprobs. Empty scored sequences are an error, never conf = 0.
ConfidenceEstimate estimate_confidence(const corpus::Example& example,
                                       inference::Backend& backend,
                                       const EstimatorConfig& config);

// One score-table row. Missing estimates are absent, not zero.
struct ScoreRow {
    std::string example_id;
    std::optional<double> p;
    std::optional<std::vector<int>> rewards;
    std::optional<double> conf;
    std::optional<double> s; // exp(conf)
    std::optional<std::int64_t> t_count;
    std::optional<ConfidenceMode> mode;
    bool truncated = false;
};

inline constexpr int kScoreTableSchemaVersion = 1;

struct ScoreTable {
    std::vector<ScoreRow> rows;
    std::string config_hash;
    int schema_version = kScoreTableSchemaVersion;

    const ScoreRow* find(const std::string& id) const;
};

void save_score_table(const ScoreTable& table, const std::string& path);
// Derives s from conf when a row lacks it; validates s == exp(conf) else.
ScoreTable load_score_table(const std::string& path);

struct RunOptions {
    int max_inflight = 16;
    // Partial-row journal; completed rows are appended here as they finish so
    // interrupted runs resume without re-scoring. Empty disables journaling.
    std::string journal_path;
    std::string config_hash; // stamped into rows and the journal
};

struct CorpusEstimateResult {
    ScoreTable table;
    std::vector<std::pair<std::string, std::string>> failures; // id -> reason
    bool transport_failures = false;
    std::size_t resumed = 0;            // rows reused from the journal
    std::size_t stale_journal_rows = 0; // journal rows from another config
};

// Scores every example, parallel up to max_inflight, assembly in corpus
// order regardless of scheduling. Per-example failures are collected, not
// fatal; callers decide whether unscored examples fail the run.
CorpusEstimateResult estimate_corpus(const corpus::Corpus& corpus, inference::Backend& backend,
                                     Which which, const EstimatorConfig& config,
                                     const RunOptions& options);

} // namespace fuzzsel::estimators
