// SPDX-License-Identifier: Apache-2.0
//
// Acceptance suite: runs every release criterion at its stated tolerance and
// prints one PASS/FAIL line per criterion. Exit code is the failure count.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fuzzsel/analysis.hpp"
#include "fuzzsel/corpus.hpp"
#include "fuzzsel/estimators.hpp"
#include "fuzzsel/hash.hpp"
#include "fuzzsel/inference.hpp"
#include "fuzzsel/jsonl.hpp"
#include "fuzzsel/pipeline.hpp"
#include "fuzzsel/reward.hpp"
#include "fuzzsel/selection.hpp"
#include "helpers.hpp"
#include "reward_cases.hpp"

using namespace fuzzsel;
namespace fs = std::filesystem;

namespace {

struct Checker {
    std::ostringstream detail;
    std::size_t failures = 0;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            ++failures;
            if (detail.tellp() > 0) detail << "; ";
            detail << what;
        }
    }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

estimators::EstimatorConfig default_estimator(std::uint64_t seed) {
    estimators::EstimatorConfig cfg;
    cfg.n_samples = 16;
    cfg.temperature = 1.0;
    cfg.run_seed = seed;
    return cfg;
}

// ---- 1. confidence oracle equivalence ------------------------------------------

void criterion_confidence_oracle(Checker& c) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto corpus = testutil::make_corpus(1000);
    const auto d = testutil::uniform_difficulty(corpus, 101);
    auto backend = testutil::make_synthetic(corpus, d);

    estimators::RunOptions opts;
    opts.max_inflight = 16;
    opts.config_hash = "acc1";
    const auto result = estimators::estimate_corpus(corpus, *backend,
                                                    estimators::Which::confidence,
                                                    default_estimator(1), opts);
    c.require(result.failures.empty(), "estimation failures");
    c.require(result.table.rows.size() == 1000, "expected 1000 rows");

    double worst = 0.0;
    for (const auto& row : result.table.rows) {
        const double s_true = inference::synthetic_certainty(d.at(row.example_id));
        worst = std::max(worst, std::fabs(*row.conf - std::log(s_true)));
    }
    c.require(worst <= 1e-9, "max |Conf - ln(s_true)| = " + std::to_string(worst));

    const double wall = seconds_since(t0);
    c.require(wall < 5.0, "took " + std::to_string(wall) + "s (limit 5s)");
    c.detail << (c.failures == 0 ? "max deviation " + std::to_string(worst) + ", " +
                                      std::to_string(wall) + "s"
                                 : "");
}

// ---- 2. sampling-accuracy statistics --------------------------------------------

void criterion_sampling_statistics(Checker& c) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto corpus = testutil::make_corpus(2000);
    const auto d = testutil::uniform_difficulty(corpus, 202);
    auto backend = testutil::make_synthetic(corpus, d);

    estimators::RunOptions opts;
    opts.max_inflight = 16;
    opts.config_hash = "acc2";
    const auto result = estimators::estimate_corpus(corpus, *backend,
                                                    estimators::Which::accuracy,
                                                    default_estimator(2), opts);
    c.require(result.table.rows.size() == 2000, "expected 2000 rows");

    std::size_t off_grid = 0, outside_band = 0;
    for (const auto& row : result.table.rows) {
        const double scaled = *row.p * 16.0;
        if (std::fabs(scaled - std::round(scaled)) > 1e-12) ++off_grid;
        const double q = 1.0 - d.at(row.example_id);
        const double sigma = std::sqrt(q * (1.0 - q) / 16.0);
        if (std::fabs(*row.p - q) > 3.0 * sigma) ++outside_band;
    }
    c.require(off_grid == 0, std::to_string(off_grid) + " estimates off the k/16 grid");
    const double outside_fraction = static_cast<double>(outside_band) / 2000.0;
    c.require(outside_fraction <= 0.01,
              "3-sigma band violated by " + std::to_string(100.0 * outside_fraction) + "%");

    const double wall = seconds_since(t0);
    c.require(wall < 30.0, "took " + std::to_string(wall) + "s (limit 30s)");
    if (c.failures == 0)
        c.detail << outside_band << "/2000 outside 3 sigma, " << wall << "s";
}

// ---- 3. ufo brute-force equivalence ----------------------------------------------

estimators::ScoreTable table_from_s(const std::vector<double>& s_values) {
    estimators::ScoreTable t;
    t.config_hash = "acc";
    for (std::size_t i = 0; i < s_values.size(); ++i) {
        estimators::ScoreRow row;
        row.example_id = testutil::test_id(i);
        row.s = s_values[i];
        t.rows.push_back(std::move(row));
    }
    return t;
}

std::set<std::string> ufo_ids(const estimators::ScoreTable& t, double fraction = 0.10) {
    selection::SelectionConfig cfg;
    cfg.strategy = selection::Strategy::ufo;
    cfg.fraction = fraction;
    const auto reports = selection::select(t, cfg);
    std::set<std::string> out;
    for (const auto& e : reports[0].selected) out.insert(e.id);
    return out;
}

// Exhaustive argtop by repeated max extraction with the documented tie-break.
std::set<std::string> ufo_brute_force(const estimators::ScoreTable& t, double fraction) {
    double mu = 0.0;
    for (const auto& row : t.rows) mu += *row.s;
    mu /= static_cast<double>(t.rows.size());

    struct Item {
        std::string id;
        double fuzz;
        bool taken = false;
    };
    std::vector<Item> items;
    for (const auto& row : t.rows)
        items.push_back({row.example_id, 1.0 - (*row.s - mu) * (*row.s - mu), false});

    const auto k = static_cast<std::size_t>(
        std::ceil(fraction * static_cast<double>(items.size()) - 1e-9));
    std::set<std::string> out;
    for (std::size_t round = 0; round < k; ++round) {
        std::size_t best = items.size();
        for (std::size_t i = 0; i < items.size(); ++i) {
            if (items[i].taken) continue;
            if (best == items.size() || items[i].fuzz > items[best].fuzz ||
                (items[i].fuzz == items[best].fuzz && items[i].id < items[best].id))
                best = i;
        }
        items[best].taken = true;
        out.insert(items[best].id);
    }
    return out;
}

void criterion_ufo_brute_force(Checker& c) {
    const auto t0 = std::chrono::steady_clock::now();
    std::size_t mismatches = 0;
    for (std::uint64_t trial = 0; trial < 1000; ++trial) {
        DetRng rng(derive_seed(303, "ufo-corpus", "", trial));
        const std::size_t m = 10 + rng.below(191); // M <= 200
        std::vector<double> s;
        s.reserve(m);
        for (std::size_t i = 0; i < m; ++i) s.push_back(0.001 + 0.998 * rng.next_unit());
        const auto t = table_from_s(s);
        if (ufo_ids(t) != ufo_brute_force(t, 0.10)) ++mismatches;
    }
    c.require(mismatches == 0, std::to_string(mismatches) + "/1000 corpora mismatched");
    const double wall = seconds_since(t0);
    c.require(wall < 10.0, "took " + std::to_string(wall) + "s (limit 10s)");
    if (c.failures == 0) c.detail << "1000/1000 corpora matched, " << wall << "s";
}

// ---- 4. shift invariance -----------------------------------------------------------

void criterion_shift_invariance(Checker& c) {
    std::size_t violations = 0;
    for (std::uint64_t trial = 0; trial < 100; ++trial) {
        DetRng rng(derive_seed(404, "shift-corpus", "", trial));
        const std::size_t m = 20 + rng.below(181);
        std::vector<double> conf;
        conf.reserve(m);
        for (std::size_t i = 0; i < m; ++i) conf.push_back(-4.0 * rng.next_unit());

        auto shifted_table = [&](double shift) {
            std::vector<double> s;
            s.reserve(m);
            for (const double v : conf) s.push_back(std::exp(v + shift));
            return table_from_s(s);
        };
        const auto baseline = ufo_ids(shifted_table(0.0));
        for (const double shift : {-5.0, -1.0, 0.5, 3.0})
            if (ufo_ids(shifted_table(shift)) != baseline) ++violations;
    }
    c.require(violations == 0, std::to_string(violations) + " shifted selections changed");
    if (c.failures == 0) c.detail << "400 shifted selections identical";
}

// ---- 5. acc_filter against the published distribution ------------------------------

void criterion_acc_filter_rows(Checker& c) {
    struct RowSpec {
        const char* name;
        double p0_percent;
        double p1_percent;
        double expected_retention;
    };
    const std::vector<RowSpec> rows = {
        {"Qwen2.5-7B", 1.36, 49.07, 49.57},
        {"Mistral", 20.02, 3.12, 76.86},
    };
    const std::size_t m = 10000;
    for (const auto& spec : rows) {
        const auto n0 = static_cast<std::size_t>(std::llround(spec.p0_percent / 100.0 * m));
        const auto n1 = static_cast<std::size_t>(std::llround(spec.p1_percent / 100.0 * m));
        estimators::ScoreTable t;
        t.config_hash = "acc5";
        for (std::size_t i = 0; i < m; ++i) {
            estimators::ScoreRow row;
            row.example_id = testutil::test_id(i);
            row.p = i < n0 ? 0.0 : (i < n0 + n1 ? 1.0 : 0.5);
            t.rows.push_back(std::move(row));
        }
        selection::SelectionConfig cfg;
        cfg.strategy = selection::Strategy::acc_filter;
        const auto report = selection::select(t, cfg)[0];

        const double expected_count = spec.expected_retention / 100.0 * m;
        const double diff = std::fabs(static_cast<double>(report.selected.size()) -
                                      expected_count);
        c.require(diff <= 1.0, std::string(spec.name) + " retention " +
                                   std::to_string(report.selected.size()) + " vs expected " +
                                   std::to_string(expected_count));
        if (c.failures == 0)
            c.detail << spec.name << " " << 100.0 * report.selected.size() / m << "% ";
    }
}

// ---- 6. binning protocol ------------------------------------------------------------

void criterion_binning(Checker& c) {
    for (const std::size_t m : {std::size_t{20}, std::size_t{23}, std::size_t{1319}}) {
        DetRng rng(derive_seed(606, "bins", "", m));
        std::vector<std::pair<std::string, double>> keyed;
        keyed.reserve(m);
        for (std::size_t i = 0; i < m; ++i)
            keyed.emplace_back(testutil::test_id(i), rng.below(17) / 16.0); // heavy ties

        const auto bins = selection::bin_by_difficulty(keyed, 10);
        c.require(bins.size() == m, "assignment count");

        // balanced-partition oracle: sort, slice, compare exactly
        auto sorted = keyed;
        std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
            if (a.second != b.second) return a.second < b.second;
            return a.first < b.first;
        });
        const std::size_t base = m / 10, rem = m % 10;
        std::size_t pos = 0;
        bool slices_match = true;
        std::vector<std::size_t> sizes(10, 0);
        for (int b = 0; b < 10; ++b) {
            const std::size_t size = base + (static_cast<std::size_t>(b) < rem ? 1 : 0);
            for (std::size_t i = 0; i < size; ++i, ++pos) {
                if (bins[pos].example_id != sorted[pos].first || bins[pos].bin_index != b)
                    slices_match = false;
            }
            sizes[static_cast<std::size_t>(b)] = size;
        }
        c.require(slices_match, "M=" + std::to_string(m) + " differs from the oracle");

        const auto [lo, hi] = std::minmax_element(sizes.begin(), sizes.end());
        c.require(*hi - *lo <= 1, "M=" + std::to_string(m) + " bins unbalanced");

        // deterministic under ties: a reversed input yields the same assignment
        auto reversed = keyed;
        std::reverse(reversed.begin(), reversed.end());
        const auto again = selection::bin_by_difficulty(reversed, 10);
        bool deterministic = again.size() == bins.size();
        for (std::size_t i = 0; deterministic && i < bins.size(); ++i)
            deterministic = again[i].example_id == bins[i].example_id &&
                            again[i].bin_index == bins[i].bin_index;
        c.require(deterministic, "M=" + std::to_string(m) + " tie placement unstable");
    }
    if (c.failures == 0) c.detail << "M in {20,23,1319} match the oracle";
}

// ---- 7. cost accounting ---------------------------------------------------------------

void criterion_cost_accounting(Checker& c) {
    for (const std::size_t m : {std::size_t{1}, std::size_t{7}, std::size_t{100}}) {
        const auto corpus = testutil::make_corpus(m);
        const auto d = testutil::uniform_difficulty(corpus, 707);

        estimators::RunOptions opts;
        opts.max_inflight = 8;
        opts.config_hash = "acc7";

        auto conf_backend = testutil::make_synthetic(corpus, d);
        estimators::estimate_corpus(corpus, *conf_backend, estimators::Which::confidence,
                                    default_estimator(7), opts);
        const auto conf_measured = analysis::cost_from_stats(
            conf_backend->stats(), analysis::CostMode::confidence);
        c.require(conf_measured.request_count == m,
                  "confidence requests for M=" + std::to_string(m));

        auto acc_backend = testutil::make_synthetic(corpus, d);
        estimators::estimate_corpus(corpus, *acc_backend, estimators::Which::accuracy,
                                    default_estimator(7), opts);
        const auto acc_measured =
            analysis::cost_from_stats(acc_backend->stats(), analysis::CostMode::accuracy);
        c.require(acc_measured.request_count == m * 16,
                  "accuracy requests for M=" + std::to_string(m));
        c.require(acc_measured.request_count == 16 * conf_measured.request_count,
                  "ratio != 16 for M=" + std::to_string(m));

        // analytic model agrees with the instrumented counters
        c.require(analysis::cost_model(m, 16, analysis::CostMode::accuracy).request_count ==
                      acc_measured.request_count,
                  "analytic accuracy count");
        c.require(analysis::cost_model(m, 16, analysis::CostMode::confidence).request_count ==
                      conf_measured.request_count,
                  "analytic confidence count");
    }
    if (c.failures == 0) c.detail << "ratio 16 for M in {1,7,100}";
}

// ---- 8. similarity direction ------------------------------------------------------------

std::vector<double> brute_ranks(const std::vector<double>& v) {
    std::vector<double> ranks(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        std::size_t less = 0, equal = 0;
        for (std::size_t j = 0; j < v.size(); ++j) {
            if (v[j] < v[i]) ++less;
            else if (v[j] == v[i]) ++equal;
        }
        ranks[i] = static_cast<double>(less) + (static_cast<double>(equal) + 1.0) / 2.0;
    }
    return ranks;
}

double brute_pearson(const std::vector<double>& x, const std::vector<double>& y) {
    long double mx = 0.0L, my = 0.0L;
    const std::size_t n = x.size();
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= static_cast<long double>(n);
    my /= static_cast<long double>(n);
    long double sxy = 0.0L, sxx = 0.0L, syy = 0.0L;
    for (std::size_t i = 0; i < n; ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    return static_cast<double>(sxy / std::sqrt(sxx * syy));
}

void criterion_similarity(Checker& c) {
    const auto corpus = testutil::make_corpus(1000);
    const auto d = testutil::uniform_difficulty(corpus, 808);
    auto backend = testutil::make_synthetic(corpus, d);

    estimators::RunOptions opts;
    opts.max_inflight = 16;
    opts.config_hash = "acc8";
    const auto result = estimators::estimate_corpus(
        corpus, *backend, estimators::Which::both, default_estimator(8), opts);
    c.require(result.table.rows.size() == 1000, "expected 1000 rows");

    std::vector<double> s, p;
    for (const auto& row : result.table.rows) {
        s.push_back(*row.s);
        p.push_back(*row.p);
    }
    const auto sim = analysis::rank_similarity(s, p);
    c.require(sim.computable(), "similarity not computable");
    c.require(*sim.spearman >= 0.8,
              "spearman " + std::to_string(*sim.spearman) + " below 0.8");

    const double oracle = brute_pearson(brute_ranks(s), brute_ranks(p));
    c.require(std::fabs(*sim.spearman - oracle) <= 1e-9,
              "module and oracle disagree: " + std::to_string(*sim.spearman) + " vs " +
                  std::to_string(oracle));
    if (c.failures == 0) c.detail << "spearman " << *sim.spearman;
}

// ---- 9. reward grammar --------------------------------------------------------------------

void criterion_reward_grammar(Checker& c) {
    const auto& cases = testutil::reward_cases();
    c.require(cases.size() >= 50, "case table smaller than 50");

    std::size_t wrong = 0, non_idempotent = 0;
    for (const auto& rc : cases) {
        const auto gold = reward::make_gold(rc.gold);
        if (reward::binary_reward(rc.prediction, gold) != rc.expected) ++wrong;

        const auto extracted = reward::extract_final_answer(rc.prediction);
        if (extracted) {
            const auto again = reward::canonicalize(extracted->raw);
            if (!again || again->raw != extracted->raw ||
                again->is_numeric() != extracted->is_numeric())
                ++non_idempotent;
        }
        const auto gold_again = reward::canonicalize(gold.raw);
        if (!gold_again || gold_again->raw != gold.raw) ++non_idempotent;
    }
    c.require(wrong == 0, std::to_string(wrong) + " graded wrong");
    c.require(non_idempotent == 0, std::to_string(non_idempotent) + " not idempotent");
    if (c.failures == 0) c.detail << cases.size() << " cases, 100% pass, idempotent";
}

// ---- 10. end-to-end determinism --------------------------------------------------------------

void criterion_end_to_end(Checker& c) {
    testutil::TempDir dir("acceptance_e2e");
    testutil::write_corpus_file(dir.str("corpus.jsonl"), 80);
    const std::string backend = "synthetic:demo?seed=11&tokens=4";

    auto run_pipeline = [&](const std::string& tag) -> bool {
        std::ostringstream out, err;
        const std::string base = dir.str(tag);
        const std::vector<std::vector<std::string>> commands = {
            {"score", "--corpus", dir.str("corpus.jsonl"), "--backend", backend, "--which",
             "both", "--n", "8", "--seed", "21", "--out-dir", base},
            {"select", "--scores", base + "/scores.jsonl", "--corpus",
             dir.str("corpus.jsonl"), "--strategy", "ufo", "--seed", "21", "--out-dir",
             base + "/sel"},
            {"analyze", "--scores", base + "/scores.jsonl", "--out-dir", base + "/rep"},
            {"export", "--corpus", dir.str("corpus.jsonl"), "--selection",
             base + "/sel/selection_ufo.json", "--out", base + "/exported.jsonl"},
        };
        for (const auto& cmd : commands)
            if (pipeline::run_cli(cmd, out, err) != 0) {
                c.detail << "command failed: " << err.str();
                return false;
            }
        return true;
    };

    c.require(run_pipeline("a"), "pipeline run A failed");
    c.require(run_pipeline("b"), "pipeline run B failed");
    if (c.failures > 0) return;

    for (const std::string rel :
         {"/scores.jsonl", "/sel/selection_ufo.json", "/sel/selection_ufo_subset.jsonl",
          "/sel/selection_manifest.json", "/rep/similarity.json", "/rep/distribution.json",
          "/rep/cost.json", "/rep/analysis.txt", "/exported.jsonl"}) {
        c.require(read_file(dir.str("a") + rel) == read_file(dir.str("b") + rel),
                  "artifact differs between runs: " + rel);
    }

    // warm-cache rerun in directory A: identical bytes, zero backend calls
    std::ostringstream out, err;
    const int rc = pipeline::run_cli({"score", "--corpus", dir.str("corpus.jsonl"),
                                      "--backend", backend, "--which", "both", "--n", "8",
                                      "--seed", "21", "--out-dir", dir.str("a")},
                                     out, err);
    c.require(rc == 0, "warm rerun failed: " + err.str());
    const json stats = json::parse(read_file(dir.str("a/run_stats.json")));
    c.require(stats["backend_calls"].get<std::uint64_t>() == 0,
              "warm rerun made " + std::to_string(stats["backend_calls"].get<std::uint64_t>()) +
                  " backend calls");
    c.require(read_file(dir.str("a/scores.jsonl")) == read_file(dir.str("b/scores.jsonl")),
              "warm rerun changed the score table");
    if (c.failures == 0) c.detail << "byte-identical artifacts, warm rerun 0 backend calls";
}

} // namespace

int main() {
    struct Criterion {
        int number;
        const char* name;
        std::function<void(Checker&)> fn;
    };
    const std::vector<Criterion> criteria = {
        {1, "confidence oracle equivalence (M=1000, 1e-9)", criterion_confidence_oracle},
        {2, "sampling-accuracy statistics (M=2000, N=16)", criterion_sampling_statistics},
        {3, "ufo brute-force equivalence (1000 corpora)", criterion_ufo_brute_force},
        {4, "shift invariance of the ufo selection", criterion_shift_invariance},
        {5, "acc_filter retention vs published distribution", criterion_acc_filter_rows},
        {6, "binning protocol (M in {20,23,1319}, K=10)", criterion_binning},
        {7, "cost accounting (M vs M*N requests)", criterion_cost_accounting},
        {8, "similarity direction (spearman >= 0.8)", criterion_similarity},
        {9, "reward grammar (>=50 cases, idempotent)", criterion_reward_grammar},
        {10, "end-to-end determinism and warm cache", criterion_end_to_end},
    };

    int failed = 0;
    for (const auto& criterion : criteria) {
        Checker checker;
        try {
            criterion.fn(checker);
        } catch (const std::exception& e) {
            checker.failures += 1;
            checker.detail << "exception: " << e.what();
        }
        const bool ok = checker.failures == 0;
        if (!ok) ++failed;
        std::printf("[%s] %2d. %s%s%s\n", ok ? "PASS" : "FAIL", criterion.number,
                    criterion.name, checker.detail.str().empty() ? "" : " -- ",
                    checker.detail.str().c_str());
        std::fflush(stdout);
    }
    if (failed > 0) std::printf("%d criterion(s) failed\n", failed);
    return failed;
}
