// SPDX-License-Identifier: Apache-2.0
#include "fuzzsel/estimators.hpp"

#include <algorithm>
#include <atomic>
#include <cfloat>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "fuzzsel/errors.hpp"
#include "fuzzsel/hash.hpp"
#include "fuzzsel/jsonl.hpp"
#include "fuzzsel/reward.hpp"

namespace fuzzsel::estimators {

ConfidenceMode parse_mode(const std::string& name) {
    if (name == "teacher_forced") return ConfidenceMode::teacher_forced;
    if (name == "generate_once") return ConfidenceMode::generate_once;
    throw ConfigError("unknown confidence mode: " + name +
                      " (expected teacher_forced or generate_once)");
}

std::string mode_name(ConfidenceMode m) {
    return m == ConfidenceMode::teacher_forced ? "teacher_forced" : "generate_once";
}

Which parse_which(const std::string& name) {
    if (name == "accuracy") return Which::accuracy;
    if (name == "confidence") return Which::confidence;
    if (name == "both") return Which::both;
    throw ConfigError("unknown estimator selection: " + name +
                      " (expected accuracy, confidence or both)");
}

std::string which_name(Which w) {
    switch (w) {
        case Which::accuracy: return "accuracy";
        case Which::confidence: return "confidence";
        default: return "both";
    }
}

std::string EstimatorConfig::apply_template(const std::string& prompt) const {
    static constexpr std::string_view kPlaceholder = "{prompt}";
    std::string out = prompt_template;
    std::size_t pos = 0;
    bool replaced = false;
    while ((pos = out.find(kPlaceholder, pos)) != std::string::npos) {
        out.replace(pos, kPlaceholder.size(), prompt);
        pos += prompt.size();
        replaced = true;
    }
    if (!replaced) throw ConfigError("prompt template lacks the {prompt} placeholder");
    return out;
}

void EstimatorConfig::validate() const {
    if (n_samples < 1) throw ConfigError("n must be >= 1");
    if (temperature < 0.0) throw ConfigError("temperature must be >= 0");
    if (max_new_tokens < 1) throw ConfigError("max_new_tokens must be >= 1");
    if (max_target_tokens < 1) throw ConfigError("max_target_tokens must be >= 1");
    if (prompt_template.find("{prompt}") == std::string::npos)
        throw ConfigError("prompt template lacks the {prompt} placeholder");
    if (top_p && (*top_p <= 0.0 || *top_p > 1.0)) throw ConfigError("top_p must be in (0,1]");
}

AccuracyEstimate estimate_sampling_accuracy(const corpus::Example& example,
                                            inference::Backend& backend,
                                            const EstimatorConfig& config) {
    config.validate();
    inference::GenerationRequest req;
    req.prompt = config.apply_template(example.prompt);
    req.n_samples = config.n_samples;
    req.temperature = config.temperature;
    req.max_new_tokens = config.max_new_tokens;
    req.seed = derive_seed(config.run_seed, "sample", example.id);
    req.top_p = config.top_p;
    req.want_logprobs = false;
    req.example_id = example.id;

    const auto completions = backend.generate(req);
    const auto gold = reward::make_gold(example.gold_answer);

    AccuracyEstimate est;
    est.example_id = example.id;
    est.n_samples = config.n_samples;
    est.temperature = config.temperature;
    est.rewards.reserve(completions.size());
    int total = 0;
    for (const auto& c : completions) {
        const int r = reward::binary_reward(c.text, gold);
        est.rewards.push_back(r);
        total += r;
    }
    est.p = static_cast<double>(total) / static_cast<double>(config.n_samples);
    return est;
}

namespace {

double mean_of(const std::vector<double>& v) {
    double sum = 0.0;
    for (const double x : v) sum += x;
    return sum / static_cast<double>(v.size());
}

} // namespace

ConfidenceEstimate estimate_confidence(const corpus::Example& example,
                                       inference::Backend& backend,
                                       const EstimatorConfig& config) {
    config.validate();
    ConfidenceEstimate est;
    est.example_id = example.id;
    est.mode = config.mode;

    if (config.mode == ConfidenceMode::teacher_forced) {
        if (!backend.capabilities().supports_echo_scoring)
            throw CapabilityError(
                "backend lacks echo scoring; rerun with --mode generate_once");
        if (!example.reference_solution)
            throw ConfigError("example " + example.id +
                              " has no reference solution; teacher_forced mode needs one "
                              "(or use --mode generate_once)");
        inference::ScoreRequest req;
        req.prompt = config.apply_template(example.prompt);
        req.target = *example.reference_solution;
        req.example_id = example.id;
        auto scored = backend.score_sequence(req);
        est.token_logprobs = std::move(scored.token_logprobs);
    } else {
        const auto caps = backend.capabilities();
        if (!caps.supports_sampling || !caps.supports_logprobs)
            throw CapabilityError("backend lacks logprob generation needed by generate_once");
        inference::GenerationRequest req;
        req.prompt = config.apply_template(example.prompt);
        req.n_samples = 1;
        req.temperature = 0.0; // greedy
        req.max_new_tokens = config.max_new_tokens;
        req.seed = derive_seed(config.run_seed, "greedy", example.id);
        req.want_logprobs = true;
        req.example_id = example.id;
        auto completions = backend.generate(req);
        est.token_logprobs = std::move(completions.front().token_logprobs);
    }

    const auto limit = static_cast<std::size_t>(config.max_target_tokens);
    if (est.token_logprobs.size() > limit) {
        est.token_logprobs.resize(limit);
        est.truncated = true;
    }
    if (est.token_logprobs.empty())
        throw DataError("degenerate sequence: no tokens scored for example " + example.id);
    est.t_count = est.token_logprobs.size();
    est.conf = mean_of(est.token_logprobs);
    return est;
}

// ---- score table ------------------------------------------------------------

const ScoreRow* ScoreTable::find(const std::string& id) const {
    for (const auto& row : rows)
        if (row.example_id == id) return &row;
    return nullptr;
}

namespace {

json row_to_json(const ScoreRow& row, const std::string& config_hash, int schema_version) {
    json j;
    j["schema_version"] = schema_version;
    j["config_hash"] = config_hash;
    j["example_id"] = row.example_id;
    j["p"] = row.p ? json(*row.p) : json(nullptr);
    j["rewards"] = row.rewards ? json(*row.rewards) : json(nullptr);
    j["conf"] = row.conf ? json(*row.conf) : json(nullptr);
    j["s"] = row.s ? json(*row.s) : json(nullptr);
    j["t_count"] = row.t_count ? json(*row.t_count) : json(nullptr);
    j["mode"] = row.mode ? json(mode_name(*row.mode)) : json(nullptr);
    j["truncated"] = row.truncated;
    return j;
}

ScoreRow row_from_json(const json& j, const std::string& where) {
    ScoreRow row;
    row.example_id = j.at("example_id").get<std::string>();
    if (j.contains("p") && !j["p"].is_null()) row.p = j["p"].get<double>();
    if (j.contains("rewards") && !j["rewards"].is_null())
        row.rewards = j["rewards"].get<std::vector<int>>();
    if (j.contains("conf") && !j["conf"].is_null()) row.conf = j["conf"].get<double>();
    if (j.contains("s") && !j["s"].is_null()) row.s = j["s"].get<double>();
    if (j.contains("t_count") && !j["t_count"].is_null())
        row.t_count = j["t_count"].get<std::int64_t>();
    if (j.contains("mode") && !j["mode"].is_null())
        row.mode = parse_mode(j["mode"].get<std::string>());
    if (j.contains("truncated")) row.truncated = j["truncated"].get<bool>();

    // Internal consistency: p is exactly mean(rewards); s tracks exp(conf).
    if (row.p && row.rewards) {
        int total = 0;
        for (const int r : *row.rewards) {
            if (r != 0 && r != 1) throw DataError(where + ": reward outside {0,1}");
            total += r;
        }
        const double expect = static_cast<double>(total) /
                              static_cast<double>(row.rewards->size());
        if (std::fabs(expect - *row.p) > 1e-12)
            throw DataError(where + ": p does not equal mean(rewards)");
    }
    if (row.conf && !row.s) row.s = std::max(std::exp(*row.conf), DBL_MIN);
    if (row.conf && row.s && std::fabs(*row.s - std::exp(*row.conf)) > 1e-12)
        throw DataError(where + ": s does not equal exp(conf)");
    return row;
}

} // namespace

void save_score_table(const ScoreTable& table, const std::string& path) {
    std::ostringstream out;
    for (const auto& row : table.rows)
        out << canonical_json_line(row_to_json(row, table.config_hash, table.schema_version))
            << "\n";
    write_file(path, out.str());
}

ScoreTable load_score_table(const std::string& path) {
    ScoreTable table;
    bool first = true;
    for_each_line(path, [&](std::size_t lineno, std::string_view line) {
        if (line.empty()) return;
        const std::string where = path + ":" + std::to_string(lineno);
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object()) throw DataError(where + ": malformed score row");
        const std::string config_hash = j.value("config_hash", std::string{});
        const int schema = j.value("schema_version", kScoreTableSchemaVersion);
        if (first) {
            table.config_hash = config_hash;
            table.schema_version = schema;
            first = false;
        } else if (config_hash != table.config_hash) {
            throw DataError(where + ": mixed config hashes in one score table");
        }
        table.rows.push_back(row_from_json(j, where));
    });
    if (table.rows.empty()) throw DataError("empty score table: " + path);
    return table;
}

// ---- corpus-level estimation ---------------------------------------------------

CorpusEstimateResult estimate_corpus(const corpus::Corpus& corpus, inference::Backend& backend,
                                     Which which, const EstimatorConfig& config,
                                     const RunOptions& options) {
    config.validate();

    const auto caps = backend.capabilities();
    const bool need_accuracy = which == Which::accuracy || which == Which::both;
    const bool need_confidence = which == Which::confidence || which == Which::both;
    if (need_accuracy && !caps.supports_sampling)
        throw CapabilityError("backend does not support sampled generation; "
                              "accuracy estimation is unavailable");
    if (need_confidence && config.mode == ConfidenceMode::teacher_forced &&
        !caps.supports_echo_scoring)
        throw CapabilityError("backend lacks echo scoring; rerun with --mode generate_once");
    if (need_confidence && config.mode == ConfidenceMode::generate_once &&
        (!caps.supports_sampling || !caps.supports_logprobs))
        throw CapabilityError("backend lacks logprob generation needed by generate_once");

    CorpusEstimateResult result;
    result.table.config_hash = options.config_hash;

    // Resume journal: completed rows from a previous interrupted run with the
    // same configuration are reused verbatim.
    std::unordered_map<std::string, ScoreRow> resumed;
    if (!options.journal_path.empty() && file_exists(options.journal_path)) {
        for_each_line(options.journal_path, [&](std::size_t lineno, std::string_view line) {
            if (line.empty()) return;
            json j = json::parse(line, nullptr, false);
            if (j.is_discarded() || !j.is_object()) return; // torn tail line from a crash
            if (j.value("config_hash", std::string{}) != options.config_hash) {
                ++result.stale_journal_rows;
                return;
            }
            try {
                ScoreRow row = row_from_json(j, options.journal_path + ":" +
                                                    std::to_string(lineno));
                resumed[row.example_id] = std::move(row);
            } catch (const Error&) {
                ++result.stale_journal_rows;
            }
        });
    }

    const std::size_t m = corpus.size();
    std::vector<std::optional<ScoreRow>> rows(m);
    std::atomic<std::size_t> next{0};
    std::mutex sink_mutex;
    std::ofstream journal;
    if (!options.journal_path.empty()) {
        const auto parent = std::filesystem::path(options.journal_path).parent_path();
        if (!parent.empty()) std::filesystem::create_directories(parent);
        journal.open(options.journal_path, std::ios::binary | std::ios::app);
    }

    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= m) return;
            const auto& example = corpus.examples()[i];

            if (const auto it = resumed.find(example.id); it != resumed.end()) {
                std::lock_guard lock(sink_mutex);
                rows[i] = it->second;
                ++result.resumed;
                continue;
            }

            ScoreRow row;
            row.example_id = example.id;
            try {
                if (need_accuracy) {
                    const auto acc = estimate_sampling_accuracy(example, backend, config);
                    row.p = acc.p;
                    row.rewards = acc.rewards;
                }
                if (need_confidence) {
                    const auto conf = estimate_confidence(example, backend, config);
                    row.conf = conf.conf;
                    // floored so s stays strictly positive even when exp underflows
                    row.s = std::max(std::exp(conf.conf), DBL_MIN);
                    row.t_count = static_cast<std::int64_t>(conf.t_count);
                    row.mode = conf.mode;
                    row.truncated = conf.truncated;
                }
            } catch (const Error& e) {
                std::lock_guard lock(sink_mutex);
                result.failures.emplace_back(example.id, e.what());
                if (e.kind() == ErrorKind::transport) result.transport_failures = true;
                continue;
            } catch (const std::exception& e) {
                std::lock_guard lock(sink_mutex);
                result.failures.emplace_back(example.id, e.what());
                continue;
            }

            std::lock_guard lock(sink_mutex);
            if (journal.is_open()) {
                journal << canonical_json_line(
                               row_to_json(row, options.config_hash, kScoreTableSchemaVersion))
                        << "\n";
                journal.flush();
            }
            rows[i] = std::move(row);
        }
    };

    const int n_workers = std::clamp<int>(options.max_inflight, 1,
                                          static_cast<int>(std::min<std::size_t>(m, 64)));
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(n_workers));
    for (int t = 0; t < n_workers; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();

    for (auto& row : rows)
        if (row) result.table.rows.push_back(std::move(*row));
    return result;
}

} // namespace fuzzsel::estimators
