// SPDX-License-Identifier: Apache-2.0
#include <cctype>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <set>

#include "fuzzsel/errors.hpp"
#include "fuzzsel/hash.hpp"
#include "fuzzsel/jsonl.hpp"
#include "fuzzsel/pipeline.hpp"

namespace fuzzsel::pipeline {

namespace {

json estimator_json(const estimators::EstimatorConfig& e) {
    json j;
    j["n"] = e.n_samples;
    j["temperature"] = e.temperature;
    j["mode"] = estimators::mode_name(e.mode);
    j["max_new_tokens"] = e.max_new_tokens;
    j["max_target_tokens"] = e.max_target_tokens;
    j["run_seed"] = e.run_seed;
    j["top_p"] = e.top_p ? json(*e.top_p) : json(nullptr);
    return j;
}

json selection_json(const selection::SelectionConfig& s) {
    json j;
    j["strategy"] = selection::strategy_name(s.strategy);
    j["fraction"] = s.fraction;
    j["seed"] = s.seed;
    j["k_bins"] = s.k_bins;
    j["n_random_runs"] = s.n_random_runs;
    j["mu_mode"] = selection::mu_mode_name(s.mu_mode);
    return j;
}

// Everything that affects output bytes; no timestamp, no local paths.
json hashed_view(const RunManifest& m) {
    json j;
    j["schema_version"] = m.schema_version;
    j["command"] = m.command;
    j["corpus_hash"] = m.corpus_hash;
    j["backend"] = m.backend_descriptor;
    j["which"] = m.which;
    j["estimator"] = estimator_json(m.estimator);
    j["template_hash"] = m.template_hash;
    if (m.sel) j["selection"] = selection_json(*m.sel);
    return j;
}

} // namespace

std::string RunManifest::compute_run_id() const {
    return hex64(fnv1a64(hashed_view(*this).dump()));
}

std::string RunManifest::to_json_pretty() const {
    json j = hashed_view(*this);
    j["run_id"] = run_id;
    j["timestamp_utc"] = timestamp_utc;
    j["corpus_path"] = corpus_path;
    return j.dump(2) + "\n";
}

std::string utc_timestamp_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02dZ", tm.tm_year + 1900,
                  tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec);
    return buf;
}

std::map<std::string, std::string> parse_config_file(const std::string& path) {
    static const std::set<std::string> kKnownKeys = {
        "corpus",       "format",        "backend",          "out_dir",
        "seed",         "max_inflight",  "template",         "which",
        "n",            "temperature",   "top_p",            "mode",
        "max_new_tokens", "max_target_tokens", "cache",      "scores",
        "strategy",     "fraction",      "runs",             "k_bins",
        "mu_mode",      "key",           "k",                "out",
        "selection",    "ids",           "stats",
    };

    std::map<std::string, std::string> out;
    for_each_line(path, [&](std::size_t lineno, std::string_view line) {
        auto trim = [](std::string_view s) {
            std::size_t b = 0, e = s.size();
            while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
            while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
            return std::string(s.substr(b, e - b));
        };
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') return;
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError(path + ":" + std::to_string(lineno) +
                              ": expected `key = value`");
        const std::string key = trim(std::string_view(t).substr(0, eq));
        const std::string value = trim(std::string_view(t).substr(eq + 1));
        if (!kKnownKeys.count(key))
            throw ConfigError(path + ":" + std::to_string(lineno) + ": unknown key \"" + key +
                              "\"");
        out[key] = value;
    });
    return out;
}

} // namespace fuzzsel::pipeline
