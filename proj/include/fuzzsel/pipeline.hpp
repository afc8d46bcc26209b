// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fuzzsel/estimators.hpp"
#include "fuzzsel/selection.hpp"

namespace fuzzsel::pipeline {

// Exit-code contract: 0 success, 1 internal error, 2 configuration or
// capability error, 3 backend exhaustion.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInternal = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitTransport = 3;

inline constexpr int kManifestSchemaVersion = 1;

// Persisted record of every parameter that affects a run's output. run_id is
// the hash of the canonical manifest with volatile fields (timestamp, paths)
// excluded, so identical configurations yield identical run ids and
// byte-identical downstream reports.
struct RunManifest {
    std::string run_id;
    std::string timestamp_utc;
    std::string command; // score | select | bins | analyze | export
    std::string corpus_hash;
    std::string corpus_path; // informational, excluded from run_id
    std::string backend_descriptor;
    std::string which;
    estimators::EstimatorConfig estimator;
    std::optional<selection::SelectionConfig> sel;
    std::string template_hash;
    int schema_version = kManifestSchemaVersion;

    std::string to_json_pretty() const;
    std::string compute_run_id() const;
};

// Plain-text key-value configuration file: `key = value`, '#' comments.
// Unknown keys are an error. Values feed the same knobs as the CLI flags;
// flags win, then file values, then built-in defaults.
std::map<std::string, std::string> parse_config_file(const std::string& path);

std::string utc_timestamp_now();

// Runs one CLI invocation in-process. argv excludes the program name.
int run_cli(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err);

} // namespace fuzzsel::pipeline
