// SPDX-License-Identifier: Apache-2.0
#include "fuzzsel/selection.hpp"

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <sstream>

#include "fuzzsel/errors.hpp"
#include "fuzzsel/hash.hpp"
#include "fuzzsel/jsonl.hpp"

namespace fuzzsel::selection {

Strategy parse_strategy(const std::string& name) {
    if (name == "full") return Strategy::full;
    if (name == "high_conf") return Strategy::high_conf;
    if (name == "low_conf") return Strategy::low_conf;
    if (name == "random") return Strategy::random;
    if (name == "acc_filter") return Strategy::acc_filter;
    if (name == "ufo") return Strategy::ufo;
    throw ConfigError("unknown strategy: " + name +
                      " (expected full, high_conf, low_conf, random, acc_filter or ufo)");
}

std::string strategy_name(Strategy s) {
    switch (s) {
        case Strategy::full: return "full";
        case Strategy::high_conf: return "high_conf";
        case Strategy::low_conf: return "low_conf";
        case Strategy::random: return "random";
        case Strategy::acc_filter: return "acc_filter";
        default: return "ufo";
    }
}

MuMode parse_mu_mode(const std::string& name) {
    if (name == "s_mean") return MuMode::s_mean;
    if (name == "exp_conf_mean") return MuMode::exp_conf_mean;
    throw ConfigError("unknown mu mode: " + name + " (expected s_mean or exp_conf_mean)");
}

std::string mu_mode_name(MuMode m) { return m == MuMode::s_mean ? "s_mean" : "exp_conf_mean"; }

void SelectionConfig::validate() const {
    if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("fraction must be in (0,1]");
    if (k_bins < 1) throw ConfigError("k_bins must be >= 1");
    if (n_random_runs < 1) throw ConfigError("runs must be >= 1");
}

double certainty(double conf) {
    if (!std::isfinite(conf)) throw DataError("certainty: conf must be finite");
    if (conf > 0.0) throw DataError("certainty: conf must be <= 0");
    const double s = std::exp(conf);
    return s < DBL_MIN ? DBL_MIN : s; // keep s strictly positive
}

double mean_certainty(std::span<const double> s_values) {
    if (s_values.empty()) throw DataError("mean_certainty: empty candidate set");
    double sum = 0.0;
    for (const double s : s_values) sum += s;
    return sum / static_cast<double>(s_values.size());
}

double fuzziness_score(double s, double mu) {
    const double d = s - mu;
    return 1.0 - d * d;
}

namespace {

struct Candidate {
    const estimators::ScoreRow* row;
    double key; // meaning depends on strategy
};

// ceil(fraction * m) with a guard against products like 0.3*10 landing a hair
// above the true integer.
std::size_t ceil_fraction(double fraction, std::size_t m) {
    const double v = fraction * static_cast<double>(m);
    const auto k = static_cast<std::size_t>(std::ceil(v - 1e-9));
    if (k == 0)
        throw ConfigError("selection would pick zero examples (fraction " +
                          std::to_string(fraction) + " of " + std::to_string(m) + ")");
    return std::min(k, m);
}

SelectedEntry entry_for(const estimators::ScoreRow& row, std::optional<double> fuzz) {
    SelectedEntry e;
    e.id = row.example_id;
    e.s = row.s;
    e.p = row.p;
    e.fuzziness = fuzz;
    return e;
}

std::string selection_config_hash(const SelectionConfig& c) {
    FieldHasher h;
    h.add("selection-config-v1");
    h.add(strategy_name(c.strategy)).add(c.fraction).add(c.seed);
    h.add(static_cast<std::uint64_t>(c.k_bins));
    h.add(static_cast<std::uint64_t>(c.n_random_runs));
    h.add(mu_mode_name(c.mu_mode));
    return h.hex();
}

} // namespace

std::vector<SelectionReport> select(const estimators::ScoreTable& table,
                                    const SelectionConfig& config,
                                    const std::string& input_table_hash) {
    config.validate();

    const bool needs_s = config.strategy == Strategy::high_conf ||
                         config.strategy == Strategy::low_conf ||
                         config.strategy == Strategy::ufo;
    const bool needs_p = config.strategy == Strategy::acc_filter;

    std::vector<const estimators::ScoreRow*> candidates;
    candidates.reserve(table.rows.size());
    for (const auto& row : table.rows) {
        if (needs_s && !row.s) continue;
        if (needs_p && !row.p) continue;
        candidates.push_back(&row);
    }
    if (needs_s && candidates.empty())
        throw ConfigError("score table has no confidence column; run score with "
                          "--which confidence (or both) first");
    if (needs_p && candidates.empty())
        throw ConfigError("score table has no accuracy column; run score with "
                          "--which accuracy (or both) first");
    if (candidates.empty()) throw DataError("no scored candidates to select from");

    const std::size_t m = candidates.size();

    SelectionReport base;
    base.strategy = config.strategy;
    base.fraction = config.fraction;
    base.seed = config.seed;
    base.k_bins = config.k_bins;
    base.mu_mode = config.mu_mode;
    base.candidate_count = m;
    base.config_hash = selection_config_hash(config);
    base.input_table_hash = input_table_hash;

    auto ranked_take = [&](bool descending, bool by_fuzziness,
                           double mu) -> std::vector<SelectedEntry> {
        std::vector<std::pair<double, const estimators::ScoreRow*>> keyed;
        keyed.reserve(m);
        for (const auto* row : candidates) {
            const double key = by_fuzziness ? fuzziness_score(*row->s, mu) : *row->s;
            keyed.emplace_back(key, row);
        }
        std::sort(keyed.begin(), keyed.end(), [&](const auto& a, const auto& b) {
            if (a.first != b.first) return descending ? a.first > b.first : a.first < b.first;
            return a.second->example_id < b.second->example_id;
        });
        const std::size_t k = ceil_fraction(config.fraction, m);
        std::vector<SelectedEntry> out;
        out.reserve(k);
        for (std::size_t i = 0; i < k; ++i)
            out.push_back(entry_for(*keyed[i].second,
                                    by_fuzziness ? std::optional<double>(keyed[i].first)
                                                 : std::nullopt));
        return out;
    };

    std::vector<SelectionReport> reports;

    switch (config.strategy) {
        case Strategy::full: {
            SelectionReport r = base;
            for (const auto* row : candidates) r.selected.push_back(entry_for(*row, std::nullopt));
            reports.push_back(std::move(r));
            break;
        }
        case Strategy::high_conf: {
            SelectionReport r = base;
            r.selected = ranked_take(/*descending=*/true, /*by_fuzziness=*/false, 0.0);
            reports.push_back(std::move(r));
            break;
        }
        case Strategy::low_conf: {
            SelectionReport r = base;
            r.selected = ranked_take(/*descending=*/false, /*by_fuzziness=*/false, 0.0);
            reports.push_back(std::move(r));
            break;
        }
        case Strategy::acc_filter: {
            SelectionReport r = base;
            for (const auto* row : candidates)
                if (*row->p > 0.0 && *row->p < 1.0)
                    r.selected.push_back(entry_for(*row, std::nullopt));
            reports.push_back(std::move(r));
            break;
        }
        case Strategy::ufo: {
            double mu;
            if (config.mu_mode == MuMode::s_mean) {
                std::vector<double> s_values;
                s_values.reserve(m);
                for (const auto* row : candidates) s_values.push_back(*row->s);
                mu = mean_certainty(s_values);
            } else {
                // alternative reading: mu = exp(mean of Conf)
                double sum = 0.0;
                std::size_t n_conf = 0;
                for (const auto* row : candidates) {
                    if (!row->conf)
                        throw ConfigError("mu_mode exp_conf_mean needs conf values in the table");
                    sum += *row->conf;
                    ++n_conf;
                }
                mu = std::exp(sum / static_cast<double>(n_conf));
            }
            SelectionReport r = base;
            r.mu = mu;
            r.selected = ranked_take(/*descending=*/true, /*by_fuzziness=*/true, mu);
            reports.push_back(std::move(r));
            break;
        }
        case Strategy::random: {
            const std::size_t k = ceil_fraction(config.fraction, m);
            std::vector<const estimators::ScoreRow*> ids(candidates);
            std::sort(ids.begin(), ids.end(), [](const auto* a, const auto* b) {
                return a->example_id < b->example_id;
            });
            for (int run = 0; run < config.n_random_runs; ++run) {
                DetRng rng(derive_seed(config.seed, "random-run", "",
                                       static_cast<std::uint64_t>(run)));
                std::vector<const estimators::ScoreRow*> pool(ids);
                for (std::size_t i = 0; i < k; ++i) {
                    const std::size_t j = i + rng.below(pool.size() - i);
                    std::swap(pool[i], pool[j]);
                }
                std::vector<const estimators::ScoreRow*> picked(pool.begin(),
                                                                pool.begin() +
                                                                    static_cast<long>(k));
                std::sort(picked.begin(), picked.end(), [](const auto* a, const auto* b) {
                    return a->example_id < b->example_id;
                });
                SelectionReport r = base;
                r.run_index = run;
                for (const auto* row : picked) r.selected.push_back(entry_for(*row, std::nullopt));
                reports.push_back(std::move(r));
            }
            break;
        }
    }
    return reports;
}

std::vector<BinAssignment> bin_by_difficulty(std::vector<std::pair<std::string, double>> keyed,
                                             int k) {
    if (k < 1) throw ConfigError("k must be >= 1");
    const std::size_t m = keyed.size();
    if (static_cast<std::size_t>(k) > m)
        throw ConfigError("k=" + std::to_string(k) + " exceeds the number of examples (" +
                          std::to_string(m) + ")");

    std::sort(keyed.begin(), keyed.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second < b.second;
        return a.first < b.first;
    });

    // sizes differ by at most one; low-index bins take the remainder
    const std::size_t base = m / static_cast<std::size_t>(k);
    const std::size_t rem = m % static_cast<std::size_t>(k);

    std::vector<BinAssignment> out;
    out.reserve(m);
    std::size_t pos = 0;
    for (int b = 0; b < k; ++b) {
        const std::size_t size = base + (static_cast<std::size_t>(b) < rem ? 1 : 0);
        for (std::size_t i = 0; i < size; ++i, ++pos)
            out.push_back(BinAssignment{keyed[pos].first, b});
    }
    return out;
}

std::string report_to_json(const SelectionReport& report) {
    json j;
    j["schema_version"] = 1;
    j["strategy"] = strategy_name(report.strategy);
    j["fraction"] = report.fraction;
    j["seed"] = report.seed;
    j["k_bins"] = report.k_bins;
    j["mu_mode"] = mu_mode_name(report.mu_mode);
    j["mu"] = report.mu ? json(*report.mu) : json(nullptr);
    j["run_index"] = report.run_index ? json(*report.run_index) : json(nullptr);
    j["candidate_count"] = report.candidate_count;
    j["config_hash"] = report.config_hash;
    j["input_table_hash"] = report.input_table_hash;
    json sel = json::array();
    for (const auto& e : report.selected) {
        json je;
        je["id"] = e.id;
        je["s"] = e.s ? json(*e.s) : json(nullptr);
        je["p"] = e.p ? json(*e.p) : json(nullptr);
        je["fuzziness"] = e.fuzziness ? json(*e.fuzziness) : json(nullptr);
        sel.push_back(std::move(je));
    }
    j["selected"] = std::move(sel);
    return j.dump(2) + "\n";
}

SelectionReport report_from_json_file(const std::string& path) {
    const json j = json::parse(read_file(path));
    SelectionReport r;
    r.strategy = parse_strategy(j.at("strategy").get<std::string>());
    r.fraction = j.at("fraction").get<double>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.k_bins = j.at("k_bins").get<int>();
    r.mu_mode = parse_mu_mode(j.at("mu_mode").get<std::string>());
    if (!j.at("mu").is_null()) r.mu = j["mu"].get<double>();
    if (!j.at("run_index").is_null()) r.run_index = j["run_index"].get<int>();
    r.candidate_count = j.at("candidate_count").get<std::size_t>();
    r.config_hash = j.at("config_hash").get<std::string>();
    r.input_table_hash = j.at("input_table_hash").get<std::string>();
    for (const auto& je : j.at("selected")) {
        SelectedEntry e;
        e.id = je.at("id").get<std::string>();
        if (!je.at("s").is_null()) e.s = je["s"].get<double>();
        if (!je.at("p").is_null()) e.p = je["p"].get<double>();
        if (!je.at("fuzziness").is_null()) e.fuzziness = je["fuzziness"].get<double>();
        r.selected.push_back(std::move(e));
    }
    return r;
}

} // namespace fuzzsel::selection
