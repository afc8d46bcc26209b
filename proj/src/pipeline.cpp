// SPDX-License-Identifier: Apache-2.0
#include "fuzzsel/pipeline.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cctype>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <ostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "fuzzsel/analysis.hpp"
#include "fuzzsel/errors.hpp"
#include "fuzzsel/hash.hpp"
#include "fuzzsel/jsonl.hpp"

namespace fuzzsel::pipeline {

namespace fs = std::filesystem;

namespace {

constexpr const char* kApiKeyEnvVar = "FUZZSEL_API_KEY";

// One run owns its output directory; a stale lock must be removed by hand.
class OutDirLock {
  public:
    explicit OutDirLock(const std::string& out_dir) {
        fs::create_directories(out_dir);
        path_ = (fs::path(out_dir) / ".runlock").string();
        const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
        if (fd < 0)
            throw ConfigError("output directory " + out_dir +
                              " is locked by another run (remove " + path_ + " if stale)");
        const std::string pid = std::to_string(::getpid()) + "\n";
        [[maybe_unused]] const auto n = ::write(fd, pid.data(), pid.size());
        ::close(fd);
    }
    ~OutDirLock() {
        std::error_code ec;
        fs::remove(path_, ec);
    }
    OutDirLock(const OutDirLock&) = delete;
    OutDirLock& operator=(const OutDirLock&) = delete;

  private:
    std::string path_;
};

std::string env_api_key() {
    const char* v = std::getenv(kApiKeyEnvVar);
    return v ? v : "";
}

// ---- option merging: CLI > config file > defaults -------------------------------

struct FileConfig {
    std::map<std::string, std::string> values;

    bool has(const std::string& key) const { return values.count(key) > 0; }
    std::string str(const std::string& key) const { return values.at(key); }
};

template <class T, class Parse>
T pick(const std::optional<T>& cli, const FileConfig& file, const std::string& key, T fallback,
       Parse parse) {
    if (cli) return *cli;
    if (file.has(key)) return parse(file.str(key), key);
    return fallback;
}

std::string parse_str(const std::string& v, const std::string&) { return v; }

int parse_int(const std::string& v, const std::string& key) {
    try {
        std::size_t used = 0;
        const int r = std::stoi(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw ConfigError("bad integer for " + key + ": " + v);
    }
}

std::uint64_t parse_u64_opt(const std::string& v, const std::string& key) {
    try {
        std::size_t used = 0;
        const unsigned long long r = std::stoull(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw ConfigError("bad integer for " + key + ": " + v);
    }
}

double parse_dbl(const std::string& v, const std::string& key) {
    try {
        std::size_t used = 0;
        const double r = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw ConfigError("bad number for " + key + ": " + v);
    }
}

// Raw option state bound to CLI flags; everything optional so the merge can
// tell "user said" from "default".
struct RawOptions {
    std::optional<std::string> config_path;
    std::optional<std::string> backend;
    std::optional<std::string> out_dir;
    std::optional<std::uint64_t> seed;
    std::optional<int> max_inflight;

    std::optional<std::string> corpus;
    std::optional<std::string> format;
    std::optional<std::string> which;
    std::optional<std::string> mode;
    std::optional<std::string> template_path;
    std::optional<std::string> cache;
    std::optional<int> n;
    std::optional<double> temperature;
    std::optional<double> top_p;
    std::optional<int> max_new_tokens;
    std::optional<int> max_target_tokens;

    std::optional<std::string> scores;
    std::optional<std::string> strategy;
    std::optional<double> fraction;
    std::optional<int> runs;
    std::optional<int> k_bins;
    std::optional<std::string> mu_mode;

    std::optional<std::string> key;
    std::optional<int> k;

    std::optional<std::string> stats;

    std::optional<std::string> selection_path;
    std::optional<std::string> ids_path;
    std::optional<std::string> out_file;
};

FileConfig load_file_config(const RawOptions& raw) {
    FileConfig fc;
    if (raw.config_path) fc.values = parse_config_file(*raw.config_path);
    return fc;
}

struct CommonOpts {
    std::string out_dir;
    std::uint64_t seed;
    int max_inflight;
};

CommonOpts merge_common(const RawOptions& raw, const FileConfig& fc) {
    CommonOpts c;
    c.out_dir = pick(raw.out_dir, fc, "out_dir", std::string("out"), parse_str);
    c.seed = pick(raw.seed, fc, "seed", std::uint64_t{0}, parse_u64_opt);
    c.max_inflight = pick(raw.max_inflight, fc, "max_inflight", 16, parse_int);
    if (c.max_inflight < 1) throw ConfigError("max_inflight must be >= 1");
    return c;
}

corpus::Format merged_format(const RawOptions& raw, const FileConfig& fc) {
    return corpus::parse_format(pick(raw.format, fc, "format", std::string("gsm8k"), parse_str));
}

std::string merged_corpus_path(const RawOptions& raw, const FileConfig& fc) {
    const auto path = pick(raw.corpus, fc, "corpus", std::string{}, parse_str);
    if (path.empty()) throw ConfigError("no corpus given (--corpus or config `corpus`)");
    return path;
}

estimators::EstimatorConfig merged_estimator(const RawOptions& raw, const FileConfig& fc,
                                             std::uint64_t seed) {
    estimators::EstimatorConfig e;
    e.n_samples = pick(raw.n, fc, "n", 16, parse_int);
    e.temperature = pick(raw.temperature, fc, "temperature", 1.0, parse_dbl);
    e.mode = estimators::parse_mode(
        pick(raw.mode, fc, "mode", std::string("teacher_forced"), parse_str));
    e.max_new_tokens = pick(raw.max_new_tokens, fc, "max_new_tokens", 512, parse_int);
    e.max_target_tokens = pick(raw.max_target_tokens, fc, "max_target_tokens", 512, parse_int);
    e.run_seed = seed;
    const auto tmpl = pick(raw.template_path, fc, "template", std::string{}, parse_str);
    if (!tmpl.empty()) e.prompt_template = read_file(tmpl);
    if (raw.top_p)
        e.top_p = *raw.top_p;
    else if (fc.has("top_p"))
        e.top_p = parse_dbl(fc.str("top_p"), "top_p");
    e.validate();
    return e;
}

selection::SelectionConfig merged_selection(const RawOptions& raw, const FileConfig& fc,
                                            std::uint64_t seed) {
    selection::SelectionConfig s;
    s.strategy = selection::parse_strategy(
        pick(raw.strategy, fc, "strategy", std::string("ufo"), parse_str));
    s.fraction = pick(raw.fraction, fc, "fraction", 0.10, parse_dbl);
    s.seed = seed;
    s.k_bins = pick(raw.k_bins, fc, "k_bins", 10, parse_int);
    const int default_runs = s.strategy == selection::Strategy::random ? 5 : 1;
    s.n_random_runs = pick(raw.runs, fc, "runs", default_runs, parse_int);
    s.mu_mode = selection::parse_mu_mode(
        pick(raw.mu_mode, fc, "mu_mode", std::string("s_mean"), parse_str));
    s.validate();
    return s;
}

std::string table_path_or_throw(const RawOptions& raw, const FileConfig& fc) {
    const auto path = pick(raw.scores, fc, "scores", std::string{}, parse_str);
    if (path.empty()) throw ConfigError("no score table given (--scores or config `scores`)");
    return path;
}

json stats_to_json(const inference::BackendStats& st, double wall_seconds) {
    json j;
    j["generation_requests"] = st.generation_requests.load();
    j["scoring_requests"] = st.scoring_requests.load();
    j["generated_tokens"] = st.generated_tokens.load();
    j["scored_tokens"] = st.scored_tokens.load();
    j["backend_calls"] = st.backend_calls.load();
    j["cache_hits"] = st.cache_hits.load();
    j["transport_calls"] = st.transport_calls.load();
    j["transport_retries"] = st.transport_retries.load();
    j["wall_seconds"] = wall_seconds;
    return j;
}

// ---- score ------------------------------------------------------------------------

int cmd_score(const RawOptions& raw, std::ostream& out, std::ostream& err) {
    const FileConfig fc = load_file_config(raw);
    const CommonOpts common = merge_common(raw, fc);
    const auto format = merged_format(raw, fc);
    const std::string corpus_path = merged_corpus_path(raw, fc);
    const auto which = estimators::parse_which(
        pick(raw.which, fc, "which", std::string("confidence"), parse_str));
    const auto est = merged_estimator(raw, fc, common.seed);
    const std::string backend_uri =
        pick(raw.backend, fc, "backend", std::string{}, parse_str);
    if (backend_uri.empty()) throw ConfigError("no backend given (--backend or config `backend`)");

    const auto corpus_data = corpus::load_corpus(corpus_path, format);

    OutDirLock lock(common.out_dir);
    const fs::path out_dir(common.out_dir);

    auto inner = inference::make_backend(backend_uri, &corpus_data, env_api_key());
    const std::string cache_path =
        pick(raw.cache, fc, "cache", (out_dir / "cache.jsonl").string(), parse_str);
    auto backend = inference::with_cache(inner, cache_path);

    RunManifest manifest;
    manifest.command = "score";
    manifest.timestamp_utc = utc_timestamp_now();
    manifest.corpus_hash = corpus_data.content_hash();
    manifest.corpus_path = corpus_path;
    manifest.backend_descriptor = backend->descriptor();
    manifest.which = estimators::which_name(which);
    manifest.estimator = est;
    manifest.template_hash = hex64(fnv1a64(est.prompt_template));
    manifest.run_id = manifest.compute_run_id();
    // Written before the first backend call so interrupted runs stay traceable.
    write_file((out_dir / "manifest.json").string(), manifest.to_json_pretty());

    estimators::RunOptions run_opts;
    run_opts.max_inflight = common.max_inflight;
    run_opts.journal_path = (out_dir / "scores.partial.jsonl").string();
    // Score rows carry the run id, so every downstream file traces back to
    // this manifest.
    run_opts.config_hash = manifest.run_id;

    const auto t0 = std::chrono::steady_clock::now();
    auto result = estimators::estimate_corpus(corpus_data, *backend, which, est, run_opts);
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    const std::string table_path = (out_dir / "scores.jsonl").string();
    estimators::save_score_table(result.table, table_path);
    write_file((out_dir / "run_stats.json").string(),
               stats_to_json(backend->stats(), wall).dump(2) + "\n");

    if (result.stale_journal_rows > 0)
        err << "note: discarded " << result.stale_journal_rows
            << " journal rows from a different configuration\n";

    if (!result.failures.empty()) {
        err << result.failures.size() << " example(s) failed to score:\n";
        for (const auto& [id, reason] : result.failures)
            err << "  " << id << ": " << reason << "\n";
        err << "journal kept at " << run_opts.journal_path << "; rerun to resume\n";
        return result.transport_failures ? kExitTransport : kExitInternal;
    }

    std::error_code ec;
    fs::remove(run_opts.journal_path, ec); // complete runs do not need the journal

    out << "scored " << result.table.rows.size() << " examples";
    if (result.resumed > 0) out << " (" << result.resumed << " resumed)";
    out << " -> " << table_path << "\n";
    out << "run_id " << manifest.run_id << "\n";
    return kExitOk;
}

// ---- select -------------------------------------------------------------------------

int cmd_select(const RawOptions& raw, std::ostream& out, std::ostream& err) {
    const FileConfig fc = load_file_config(raw);
    const CommonOpts common = merge_common(raw, fc);
    const std::string table_path = table_path_or_throw(raw, fc);
    const auto sel = merged_selection(raw, fc, common.seed);
    const auto format = merged_format(raw, fc);
    const std::string corpus_path = merged_corpus_path(raw, fc);

    const auto corpus_data = corpus::load_corpus(corpus_path, format);
    const std::string table_bytes = read_file(table_path);
    const std::string input_hash = hex64(fnv1a64(table_bytes));
    const auto table = estimators::load_score_table(table_path);

    OutDirLock lock(common.out_dir);
    const fs::path out_dir(common.out_dir);

    const auto reports = selection::select(table, sel, input_hash);

    json runs = json::array();
    for (const auto& report : reports) {
        std::string stem = "selection_" + selection::strategy_name(report.strategy);
        if (report.run_index) stem += "_run" + std::to_string(*report.run_index);
        const std::string report_path = (out_dir / (stem + ".json")).string();
        const std::string subset_path =
            (out_dir / (stem + "_subset.jsonl")).string();

        write_file(report_path, selection::report_to_json(report));
        std::set<std::string> ids;
        for (const auto& e : report.selected) ids.insert(e.id);
        const std::size_t written = corpus::export_subset(corpus_data, ids, subset_path);

        json entry;
        entry["report"] = stem + ".json";
        entry["subset"] = stem + "_subset.jsonl";
        entry["selected"] = written;
        if (report.run_index) entry["run_index"] = *report.run_index;
        runs.push_back(std::move(entry));

        out << selection::strategy_name(report.strategy);
        if (report.run_index) out << " run " << *report.run_index;
        out << ": " << written << " of " << report.candidate_count << " examples -> "
            << subset_path << "\n";
    }

    // run-set manifest covering every emitted run
    json m;
    m["schema_version"] = 1;
    m["command"] = "select";
    m["strategy"] = selection::strategy_name(sel.strategy);
    m["fraction"] = sel.fraction;
    m["seed"] = sel.seed;
    m["k_bins"] = sel.k_bins;
    m["n_random_runs"] = sel.n_random_runs;
    m["mu_mode"] = selection::mu_mode_name(sel.mu_mode);
    m["input_table_hash"] = input_hash;
    m["score_run_id"] = table.config_hash;
    m["corpus_hash"] = corpus_data.content_hash();
    m["runs"] = std::move(runs);
    json hashed = m;
    m["run_id"] = hex64(fnv1a64(hashed.dump()));
    write_file((out_dir / "selection_manifest.json").string(), m.dump(2) + "\n");

    (void)err;
    return kExitOk;
}

// ---- bins ---------------------------------------------------------------------------

int cmd_bins(const RawOptions& raw, std::ostream& out, std::ostream& err) {
    const FileConfig fc = load_file_config(raw);
    const CommonOpts common = merge_common(raw, fc);
    const std::string table_path = table_path_or_throw(raw, fc);
    const std::string key = pick(raw.key, fc, "key", std::string("p"), parse_str);
    const int k = pick(raw.k, fc, "k", 10, parse_int);
    if (key != "p" && key != "s" && key != "conf")
        throw ConfigError("bins key must be p, s or conf");

    const auto table = estimators::load_score_table(table_path);

    std::vector<std::pair<std::string, double>> keyed;
    std::size_t missing = 0;
    for (const auto& row : table.rows) {
        std::optional<double> v;
        if (key == "p") v = row.p;
        else if (key == "s") v = row.s;
        else v = row.conf;
        if (!v) {
            ++missing;
            continue;
        }
        keyed.emplace_back(row.example_id, *v);
    }
    if (missing > 0)
        throw ConfigError(std::to_string(missing) + " rows lack the \"" + key +
                          "\" column; score the corpus with the matching estimator first");
    if (keyed.empty()) throw DataError("no rows to bin");

    const auto assignments = selection::bin_by_difficulty(keyed, k);

    OutDirLock lock(common.out_dir);
    const fs::path out_dir(common.out_dir);

    // per-bin summary
    std::vector<std::size_t> sizes(static_cast<std::size_t>(k), 0);
    std::vector<double> lo(static_cast<std::size_t>(k), 0.0), hi(static_cast<std::size_t>(k), 0.0);
    std::map<std::string, double> key_of;
    for (const auto& [id, v] : keyed) key_of[id] = v;
    std::vector<bool> seen(static_cast<std::size_t>(k), false);
    for (const auto& a : assignments) {
        const auto b = static_cast<std::size_t>(a.bin_index);
        const double v = key_of[a.example_id];
        if (!seen[b]) {
            lo[b] = hi[b] = v;
            seen[b] = true;
        } else {
            lo[b] = std::min(lo[b], v);
            hi[b] = std::max(hi[b], v);
        }
        ++sizes[b];
    }

    json j;
    j["schema_version"] = 1;
    j["key"] = key;
    j["k"] = k;
    j["score_run_id"] = table.config_hash;
    json bins = json::array();
    for (int b = 0; b < k; ++b) {
        json jb;
        jb["bin"] = b;
        jb["size"] = sizes[static_cast<std::size_t>(b)];
        jb["min_key"] = lo[static_cast<std::size_t>(b)];
        jb["max_key"] = hi[static_cast<std::size_t>(b)];
        bins.push_back(std::move(jb));
    }
    j["bins"] = std::move(bins);
    json assigns = json::array();
    for (const auto& a : assignments) {
        json ja;
        ja["id"] = a.example_id;
        ja["bin"] = a.bin_index;
        assigns.push_back(std::move(ja));
    }
    j["assignments"] = std::move(assigns);
    write_file((out_dir / "bins.json").string(), j.dump(2) + "\n");

    std::ostringstream txt;
    txt << "bin  size  " << key << "_min      " << key << "_max\n";
    for (int b = 0; b < k; ++b)
        txt << std::left << std::setw(5) << b << std::setw(6) << sizes[static_cast<std::size_t>(b)]
            << std::setw(10) << lo[static_cast<std::size_t>(b)] << " " << std::setw(10)
            << hi[static_cast<std::size_t>(b)] << "\n";
    write_file((out_dir / "bins.txt").string(), txt.str());
    out << txt.str();

    (void)err;
    return kExitOk;
}

// ---- analyze ------------------------------------------------------------------------

int cmd_analyze(const RawOptions& raw, std::ostream& out, std::ostream& err) {
    const FileConfig fc = load_file_config(raw);
    const CommonOpts common = merge_common(raw, fc);
    const std::string table_path = table_path_or_throw(raw, fc);
    const auto table = estimators::load_score_table(table_path);

    OutDirLock lock(common.out_dir);
    const fs::path out_dir(common.out_dir);
    std::ostringstream txt;
    txt << "score table run " << table.config_hash << ", " << table.rows.size() << " rows\n";

    // similarity: needs both s and p, aligned by row
    std::vector<double> s_vals, p_vals;
    for (const auto& row : table.rows) {
        if (row.s && row.p) {
            s_vals.push_back(*row.s);
            p_vals.push_back(*row.p);
        }
    }
    json sim;
    sim["schema_version"] = 1;
    sim["score_run_id"] = table.config_hash;
    if (s_vals.size() >= 2) {
        const auto r = analysis::rank_similarity(s_vals, p_vals);
        sim["m_examples"] = r.m_examples;
        sim["spearman"] = r.spearman ? json(*r.spearman) : json(nullptr);
        sim["pearson"] = r.pearson ? json(*r.pearson) : json(nullptr);
        sim["kendall"] = r.kendall ? json(*r.kendall) : json(nullptr);
        sim["skipped"] = false;
        if (!r.computable()) {
            sim["skipped"] = true;
            sim["skip_reason"] = r.not_computable_reason;
        }
        txt << "similarity (m=" << r.m_examples << ")\n";
        if (r.computable()) {
            txt << "  spearman  " << *r.spearman << "\n";
            txt << "  pearson   " << *r.pearson << "\n";
            txt << "  kendall   " << *r.kendall << "\n";
        } else {
            txt << "  not computable: " << r.not_computable_reason << "\n";
        }
    } else {
        sim["skipped"] = true;
        sim["skip_reason"] = "needs both s and p columns on at least two rows";
        txt << "similarity: skipped (needs both s and p columns)\n";
    }
    write_file((out_dir / "similarity.json").string(), sim.dump(2) + "\n");

    // distribution over p when present, else over s
    json dist;
    dist["schema_version"] = 1;
    dist["score_run_id"] = table.config_hash;
    std::vector<double> column;
    std::string column_name = "p";
    for (const auto& row : table.rows)
        if (row.p) column.push_back(*row.p);
    if (column.empty()) {
        column_name = "s";
        for (const auto& row : table.rows)
            if (row.s) column.push_back(*row.s);
    }
    if (!column.empty()) {
        const auto bands = analysis::default_bands(column_name);
        const auto fractions = analysis::accuracy_distribution(column, bands);
        dist["column"] = column_name;
        dist["m_examples"] = column.size();
        dist["skipped"] = false;
        json jb = json::array();
        txt << column_name << " distribution (m=" << column.size() << ")\n";
        for (const auto& f : fractions) {
            json e;
            e["band"] = f.band.label;
            e["count"] = f.count;
            e["percent"] = f.percent;
            jb.push_back(std::move(e));
            txt << "  " << std::left << std::setw(10) << f.band.label << " " << std::setw(8)
                << f.count << " " << f.percent << "%\n";
        }
        dist["bands"] = std::move(jb);
    } else {
        dist["skipped"] = true;
        dist["skip_reason"] = "no p or s column; score the corpus first";
        txt << "distribution: skipped (no p or s column)\n";
    }
    write_file((out_dir / "distribution.json").string(), dist.dump(2) + "\n");

    // cost accounting: analytic counts from the table shape; measured counts
    // from the score run's stats file when available
    json cost;
    cost["schema_version"] = 1;
    cost["score_run_id"] = table.config_hash;
    const std::size_t m = table.rows.size();
    int n = 16;
    for (const auto& row : table.rows)
        if (row.rewards && !row.rewards->empty()) {
            n = static_cast<int>(row.rewards->size());
            break;
        }
    const auto acc = analysis::cost_model(m, n, analysis::CostMode::accuracy);
    const auto conf = analysis::cost_model(m, n, analysis::CostMode::confidence);
    cost["m_examples"] = m;
    cost["n_samples"] = n;
    cost["accuracy_requests"] = acc.request_count;
    cost["confidence_requests"] = conf.request_count;
    cost["request_ratio"] = static_cast<double>(acc.request_count) /
                            static_cast<double>(conf.request_count);
    txt << "evaluation cost (m=" << m << ", n=" << n << ")\n";
    txt << "  accuracy requests    " << acc.request_count << "\n";
    txt << "  confidence requests  " << conf.request_count << "\n";
    txt << "  ratio                " << cost["request_ratio"].get<double>() << "\n";

    const std::string stats_path =
        pick(raw.stats, fc, "stats",
             (fs::path(table_path).parent_path() / "run_stats.json").string(), parse_str);
    if (file_exists(stats_path)) {
        const json st = json::parse(read_file(stats_path));
        json measured;
        for (const char* field : {"generation_requests", "scoring_requests",
                                  "generated_tokens", "scored_tokens"})
            measured[field] = st.value(field, std::uint64_t{0});
        cost["measured"] = measured;
        txt << "  measured generation  " << measured["generation_requests"].get<std::uint64_t>()
            << "\n";
        txt << "  measured scoring     " << measured["scoring_requests"].get<std::uint64_t>()
            << "\n";
    }
    write_file((out_dir / "cost.json").string(), cost.dump(2) + "\n");

    write_file((out_dir / "analysis.txt").string(), txt.str());
    out << txt.str();

    (void)err;
    return kExitOk;
}

// ---- export -------------------------------------------------------------------------

int cmd_export(const RawOptions& raw, std::ostream& out, std::ostream& err) {
    const FileConfig fc = load_file_config(raw);
    const auto format = merged_format(raw, fc);
    const std::string corpus_path = merged_corpus_path(raw, fc);
    const std::string out_file = pick(raw.out_file, fc, "out", std::string{}, parse_str);
    if (out_file.empty()) throw ConfigError("no output file given (--out)");

    const auto corpus_data = corpus::load_corpus(corpus_path, format);

    std::set<std::string> ids;
    const std::string selection_path =
        pick(raw.selection_path, fc, "selection", std::string{}, parse_str);
    const std::string ids_path = pick(raw.ids_path, fc, "ids", std::string{}, parse_str);
    if (!selection_path.empty() && !ids_path.empty())
        throw ConfigError("give either --selection or --ids, not both");
    if (!selection_path.empty()) {
        const auto report = selection::report_from_json_file(selection_path);
        for (const auto& e : report.selected) ids.insert(e.id);
    } else if (!ids_path.empty()) {
        for_each_line(ids_path, [&](std::size_t, std::string_view line) {
            std::string id(line);
            while (!id.empty() && std::isspace(static_cast<unsigned char>(id.back())))
                id.pop_back();
            if (!id.empty()) ids.insert(id);
        });
    } else {
        throw ConfigError("no id source given (--selection or --ids)");
    }

    const std::size_t written = corpus::export_subset(corpus_data, ids, out_file);
    out << "exported " << written << " records -> " << out_file << "\n";
    (void)err;
    return kExitOk;
}

} // namespace

int run_cli(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
    RawOptions raw;

    CLI::App app{"uncertainty-scored training-data selection for RL fine-tuning"};
    app.require_subcommand(1);

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", raw.config_path, "key = value configuration file");
        sub->add_option("--backend", raw.backend,
                        "backend uri: synthetic:..., replay:..., http://...");
        sub->add_option("--out-dir", raw.out_dir, "output directory (default: out)");
        sub->add_option("--seed", raw.seed, "run seed; all randomness derives from it");
        sub->add_option("--max-inflight", raw.max_inflight,
                        "bound on concurrent backend requests (default 16)");
    };

    CLI::App* score = app.add_subcommand(
        "score", "score a corpus by sampling accuracy and/or single-pass confidence");
    add_common(score);
    score->add_option("--corpus", raw.corpus, "record file to score");
    score->add_option("--format", raw.format, "corpus format: gsm8k | generic");
    score->add_option("--which", raw.which, "accuracy | confidence | both");
    score->add_option("--n", raw.n, "samples per example for accuracy (default 16)");
    score->add_option("--temperature", raw.temperature, "sampling temperature (default 1.0)");
    score->add_option("--top-p", raw.top_p, "nucleus truncation, off by default");
    score->add_option("--mode", raw.mode, "confidence mode: teacher_forced | generate_once");
    score->add_option("--max-new-tokens", raw.max_new_tokens,
                      "generation length bound (default 512)");
    score->add_option("--max-target-tokens", raw.max_target_tokens,
                      "scored tokens bound in teacher_forced mode (default 512)");
    score->add_option("--template", raw.template_path,
                      "prompt template file containing {prompt}");
    score->add_option("--cache", raw.cache, "response cache path (default <out>/cache.jsonl)");

    CLI::App* select = app.add_subcommand("select", "emit a training subset from a score table");
    add_common(select);
    select->add_option("--scores", raw.scores, "score table from `score`");
    select->add_option("--corpus", raw.corpus, "corpus backing the score table");
    select->add_option("--format", raw.format, "corpus format: gsm8k | generic");
    select->add_option("--strategy", raw.strategy,
                       "full | high_conf | low_conf | random | acc_filter | ufo");
    select->add_option("--fraction", raw.fraction, "selected fraction (default 0.10)");
    select->add_option("--runs", raw.runs, "independent runs for random (default 5)");
    select->add_option("--k-bins", raw.k_bins, "bin count recorded in reports (default 10)");
    select->add_option("--mu-mode", raw.mu_mode, "s_mean | exp_conf_mean");

    CLI::App* bins = app.add_subcommand("bins", "partition examples into difficulty bins");
    add_common(bins);
    bins->add_option("--scores", raw.scores, "score table from `score`");
    bins->add_option("--key", raw.key, "binning key: p | s | conf (default p)");
    bins->add_option("--k", raw.k, "number of bins (default 10)");

    CLI::App* analyze =
        app.add_subcommand("analyze", "similarity, distribution and cost reports");
    add_common(analyze);
    analyze->add_option("--scores", raw.scores, "score table from `score`");
    analyze->add_option("--stats", raw.stats,
                        "run_stats.json from the score run (default: sibling of --scores)");

    CLI::App* exporter = app.add_subcommand("export", "write a subset file from ids");
    add_common(exporter);
    exporter->add_option("--corpus", raw.corpus, "record file to subset");
    exporter->add_option("--format", raw.format, "corpus format: gsm8k | generic");
    exporter->add_option("--selection", raw.selection_path, "selection report json");
    exporter->add_option("--ids", raw.ids_path, "file with one example id per line");
    exporter->add_option("--out", raw.out_file, "output record file");

    try {
        // CLI11's vector overload expects reversed args.
        std::vector<std::string> args(argv.rbegin(), argv.rend());
        app.parse(std::move(args));
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (score->parsed()) return cmd_score(raw, out, err);
        if (select->parsed()) return cmd_select(raw, out, err);
        if (bins->parsed()) return cmd_bins(raw, out, err);
        if (analyze->parsed()) return cmd_analyze(raw, out, err);
        if (exporter->parsed()) return cmd_export(raw, out, err);
        err << "error: no command\n";
        return kExitConfig;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        switch (e.kind()) {
            case ErrorKind::config:
            case ErrorKind::capability:
                return kExitConfig;
            case ErrorKind::transport:
                return kExitTransport;
            default:
                return kExitInternal;
        }
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitInternal;
    }
}

} // namespace fuzzsel::pipeline
