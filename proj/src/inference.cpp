// SPDX-License-Identifier: Apache-2.0
#include "fuzzsel/inference.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <shared_mutex>
#include <sstream>

#include "fuzzsel/errors.hpp"
#include "fuzzsel/hash.hpp"
#include "fuzzsel/jsonl.hpp"

namespace fuzzsel::inference {

void GenerationRequest::validate() const {
    if (n_samples < 1) throw ConfigError("n_samples must be >= 1");
    if (temperature < 0.0 || !std::isfinite(temperature))
        throw ConfigError("temperature must be >= 0");
    if (max_new_tokens < 1) throw ConfigError("max_new_tokens must be >= 1");
}

void ScoreRequest::validate() const {
    if (target.empty()) throw DataError("empty scoring target");
}

namespace {

void clamp_logprobs(std::vector<ScoredCompletion>& batch) {
    for (auto& c : batch)
        for (auto& lp : c.token_logprobs) {
            if (!std::isfinite(lp)) throw DataError("backend produced a non-finite logprob");
            if (lp > 0.0) lp = 0.0; // float fuzz from remote endpoints
        }
}

} // namespace

void Backend::count_generated(const std::vector<ScoredCompletion>& batch) {
    stats_.generation_requests += batch.size();
    for (const auto& c : batch) stats_.generated_tokens += c.token_count();
}

void Backend::count_scored(const ScoredCompletion& c) {
    stats_.scoring_requests += 1;
    stats_.scored_tokens += c.token_count();
}

std::vector<ScoredCompletion> Backend::generate(const GenerationRequest& req) {
    std::vector<std::uint64_t> indices(static_cast<std::size_t>(std::max(req.n_samples, 0)));
    std::iota(indices.begin(), indices.end(), req.sample_offset);
    return generate_at(req, indices);
}

std::vector<ScoredCompletion> Backend::generate_at(const GenerationRequest& req,
                                                   std::span<const std::uint64_t> indices) {
    req.validate();
    auto out = do_generate(req, indices);
    if (out.size() != indices.size())
        throw Error(ErrorKind::internal,
                    "backend returned " + std::to_string(out.size()) + " completions for " +
                        std::to_string(indices.size()) + " requested samples");
    clamp_logprobs(out);
    count_generated(out);
    return out;
}

ScoredCompletion Backend::score_sequence(const ScoreRequest& req) {
    req.validate();
    auto out = do_score(req);
    std::vector<ScoredCompletion> one{std::move(out)};
    clamp_logprobs(one);
    count_scored(one.front());
    return std::move(one.front());
}

Capabilities Backend::capabilities() {
    std::call_once(caps_once_, [this] { caps_ = do_probe(); });
    return caps_;
}

// ---- synthetic oracle --------------------------------------------------------

void SyntheticModelSpec::validate() const {
    for (const auto& [id, d] : difficulty)
        if (!(d >= 0.0 && d <= 1.0))
            throw ConfigError("difficulty for " + id + " outside [0,1]");
    if (tokens_per_answer < 1) throw ConfigError("tokens_per_answer must be >= 1");
}

double synthetic_certainty(double difficulty) {
    const double s = 1.0 - difficulty;
    return s < kSyntheticEpsilon ? kSyntheticEpsilon : s;
}

SyntheticBackend::SyntheticBackend(SyntheticModelSpec spec, const corpus::Corpus& corpus)
    : Backend("synthetic:" + spec.label + "?seed=" + std::to_string(spec.seed) +
              "&tokens=" + std::to_string(spec.tokens_per_answer)),
      spec_(std::move(spec)) {
    spec_.validate();
    for (const auto& ex : corpus.examples()) {
        const auto it = spec_.difficulty.find(ex.id);
        if (it == spec_.difficulty.end())
            throw DataError("synthetic model has no difficulty for example " + ex.id);
        by_id_[ex.id] = Entry{it->second, ex.gold_answer, ex.prompt};
        by_prompt_.emplace(ex.prompt, ex.id);
    }
}

double SyntheticBackend::difficulty_of(const std::string& example_id) const {
    const auto it = by_id_.find(example_id);
    if (it == by_id_.end()) throw DataError("unknown example id: " + example_id);
    return it->second.difficulty;
}

const SyntheticBackend::Entry& SyntheticBackend::resolve(
    const std::optional<std::string>& id_hint, const std::string& prompt) const {
    if (id_hint) {
        const auto it = by_id_.find(*id_hint);
        if (it == by_id_.end()) throw DataError("unknown example id: " + *id_hint);
        return it->second;
    }
    const auto it = by_prompt_.find(prompt);
    if (it != by_prompt_.end()) return by_id_.at(it->second);
    // Templated prompts embed the raw prompt; take the longest registered
    // prompt contained in the request.
    const Entry* best = nullptr;
    std::size_t best_len = 0;
    for (const auto& [id, entry] : by_id_) {
        if (entry.prompt.size() > best_len && prompt.find(entry.prompt) != std::string::npos) {
            best = &entry;
            best_len = entry.prompt.size();
        }
    }
    if (!best) throw DataError("synthetic backend cannot resolve an example for this prompt");
    return *best;
}

std::vector<ScoredCompletion> SyntheticBackend::do_generate(
    const GenerationRequest& req, std::span<const std::uint64_t> indices) {
    const Entry& entry = resolve(req.example_id, req.prompt);
    const double s_true = synthetic_certainty(entry.difficulty);
    const double lp = std::log(s_true);

    std::vector<ScoredCompletion> out;
    out.reserve(indices.size());
    for (const std::uint64_t gi : indices) {
        FieldHasher h;
        h.add(spec_.seed).add(req.seed.value_or(0)).add(entry.prompt).add(gi);
        DetRng rng(h.digest());
        const double u = rng.next_unit();
        const bool correct = req.temperature == 0.0 ? entry.difficulty <= 0.5
                                                    : u < 1.0 - entry.difficulty;
        ScoredCompletion c;
        // Appending a digit always changes the value, so the wrong branch is
        // guaranteed to earn reward 0.
        c.text = "#### " + (correct ? entry.gold : entry.gold + "9");
        if (req.want_logprobs)
            c.token_logprobs.assign(static_cast<std::size_t>(spec_.tokens_per_answer), lp);
        out.push_back(std::move(c));
    }
    stats().backend_calls += indices.size();
    return out;
}

ScoredCompletion SyntheticBackend::do_score(const ScoreRequest& req) {
    const Entry& entry = resolve(req.example_id, req.prompt);
    const double lp = std::log(synthetic_certainty(entry.difficulty));
    ScoredCompletion c;
    c.text = req.target;
    c.token_logprobs.assign(static_cast<std::size_t>(spec_.tokens_per_answer), lp);
    stats().backend_calls += 1;
    return c;
}

Capabilities SyntheticBackend::do_probe() { return {true, true, true}; }

// ---- cache store --------------------------------------------------------------

namespace {
constexpr int kCacheVersion = 1;
}

CacheStore::CacheStore(std::string path, bool writable)
    : path_(std::move(path)), writable_(writable) {
    if (file_exists(path_)) {
        for_each_line(path_, [&](std::size_t lineno, std::string_view line) {
            if (line.empty()) return;
            json j = json::parse(line, nullptr, false);
            if (j.is_discarded() || !j.is_object())
                throw DataError(path_ + ":" + std::to_string(lineno) + ": malformed cache line");
            if (j.contains("cache_version")) {
                if (j["cache_version"].get<int>() != kCacheVersion)
                    throw DataError(path_ + ": unsupported cache version");
                if (j.contains("descriptor")) origin_descriptor_ = j["descriptor"].get<std::string>();
                return;
            }
            ScoredCompletion c;
            c.text = j.at("text").get<std::string>();
            for (const auto& v : j.at("logprobs")) c.token_logprobs.push_back(v.get<double>());
            const std::string kind = j.at("kind").get<std::string>();
            kinds_[kind] = true;
            if (!c.token_logprobs.empty()) any_logprobs_ = true;
            entries_[j.at("key").get<std::string>()] = std::move(c);
        });
    } else if (!writable_) {
        throw DataError("replay cache not found: " + path_);
    }
}

void CacheStore::set_origin(const std::string& descriptor) {
    std::unique_lock lock(mutex_);
    if (!origin_descriptor_.empty()) {
        if (origin_descriptor_ != descriptor)
            throw DataError("cache " + path_ + " was recorded against backend \"" +
                            origin_descriptor_ + "\", not \"" + descriptor + "\"");
        return;
    }
    origin_descriptor_ = descriptor;
    if (!writable_) return;
    json header;
    header["cache_version"] = kCacheVersion;
    header["descriptor"] = descriptor;
    append_line(canonical_json_line(header));
}

void CacheStore::append_line(const std::string& line) {
    const auto parent = std::filesystem::path(path_).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
    std::ofstream out(path_, std::ios::binary | std::ios::app);
    if (!out) throw DataError("cannot append to cache: " + path_);
    out << line << "\n";
}

std::optional<ScoredCompletion> CacheStore::lookup(const std::string& key) const {
    std::shared_lock lock(mutex_);
    const auto it = entries_.find(key);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
}

void CacheStore::put(const std::string& key, std::string_view kind,
                     const ScoredCompletion& value) {
    std::unique_lock lock(mutex_);
    if (entries_.count(key)) return;
    entries_[key] = value;
    kinds_[std::string(kind)] = true;
    if (!value.token_logprobs.empty()) any_logprobs_ = true;
    if (!writable_) return;
    json j;
    j["key"] = key;
    j["kind"] = std::string(kind);
    j["text"] = value.text;
    j["logprobs"] = value.token_logprobs;
    append_line(canonical_json_line(j));
}

bool CacheStore::has_kind(std::string_view kind) const {
    std::shared_lock lock(mutex_);
    return kinds_.count(std::string(kind)) > 0;
}

bool CacheStore::has_logprobs() const {
    std::shared_lock lock(mutex_);
    return any_logprobs_;
}

std::size_t CacheStore::size() const {
    std::shared_lock lock(mutex_);
    return entries_.size();
}

std::string CacheStore::generation_key(const std::string& backend_descriptor,
                                       const GenerationRequest& req,
                                       std::uint64_t sample_index) {
    FieldHasher h;
    h.add("gen").add(backend_descriptor).add(req.prompt);
    h.add(req.temperature).add(static_cast<std::uint64_t>(req.max_new_tokens));
    h.add(req.seed.has_value() ? "seed" : "noseed").add(req.seed.value_or(0));
    h.add(req.top_p.has_value() ? "top_p" : "notop_p").add(req.top_p.value_or(0.0));
    h.add(req.want_logprobs ? "lp" : "nolp");
    h.add(sample_index);
    return h.hex();
}

std::string CacheStore::scoring_key(const std::string& backend_descriptor,
                                    const ScoreRequest& req) {
    FieldHasher h;
    h.add("score").add(backend_descriptor).add(req.prompt).add(req.target);
    return h.hex();
}

// ---- caching wrapper -----------------------------------------------------------

CachedBackend::CachedBackend(std::shared_ptr<Backend> inner, std::shared_ptr<CacheStore> store)
    : Backend(inner->descriptor()), inner_(std::move(inner)), store_(std::move(store)) {
    store_->set_origin(inner_->descriptor());
}

std::vector<ScoredCompletion> CachedBackend::do_generate(
    const GenerationRequest& req, std::span<const std::uint64_t> indices) {
    std::vector<ScoredCompletion> out(indices.size());
    std::vector<std::uint64_t> missing;
    std::vector<std::size_t> missing_slots;
    for (std::size_t k = 0; k < indices.size(); ++k) {
        const auto key = CacheStore::generation_key(descriptor(), req, indices[k]);
        if (auto hit = store_->lookup(key)) {
            out[k] = std::move(*hit);
            stats().cache_hits += 1;
        } else {
            missing.push_back(indices[k]);
            missing_slots.push_back(k);
        }
    }
    if (!missing.empty()) {
        auto fresh = inner_->generate_at(req, missing);
        for (std::size_t k = 0; k < missing.size(); ++k) {
            const auto key = CacheStore::generation_key(descriptor(), req, missing[k]);
            store_->put(key, "gen", fresh[k]);
            out[missing_slots[k]] = std::move(fresh[k]);
        }
        stats().backend_calls += missing.size();
    }
    return out;
}

ScoredCompletion CachedBackend::do_score(const ScoreRequest& req) {
    const auto key = CacheStore::scoring_key(descriptor(), req);
    if (auto hit = store_->lookup(key)) {
        stats().cache_hits += 1;
        return std::move(*hit);
    }
    auto fresh = inner_->score_sequence(req);
    store_->put(key, "score", fresh);
    stats().backend_calls += 1;
    return fresh;
}

Capabilities CachedBackend::do_probe() { return inner_->capabilities(); }

// ---- replay ----------------------------------------------------------------------

ReplayBackend::ReplayBackend(std::shared_ptr<CacheStore> store, std::string descriptor)
    : Backend(std::move(descriptor)), store_(std::move(store)) {}

std::vector<ScoredCompletion> ReplayBackend::do_generate(
    const GenerationRequest& req, std::span<const std::uint64_t> indices) {
    const std::string& origin = store_->origin_descriptor();
    std::vector<ScoredCompletion> out;
    out.reserve(indices.size());
    for (const std::uint64_t gi : indices) {
        const auto key = CacheStore::generation_key(origin, req, gi);
        auto hit = store_->lookup(key);
        if (!hit)
            throw DataError("replay cache miss for sample " + std::to_string(gi) +
                            " (cache " + store_->path() + ")");
        out.push_back(std::move(*hit));
    }
    stats().backend_calls += indices.size();
    return out;
}

ScoredCompletion ReplayBackend::do_score(const ScoreRequest& req) {
    const auto key = CacheStore::scoring_key(store_->origin_descriptor(), req);
    auto hit = store_->lookup(key);
    if (!hit) throw DataError("replay cache miss for scoring request (cache " + store_->path() + ")");
    stats().backend_calls += 1;
    return std::move(*hit);
}

Capabilities ReplayBackend::do_probe() {
    Capabilities caps;
    caps.supports_sampling = store_->has_kind("gen");
    caps.supports_echo_scoring = store_->has_kind("score");
    caps.supports_logprobs = store_->has_logprobs();
    return caps;
}

std::shared_ptr<Backend> with_cache(std::shared_ptr<Backend> backend,
                                    const std::string& cache_path) {
    auto store = std::make_shared<CacheStore>(cache_path, /*writable=*/true);
    return std::make_shared<CachedBackend>(std::move(backend), std::move(store));
}

// ---- URI factory -------------------------------------------------------------------

namespace {

std::map<std::string, std::string> parse_query(const std::string& query) {
    std::map<std::string, std::string> params;
    std::size_t pos = 0;
    while (pos < query.size()) {
        auto amp = query.find('&', pos);
        if (amp == std::string::npos) amp = query.size();
        const std::string kv = query.substr(pos, amp - pos);
        const auto eq = kv.find('=');
        if (eq == std::string::npos || eq == 0)
            throw ConfigError("bad backend parameter: " + kv);
        params[kv.substr(0, eq)] = kv.substr(eq + 1);
        pos = amp + 1;
    }
    return params;
}

std::uint64_t parse_u64(const std::string& s, const std::string& what) {
    try {
        std::size_t used = 0;
        const unsigned long long v = std::stoull(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("bad " + what + ": " + s);
    }
}

std::shared_ptr<Backend> make_synthetic(const std::string& tail, const corpus::Corpus* corpus) {
    if (!corpus) throw ConfigError("synthetic backend needs a corpus");
    std::string label = tail;
    std::map<std::string, std::string> params;
    if (const auto q = tail.find('?'); q != std::string::npos) {
        label = tail.substr(0, q);
        params = parse_query(tail.substr(q + 1));
    }
    if (label.empty()) label = "default";

    SyntheticModelSpec spec;
    spec.label = label;
    std::string dist = "uniform";
    for (const auto& [k, v] : params) {
        if (k == "seed") spec.seed = parse_u64(v, "seed");
        else if (k == "tokens") spec.tokens_per_answer = static_cast<int>(parse_u64(v, "tokens"));
        else if (k == "dist") dist = v;
        else throw ConfigError("unknown synthetic backend parameter: " + k);
    }

    if (dist == "uniform") {
        for (const auto& ex : corpus->examples()) {
            DetRng rng(derive_seed(spec.seed, "difficulty", ex.id));
            spec.difficulty[ex.id] = rng.next_unit();
        }
    } else if (dist.rfind("fixed:", 0) == 0) {
        const double d = std::stod(dist.substr(6));
        for (const auto& ex : corpus->examples()) spec.difficulty[ex.id] = d;
    } else if (dist.rfind("file:", 0) == 0) {
        const json j = json::parse(read_file(dist.substr(5)));
        for (const auto& [id, v] : j.items()) spec.difficulty[id] = v.get<double>();
    } else {
        throw ConfigError("unknown synthetic dist: " + dist);
    }
    return std::make_shared<SyntheticBackend>(std::move(spec), *corpus);
}

} // namespace

std::shared_ptr<Backend> make_backend(const std::string& uri, const corpus::Corpus* corpus,
                                      const std::string& api_key) {
    if (uri.rfind("synthetic:", 0) == 0) return make_synthetic(uri.substr(10), corpus);
    if (uri.rfind("replay:", 0) == 0) {
        const std::string path = uri.substr(7);
        auto store = std::make_shared<CacheStore>(path, /*writable=*/false);
        return std::make_shared<ReplayBackend>(std::move(store), uri);
    }
    if (uri.rfind("http://", 0) == 0) {
        HttpBackendConfig cfg;
        std::string rest = uri;
        std::map<std::string, std::string> params;
        if (const auto q = rest.find('?'); q != std::string::npos) {
            params = parse_query(rest.substr(q + 1));
            rest = rest.substr(0, q);
        }
        // split host:port from path
        const auto scheme_end = std::string("http://").size();
        const auto slash = rest.find('/', scheme_end);
        if (slash == std::string::npos) {
            cfg.base_url = rest;
        } else {
            cfg.base_url = rest.substr(0, slash);
            cfg.path = rest.substr(slash);
            if (cfg.path == "/") cfg.path = "/v1/completions";
        }
        for (const auto& [k, v] : params) {
            if (k == "model") cfg.model = v;
            else if (k == "timeout") cfg.timeout_seconds = static_cast<int>(parse_u64(v, "timeout"));
            else if (k == "attempts") cfg.max_attempts = static_cast<int>(parse_u64(v, "attempts"));
            else throw ConfigError("unknown http backend parameter: " + k);
        }
        cfg.api_key = api_key;
        return std::make_shared<HttpBackend>(std::move(cfg));
    }
    if (uri.rfind("https://", 0) == 0)
        throw ConfigError("https endpoints need a TLS-enabled build; use http or a local proxy");
    throw ConfigError("unknown backend uri: " + uri +
                      " (expected synthetic:, replay:, or http://)");
}

} // namespace fuzzsel::inference
