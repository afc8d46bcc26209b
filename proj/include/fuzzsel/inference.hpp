// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "fuzzsel/corpus.hpp"

namespace fuzzsel::inference {

struct GenerationRequest {
    std::string prompt;
    int n_samples = 1;
    double temperature = 1.0;
    int max_new_tokens = 512;
    std::optional<std::uint64_t> seed;
    std::optional<double> top_p;
    bool want_logprobs = true;
    // Global index of the first sample; lets a cache layer regenerate sample
    // j without shifting the seeds of the others.
    std::uint64_t sample_offset = 0;
    // Hint for backends that key behaviour on the example (synthetic oracle).
    std::optional<std::string> example_id;

    void validate() const; // n_samples >= 1, temperature >= 0
};

struct ScoreRequest {
    std::string prompt;
    std::string target;
    std::optional<std::string> example_id;

    void validate() const; // target non-empty
};

struct ScoredCompletion {
    std::string text;
    std::vector<double> token_logprobs; // natural log, every entry <= 0
    std::size_t token_count() const { return token_logprobs.size(); }
};

struct Capabilities {
    bool supports_sampling = false;
    bool supports_echo_scoring = false;
    bool supports_logprobs = false;
};

// Logical request counters. One sampled completion counts as one generation
// request regardless of transport batching, so the accuracy/confidence ratio
// stays M*N : M. Remote transport calls are tracked separately.
struct BackendStats {
    std::atomic<std::uint64_t> generation_requests{0};
    std::atomic<std::uint64_t> scoring_requests{0};
    std::atomic<std::uint64_t> generated_tokens{0};
    std::atomic<std::uint64_t> scored_tokens{0};
    std::atomic<std::uint64_t> backend_calls{0}; // non-cache-served requests
    std::atomic<std::uint64_t> cache_hits{0};
    std::atomic<std::uint64_t> transport_calls{0};
    std::atomic<std::uint64_t> transport_retries{0};
};

class Backend {
  public:
    virtual ~Backend() = default;

    // Stable identifier used in cache keys and manifests.
    const std::string& descriptor() const { return descriptor_; }

    // n_samples independent completions, logprobs populated when supported.
    std::vector<ScoredCompletion> generate(const GenerationRequest& req);

    // Produces exactly the given global sample indices. The cache layer uses
    // this to regenerate missing samples without disturbing the others.
    std::vector<ScoredCompletion> generate_at(const GenerationRequest& req,
                                              std::span<const std::uint64_t> indices);

    // One log-probability per target token, conditioned on prompt plus the
    // preceding target tokens, in a single scoring call. No sampling.
    ScoredCompletion score_sequence(const ScoreRequest& req);

    // Cheap capability probe, cached per session.
    Capabilities capabilities();

    BackendStats& stats() { return stats_; }
    const BackendStats& stats() const { return stats_; }

  protected:
    explicit Backend(std::string descriptor) : descriptor_(std::move(descriptor)) {}

    // indices: global sample indices to produce (size == result size).
    virtual std::vector<ScoredCompletion> do_generate(const GenerationRequest& req,
                                                      std::span<const std::uint64_t> indices) = 0;
    virtual ScoredCompletion do_score(const ScoreRequest& req) = 0;
    virtual Capabilities do_probe() = 0;

    void count_generated(const std::vector<ScoredCompletion>& batch);
    void count_scored(const ScoredCompletion& c);

  private:
    std::string descriptor_;
    BackendStats stats_;
    std::once_flag caps_once_;
    Capabilities caps_{};
};

// Deterministic oracle model. Per example with difficulty d in [0,1]:
//   certainty s_true = 1 - d, floored at epsilon = 1e-9;
//   every emitted token log-probability is ln(s_true);
//   each sampled completion carries the gold answer with probability 1 - d
//   (seeded draw), otherwise a wrong answer;
//   scoring any target yields tokens_per_answer logprobs of ln(s_true).
// With temperature 0 the completion is correct iff d <= 0.5.
struct SyntheticModelSpec {
    std::unordered_map<std::string, double> difficulty; // id -> d in [0,1]
    int tokens_per_answer = 4;
    std::uint64_t seed = 0;
    std::string label = "synthetic";

    void validate() const;
};

constexpr double kSyntheticEpsilon = 1e-9;

// s_true for a difficulty value, exactly as the backend emits it.
double synthetic_certainty(double difficulty);

class SyntheticBackend final : public Backend {
  public:
    SyntheticBackend(SyntheticModelSpec spec, const corpus::Corpus& corpus);

    double difficulty_of(const std::string& example_id) const;
    const SyntheticModelSpec& spec() const { return spec_; }

  protected:
    std::vector<ScoredCompletion> do_generate(const GenerationRequest&,
                                              std::span<const std::uint64_t>) override;
    ScoredCompletion do_score(const ScoreRequest&) override;
    Capabilities do_probe() override;

  private:
    struct Entry {
        double difficulty;
        std::string gold;
        std::string prompt;
    };
    const Entry& resolve(const std::optional<std::string>& id_hint,
                         const std::string& prompt) const;

    SyntheticModelSpec spec_;
    std::unordered_map<std::string, Entry> by_id_;
    std::unordered_map<std::string, std::string> by_prompt_; // prompt -> id
};

// Append-only line-delimited response store keyed by a content hash of the
// full request. A header line records which backend the entries came from so
// replay runs rebuild the same keys. Thread-safe.
class CacheStore {
  public:
    // Opens (creating if needed when writable) and loads existing entries.
    CacheStore(std::string path, bool writable);

    std::optional<ScoredCompletion> lookup(const std::string& key) const;
    void put(const std::string& key, std::string_view kind, const ScoredCompletion& value);

    // Records (or validates) the descriptor of the backend being cached.
    void set_origin(const std::string& descriptor);
    const std::string& origin_descriptor() const { return origin_descriptor_; }

    std::size_t size() const;
    bool has_kind(std::string_view kind) const;
    bool has_logprobs() const;
    const std::string& path() const { return path_; }

    static std::string generation_key(const std::string& backend_descriptor,
                                      const GenerationRequest& req, std::uint64_t sample_index);
    static std::string scoring_key(const std::string& backend_descriptor,
                                   const ScoreRequest& req);

  private:
    void append_line(const std::string& line);

    std::string path_;
    bool writable_;
    std::string origin_descriptor_;
    std::unordered_map<std::string, ScoredCompletion> entries_;
    std::unordered_map<std::string, bool> kinds_;
    bool any_logprobs_ = false;
    mutable std::shared_mutex mutex_;
};

// Serves hits from the store and delegates misses to the inner backend,
// appending fresh results. With a warm cache, repeated runs perform zero
// inner-backend calls and return byte-identical completions.
class CachedBackend final : public Backend {
  public:
    CachedBackend(std::shared_ptr<Backend> inner, std::shared_ptr<CacheStore> store);

    Backend& inner() { return *inner_; }

  protected:
    std::vector<ScoredCompletion> do_generate(const GenerationRequest&,
                                              std::span<const std::uint64_t>) override;
    ScoredCompletion do_score(const ScoreRequest&) override;
    Capabilities do_probe() override;

  private:
    std::shared_ptr<Backend> inner_;
    std::shared_ptr<CacheStore> store_;
};

// Replays a recorded cache with no live backend behind it. Misses are
// errors; capabilities reflect which entry kinds the store holds.
class ReplayBackend final : public Backend {
  public:
    explicit ReplayBackend(std::shared_ptr<CacheStore> store, std::string descriptor);

  protected:
    std::vector<ScoredCompletion> do_generate(const GenerationRequest&,
                                              std::span<const std::uint64_t>) override;
    ScoredCompletion do_score(const ScoreRequest&) override;
    Capabilities do_probe() override;

  private:
    std::shared_ptr<CacheStore> store_;
};

// OpenAI-compatible HTTP completions endpoint. Generation posts
// n/temperature/max_tokens/logprobs; teacher-forced scoring posts the
// concatenated prompt+target with echo=true, logprobs and zero new tokens,
// then keeps the logprobs of tokens whose text offset falls inside the
// target. Transport and 5xx failures retry up to max_attempts with
// exponential backoff and deterministic jitter.
struct HttpBackendConfig {
    std::string base_url;  // e.g. http://127.0.0.1:8089
    std::string path = "/v1/completions";
    std::string model = "default";
    std::string api_key;   // empty -> no Authorization header
    int max_attempts = 5;
    int timeout_seconds = 60;
    int backoff_base_ms = 100;
};

class HttpBackend final : public Backend {
  public:
    explicit HttpBackend(HttpBackendConfig cfg);

  protected:
    std::vector<ScoredCompletion> do_generate(const GenerationRequest&,
                                              std::span<const std::uint64_t>) override;
    ScoredCompletion do_score(const ScoreRequest&) override;
    Capabilities do_probe() override;

  private:
    std::string post_with_retries(const std::string& body, const std::string& op);

    HttpBackendConfig cfg_;
};

// Builds a backend from a URI:
//   synthetic:<label>?seed=..&tokens=..&dist=uniform|fixed:<d>  (needs corpus)
//   replay:<cache path>
//   http://host:port[/path]?model=<name>
// `api_key` comes from the environment variable named by the caller.
std::shared_ptr<Backend> make_backend(const std::string& uri, const corpus::Corpus* corpus,
                                      const std::string& api_key);

// Wraps `backend` with a cache stored at `cache_path`.
std::shared_ptr<Backend> with_cache(std::shared_ptr<Backend> backend,
                                    const std::string& cache_path);

} // namespace fuzzsel::inference
