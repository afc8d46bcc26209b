// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <unistd.h>

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "fuzzsel/corpus.hpp"
#include "fuzzsel/errors.hpp"
#include "fuzzsel/hash.hpp"
#include "fuzzsel/inference.hpp"

namespace testutil {

using fuzzsel::corpus::Corpus;
using fuzzsel::corpus::Example;

inline std::string test_id(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "q%05zu", i);
    return buf;
}

// Corpus of m numeric questions; gold answer for q<i> is 10 + i.
inline Corpus make_corpus(std::size_t m) {
    std::vector<Example> examples;
    examples.reserve(m);
    for (std::size_t i = 0; i < m; ++i) {
        Example ex;
        ex.id = test_id(i);
        ex.prompt = "Problem " + std::to_string(i) + ": add " + std::to_string(i) + " and 10.";
        ex.gold_answer = std::to_string(10 + i);
        ex.reference_solution =
            "Adding gives " + ex.gold_answer + ".\n#### " + ex.gold_answer;
        examples.push_back(std::move(ex));
    }
    return Corpus(std::move(examples), "<memory>", fuzzsel::corpus::Format::gsm8k);
}

inline std::string write_corpus_file(const std::string& path, std::size_t m) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    for (std::size_t i = 0; i < m; ++i) {
        const std::string gold = std::to_string(10 + i);
        out << "{\"id\":\"" << test_id(i) << "\",\"prompt\":\"Problem " << i << ": add " << i
            << " and 10.\",\"solution\":\"Adding gives " << gold << ".\\n#### " << gold
            << "\"}\n";
    }
    out.close();
    return path;
}

// Difficulty map: deterministic uniform draws per id.
inline std::unordered_map<std::string, double> uniform_difficulty(const Corpus& corpus,
                                                                  std::uint64_t seed) {
    std::unordered_map<std::string, double> d;
    for (const auto& ex : corpus.examples()) {
        fuzzsel::DetRng rng(fuzzsel::derive_seed(seed, "difficulty", ex.id));
        d[ex.id] = rng.next_unit();
    }
    return d;
}

inline std::shared_ptr<fuzzsel::inference::SyntheticBackend> make_synthetic(
    const Corpus& corpus, std::unordered_map<std::string, double> difficulty,
    int tokens_per_answer = 4, std::uint64_t seed = 0) {
    fuzzsel::inference::SyntheticModelSpec spec;
    spec.difficulty = std::move(difficulty);
    spec.tokens_per_answer = tokens_per_answer;
    spec.seed = seed;
    spec.label = "test";
    return std::make_shared<fuzzsel::inference::SyntheticBackend>(std::move(spec), corpus);
}

// Scripted backend: returns canned completion texts round-robin. For exact
// reward patterns in estimator tests.
class ScriptedBackend final : public fuzzsel::inference::Backend {
  public:
    explicit ScriptedBackend(std::vector<std::string> texts,
                             std::vector<double> logprobs = {})
        : Backend("scripted:test"), texts_(std::move(texts)), logprobs_(std::move(logprobs)) {}

  protected:
    std::vector<fuzzsel::inference::ScoredCompletion> do_generate(
        const fuzzsel::inference::GenerationRequest&,
        std::span<const std::uint64_t> indices) override {
        std::vector<fuzzsel::inference::ScoredCompletion> out;
        for (const std::uint64_t gi : indices) {
            fuzzsel::inference::ScoredCompletion c;
            c.text = texts_[gi % texts_.size()];
            c.token_logprobs = logprobs_;
            out.push_back(std::move(c));
        }
        stats().backend_calls += indices.size();
        return out;
    }
    fuzzsel::inference::ScoredCompletion do_score(
        const fuzzsel::inference::ScoreRequest& req) override {
        fuzzsel::inference::ScoredCompletion c;
        c.text = req.target;
        c.token_logprobs = logprobs_;
        stats().backend_calls += 1;
        return c;
    }
    fuzzsel::inference::Capabilities do_probe() override { return {true, true, !logprobs_.empty()}; }

  private:
    std::vector<std::string> texts_;
    std::vector<double> logprobs_;
};

// Fault injection: delegates to an inner backend, failing every request after
// the first `budget` have gone through.
class FlakyBackend final : public fuzzsel::inference::Backend {
  public:
    FlakyBackend(std::shared_ptr<fuzzsel::inference::Backend> inner, std::uint64_t budget)
        : Backend(inner->descriptor()), inner_(std::move(inner)), budget_(budget) {}

  protected:
    std::vector<fuzzsel::inference::ScoredCompletion> do_generate(
        const fuzzsel::inference::GenerationRequest& req,
        std::span<const std::uint64_t> indices) override {
        spend(indices.size());
        return inner_->generate_at(req, indices);
    }
    fuzzsel::inference::ScoredCompletion do_score(
        const fuzzsel::inference::ScoreRequest& req) override {
        spend(1);
        return inner_->score_sequence(req);
    }
    fuzzsel::inference::Capabilities do_probe() override { return inner_->capabilities(); }

  private:
    void spend(std::uint64_t n) {
        if (used_.fetch_add(n) + n > budget_)
            throw fuzzsel::TransportError("injected fault: request budget exhausted");
    }
    std::shared_ptr<fuzzsel::inference::Backend> inner_;
    std::uint64_t budget_;
    std::atomic<std::uint64_t> used_{0};
};

// Unique scratch directory under the build tree, removed on destruction.
class TempDir {
  public:
    explicit TempDir(const std::string& tag) {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("fuzzsel_test_" + tag + "_" + std::to_string(::getpid()) + "_" +
                 std::to_string(counter.fetch_add(1)));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }
    std::string str(const std::string& rel = "") const {
        return rel.empty() ? path_.string() : (path_ / rel).string();
    }

  private:
    std::filesystem::path path_;
};

} // namespace testutil
