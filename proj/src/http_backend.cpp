// SPDX-License-Identifier: Apache-2.0
#include <chrono>
#include <cmath>
#include <sstream>
#include <thread>

#include <httplib.h>

#include "fuzzsel/errors.hpp"
#include "fuzzsel/hash.hpp"
#include "fuzzsel/inference.hpp"
#include "fuzzsel/jsonl.hpp"

namespace fuzzsel::inference {

namespace {

std::string make_descriptor(const HttpBackendConfig& cfg) {
    return cfg.base_url + cfg.path + "?model=" + cfg.model;
}

bool retryable_status(int status) { return status >= 500 && status < 600; }

// Pulls token logprobs out of a choice, skipping nulls (the first echoed
// token has no conditioning context). `min_offset` filters echo responses
// down to the target suffix.
std::vector<double> choice_logprobs(const json& choice, std::size_t min_offset) {
    std::vector<double> out;
    if (!choice.contains("logprobs") || choice["logprobs"].is_null()) return out;
    const json& lp = choice["logprobs"];
    if (!lp.contains("token_logprobs")) return out;
    const json& vals = lp["token_logprobs"];
    const json* offsets = nullptr;
    if (min_offset > 0) {
        if (!lp.contains("text_offset"))
            throw DataError("echo response lacks text_offset; cannot locate target tokens");
        offsets = &lp["text_offset"];
        if (offsets->size() != vals.size())
            throw DataError("echo response offset/logprob length mismatch");
    }
    for (std::size_t i = 0; i < vals.size(); ++i) {
        if (vals[i].is_null()) continue;
        if (offsets && (*offsets)[i].get<std::size_t>() < min_offset) continue;
        out.push_back(vals[i].get<double>());
    }
    return out;
}

} // namespace

HttpBackend::HttpBackend(HttpBackendConfig cfg)
    : Backend(make_descriptor(cfg)), cfg_(std::move(cfg)) {}

std::string HttpBackend::post_with_retries(const std::string& body, const std::string& op) {
    std::ostringstream attempt_log;
    const std::uint64_t jitter_seed = fnv1a64(body);

    for (int attempt = 1; attempt <= cfg_.max_attempts; ++attempt) {
        stats().transport_calls += 1;
        httplib::Client client(cfg_.base_url);
        client.set_connection_timeout(cfg_.timeout_seconds, 0);
        client.set_read_timeout(cfg_.timeout_seconds, 0);
        httplib::Headers headers;
        if (!cfg_.api_key.empty())
            headers.emplace("Authorization", "Bearer " + cfg_.api_key);

        auto res = client.Post(cfg_.path, headers, body, "application/json");
        if (res && res->status >= 200 && res->status < 300) return res->body;

        if (res && !retryable_status(res->status)) {
            // 4xx is permanent: the endpoint understood us and said no.
            std::string detail = res->body.substr(0, 200);
            throw CapabilityError(op + " rejected by endpoint (status " +
                                  std::to_string(res->status) + "): " + detail);
        }

        attempt_log << "  attempt " << attempt << ": "
                    << (res ? "status " + std::to_string(res->status)
                            : "transport error " + httplib::to_string(res.error()))
                    << "\n";
        if (attempt == cfg_.max_attempts) break;
        stats().transport_retries += 1;
        // Exponential backoff with deterministic jitter; no ambient entropy.
        DetRng rng(derive_seed(jitter_seed, "retry", "", static_cast<std::uint64_t>(attempt)));
        const double scale = 0.5 + rng.next_unit();
        const auto delay_ms = static_cast<std::int64_t>(
            cfg_.backoff_base_ms * std::pow(2.0, attempt - 1) * scale);
        std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms));
    }
    throw TransportError(op + " failed after " + std::to_string(cfg_.max_attempts) +
                         " attempts against " + cfg_.base_url + cfg_.path + ":\n" +
                         attempt_log.str());
}

std::vector<ScoredCompletion> HttpBackend::do_generate(const GenerationRequest& req,
                                                       std::span<const std::uint64_t> indices) {
    json body;
    body["model"] = cfg_.model;
    body["prompt"] = req.prompt;
    body["n"] = indices.size();
    body["temperature"] = req.temperature;
    body["max_tokens"] = req.max_new_tokens;
    if (req.want_logprobs) body["logprobs"] = 0;
    if (req.seed) body["seed"] = *req.seed;
    if (req.top_p) body["top_p"] = *req.top_p;

    const std::string resp = post_with_retries(canonical_json_line(body), "generation");
    json j = json::parse(resp, nullptr, false);
    if (j.is_discarded() || !j.contains("choices"))
        throw DataError("malformed completion response (no choices)");
    const json& choices = j["choices"];
    if (choices.size() != indices.size())
        throw DataError("endpoint returned " + std::to_string(choices.size()) +
                        " choices for n=" + std::to_string(indices.size()));

    std::vector<ScoredCompletion> out;
    out.reserve(choices.size());
    for (const auto& choice : choices) {
        ScoredCompletion c;
        c.text = choice.at("text").get<std::string>();
        c.token_logprobs = choice_logprobs(choice, 0);
        out.push_back(std::move(c));
    }
    stats().backend_calls += indices.size();
    return out;
}

ScoredCompletion HttpBackend::do_score(const ScoreRequest& req) {
    json body;
    body["model"] = cfg_.model;
    body["prompt"] = req.prompt + req.target;
    body["max_tokens"] = 0;
    body["echo"] = true;
    body["logprobs"] = 0;

    const std::string resp = post_with_retries(canonical_json_line(body), "echo scoring");
    json j = json::parse(resp, nullptr, false);
    if (j.is_discarded() || !j.contains("choices") || j["choices"].empty())
        throw DataError("malformed echo response (no choices)");

    ScoredCompletion c;
    c.text = req.target;
    c.token_logprobs = choice_logprobs(j["choices"][0], req.prompt.size());
    if (c.token_logprobs.empty())
        throw DataError("endpoint returned no logprobs for the target span");
    stats().backend_calls += 1;
    return c;
}

Capabilities HttpBackend::do_probe() {
    Capabilities caps;

    // generation + logprobs
    try {
        json body;
        body["model"] = cfg_.model;
        body["prompt"] = "probe";
        body["n"] = 1;
        body["max_tokens"] = 1;
        body["temperature"] = 0.0;
        body["logprobs"] = 0;
        const std::string resp = post_with_retries(canonical_json_line(body), "probe");
        json j = json::parse(resp, nullptr, false);
        if (!j.is_discarded() && j.contains("choices") && !j["choices"].empty()) {
            caps.supports_sampling = true;
            caps.supports_logprobs = !choice_logprobs(j["choices"][0], 0).empty();
        }
    } catch (const CapabilityError&) {
        // endpoint rejected the shape; leave flags false
    }

    // echo scoring
    try {
        json body;
        body["model"] = cfg_.model;
        body["prompt"] = "probe target";
        body["max_tokens"] = 0;
        body["echo"] = true;
        body["logprobs"] = 0;
        const std::string resp = post_with_retries(canonical_json_line(body), "echo probe");
        json j = json::parse(resp, nullptr, false);
        if (!j.is_discarded() && j.contains("choices") && !j["choices"].empty())
            caps.supports_echo_scoring = !choice_logprobs(j["choices"][0], 1).empty();
    } catch (const CapabilityError&) {
    }

    return caps;
}

} // namespace fuzzsel::inference
