// SPDX-License-Identifier: Apache-2.0
#include "fuzzsel/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>

#include "fuzzsel/errors.hpp"
#include "fuzzsel/hash.hpp"
#include "fuzzsel/jsonl.hpp"

namespace fuzzsel::corpus {

namespace {

std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

// Gold answer for a gsm8k-style solution: text after the last "####", cut at
// the end of that line, trimmed.
std::optional<std::string> marker_answer(std::string_view solution) {
    const auto pos = solution.rfind("####");
    if (pos == std::string_view::npos) return std::nullopt;
    std::string_view rest = solution.substr(pos + 4);
    const auto nl = rest.find('\n');
    if (nl != std::string_view::npos) rest = rest.substr(0, nl);
    std::string ans = trim(rest);
    if (ans.empty()) return std::nullopt;
    return ans;
}

std::string synth_id(std::size_t record_index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%08zu", record_index);
    return buf;
}

} // namespace

Format parse_format(const std::string& name) {
    if (name == "gsm8k") return Format::gsm8k;
    if (name == "generic") return Format::generic;
    throw ConfigError("unknown corpus format: " + name + " (expected gsm8k or generic)");
}

std::string format_name(Format f) { return f == Format::gsm8k ? "gsm8k" : "generic"; }

Corpus::Corpus(std::vector<Example> examples, std::string source_path, Format format)
    : examples_(std::move(examples)), source_path_(std::move(source_path)), format_(format) {
    index_.reserve(examples_.size());
    for (std::size_t i = 0; i < examples_.size(); ++i) index_[examples_[i].id] = i;
}

const Example* Corpus::find(const std::string& id) const {
    const auto it = index_.find(id);
    return it == index_.end() ? nullptr : &examples_[it->second];
}

const Example& Corpus::at(const std::string& id) const {
    const Example* ex = find(id);
    if (!ex) throw DataError("unknown example id: " + id);
    return *ex;
}

std::string Corpus::content_hash() const {
    FieldHasher h;
    h.add(format_name(format_));
    for (const auto& ex : examples_) {
        h.add(ex.id).add(ex.prompt).add(ex.reference_solution.value_or("\x00missing"));
        h.add(ex.gold_answer);
    }
    return h.hex();
}

Corpus load_corpus(const std::string& path, Format format) {
    std::vector<Example> examples;
    std::set<std::string> seen_ids;

    for_each_line(path, [&](std::size_t lineno, std::string_view line) {
        if (!is_valid_utf8(line))
            throw DataError(path + ":" + std::to_string(lineno) + ": invalid UTF-8");
        if (trim(line).empty())
            throw DataError(path + ":" + std::to_string(lineno) + ": blank line in record file");

        json rec = json::parse(line, nullptr, false);
        if (rec.is_discarded() || !rec.is_object())
            throw DataError(path + ":" + std::to_string(lineno) + ": malformed record line");

        Example ex;
        if (rec.contains("id")) {
            if (!rec["id"].is_string())
                throw DataError(path + ":" + std::to_string(lineno) + ": id must be a string");
            ex.id = rec["id"].get<std::string>();
        } else {
            ex.id = synth_id(examples.size());
        }
        if (!rec.contains("prompt") || !rec["prompt"].is_string())
            throw DataError(path + ":" + std::to_string(lineno) + ": missing prompt field");
        ex.prompt = rec["prompt"].get<std::string>();
        if (ex.prompt.empty())
            throw DataError("record " + ex.id + ": empty prompt");

        if (rec.contains("solution")) {
            if (!rec["solution"].is_string())
                throw DataError(path + ":" + std::to_string(lineno) + ": solution must be a string");
            ex.reference_solution = rec["solution"].get<std::string>();
        }

        if (format == Format::gsm8k) {
            if (!ex.reference_solution)
                throw DataError("record " + ex.id + ": gsm8k record has no solution field");
            const auto gold = marker_answer(*ex.reference_solution);
            if (!gold)
                throw DataError("record " + ex.id +
                                ": solution has no final-answer marker (\"####\")");
            ex.gold_answer = *gold;
        } else {
            if (!rec.contains("answer") || !rec["answer"].is_string())
                throw DataError("record " + ex.id + ": generic record has no answer field");
            ex.gold_answer = trim(rec["answer"].get<std::string>());
            if (ex.gold_answer.empty())
                throw DataError("record " + ex.id + ": empty answer");
        }

        if (!seen_ids.insert(ex.id).second)
            throw DataError("duplicate id \"" + ex.id + "\" at " + path + ":" +
                            std::to_string(lineno));
        examples.push_back(std::move(ex));
    });

    if (examples.empty()) throw DataError("empty corpus: " + path);
    return Corpus(std::move(examples), path, format);
}

std::string record_line(const Example& ex, Format format) {
    json rec;
    rec["id"] = ex.id;
    rec["prompt"] = ex.prompt;
    if (ex.reference_solution) rec["solution"] = *ex.reference_solution;
    if (format == Format::generic) rec["answer"] = ex.gold_answer;
    return canonical_json_line(rec);
}

std::size_t export_subset(const Corpus& corpus, const std::set<std::string>& ids,
                          const std::string& path) {
    std::vector<std::string> missing;
    for (const auto& id : ids)
        if (!corpus.find(id)) missing.push_back(id);
    if (!missing.empty()) {
        std::ostringstream msg;
        msg << "unknown ids in subset:";
        for (const auto& id : missing) msg << " " << id;
        throw DataError(msg.str());
    }

    std::ostringstream out;
    std::size_t written = 0;
    for (const auto& ex : corpus.examples()) {
        if (!ids.count(ex.id)) continue;
        out << record_line(ex, corpus.format()) << "\n";
        ++written;
    }
    write_file(path, out.str());
    return written;
}

} // namespace fuzzsel::corpus
