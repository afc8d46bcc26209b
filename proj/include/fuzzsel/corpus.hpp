// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

namespace fuzzsel::corpus {

enum class Format { gsm8k, generic };

Format parse_format(const std::string& name); // "gsm8k" | "generic"
std::string format_name(Format f);

// One training instance. For gsm8k-style records the gold answer is the text
// after the last "####" marker of the solution, cut at the end of that line
// and trimmed; the full solution is kept for teacher-forced scoring.
struct Example {
    std::string id;
    std::string prompt;
    std::optional<std::string> reference_solution;
    std::string gold_answer;
};

// Read-only after load; safe to share across threads.
class Corpus {
  public:
    Corpus(std::vector<Example> examples, std::string source_path, Format format);

    const std::vector<Example>& examples() const { return examples_; }
    std::size_t size() const { return examples_.size(); }
    const std::string& source_path() const { return source_path_; }
    Format format() const { return format_; }

    const Example* find(const std::string& id) const;
    const Example& at(const std::string& id) const; // throws DataError if absent

    // Stable content hash over record fields, independent of file path.
    std::string content_hash() const;

  private:
    std::vector<Example> examples_;
    std::string source_path_;
    Format format_;
    std::unordered_map<std::string, std::size_t> index_;
};

// Loads a line-delimited record file. Each line is a JSON object with fields
// id / prompt / solution (gsm8k) or id / prompt / solution? / answer
// (generic). Missing ids are synthesized as zero-padded record indices.
// Unknown fields are ignored. Invalid UTF-8, malformed lines, duplicate ids,
// missing final-answer markers and empty files are errors.
Corpus load_corpus(const std::string& path, Format format);

// Writes the selected examples, in original corpus order, in the same record
// schema. Returns the number written. Unknown ids are an error listing every
// missing id.
std::size_t export_subset(const Corpus& corpus, const std::set<std::string>& ids,
                          const std::string& path);

// Serializes one example back to its record-schema JSON line.
std::string record_line(const Example& ex, Format format);

} // namespace fuzzsel::corpus
