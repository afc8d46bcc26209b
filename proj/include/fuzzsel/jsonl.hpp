// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <string>
#include <string_view>

#include <json.hpp>

namespace fuzzsel {

using json = nlohmann::json;

// Strict UTF-8 check (rejects overlongs, surrogates, > U+10FFFF).
bool is_valid_utf8(std::string_view bytes);

// Calls fn(line_number, line) for every line of a line-delimited file.
// Line numbers are 1-based. A trailing newline does not produce an extra
// empty line. Throws DataError if the file cannot be opened.
void for_each_line(const std::string& path,
                   const std::function<void(std::size_t, std::string_view)>& fn);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view content);
bool file_exists(const std::string& path);

// Canonical one-line serialization: compact separators, keys sorted
// (nlohmann objects iterate in key order). Used everywhere a file must be
// byte-reproducible.
std::string canonical_json_line(const json& j);

} // namespace fuzzsel
