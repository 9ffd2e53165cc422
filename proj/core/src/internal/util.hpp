// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

namespace capqa::detail {

using json = nlohmann::json;

std::string sha256_hex(std::string_view bytes);

std::string trim(std::string_view s);

/// True when the string ends with '.', '!' or '?' (after trailing spaces).
bool ends_with_terminal_punctuation(std::string_view s);

/// Filesystem-safe name: [A-Za-z0-9._-] kept, everything else hex-escaped.
std::string sanitize_filename(std::string_view name);

/// Reads a line-delimited JSON corpus file. Validates the header line
/// ({"format": <expected>, "version": 1}) and calls `record` for every
/// subsequent non-empty line with its 1-based line number. Throws CorpusError
/// naming file and line on malformed input.
json read_jsonl(const std::filesystem::path& path, const std::string& expected_format,
                const std::function<void(std::size_t line_no, const json& record)>& record);

/// Shorthand for "<path>:<line>: <msg>" corpus errors.
[[noreturn]] void corpus_fail(const std::filesystem::path& path, std::size_t line_no,
                              const std::string& message);

std::int64_t unix_ms_now();
std::string iso8601_utc(std::int64_t unix_ms);

}  // namespace capqa::detail
