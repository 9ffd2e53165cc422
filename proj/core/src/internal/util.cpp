// SPDX-License-Identifier: Apache-2.0
#include "internal/util.hpp"

#include <openssl/evp.h>

#include <cctype>
#include <chrono>
#include <cstdio>
#include <fstream>

#include "capqa/errors.hpp"

namespace capqa::detail {

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int digest_len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &digest_len, EVP_sha256(), nullptr) != 1) {
    throw Error("sha256 digest failed");
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  out.reserve(digest_len * 2);
  for (unsigned int i = 0; i < digest_len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xf]);
  }
  return out;
}

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

bool ends_with_terminal_punctuation(std::string_view s) {
  std::size_t e = s.size();
  while (e > 0 && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  if (e == 0) return false;
  const char c = s[e - 1];
  return c == '.' || c == '!' || c == '?';
}

std::string sanitize_filename(std::string_view name) {
  std::string out;
  out.reserve(name.size());
  for (const char c : name) {
    const bool safe = std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '_' || c == '-';
    if (safe) {
      out.push_back(c);
    } else {
      char buf[4];
      std::snprintf(buf, sizeof(buf), "%%%02x", static_cast<unsigned char>(c));
      out.append(buf);
    }
  }
  return out.empty() ? std::string("_") : out;
}

void corpus_fail(const std::filesystem::path& path, std::size_t line_no,
                 const std::string& message) {
  throw CorpusError(path.string() + ":" + std::to_string(line_no) + ": " + message);
}

json read_jsonl(const std::filesystem::path& path, const std::string& expected_format,
                const std::function<void(std::size_t, const json&)>& record) {
  std::ifstream in(path);
  if (!in) {
    throw CorpusError("cannot open corpus file: " + path.string());
  }
  std::string line;
  std::size_t line_no = 0;
  json header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    json value = json::parse(line, nullptr, false);
    if (value.is_discarded()) {
      corpus_fail(path, line_no, "invalid JSON");
    }
    if (header.is_null()) {
      if (!value.is_object() || !value.contains("format")) {
        corpus_fail(path, line_no, "missing header line with a \"format\" field");
      }
      const auto format = value["format"].get<std::string>();
      if (format != expected_format) {
        corpus_fail(path, line_no,
                    "unexpected format \"" + format + "\" (want \"" + expected_format + "\")");
      }
      if (!value.contains("version") || value["version"] != 1) {
        corpus_fail(path, line_no, "unsupported corpus version (want 1)");
      }
      header = std::move(value);
      continue;
    }
    record(line_no, value);
  }
  if (header.is_null()) {
    throw CorpusError(path.string() + ": empty corpus (no header line)");
  }
  return header;
}

std::int64_t unix_ms_now() {
  using namespace std::chrono;
  return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

std::string iso8601_utc(std::int64_t unix_ms) {
  const std::time_t secs = static_cast<std::time_t>(unix_ms / 1000);
  std::tm tm{};
  gmtime_r(&secs, &tm);
  char buf[80];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900,
                tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec,
                static_cast<int>(unix_ms % 1000));
  return buf;
}

}  // namespace capqa::detail
