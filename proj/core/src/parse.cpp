// SPDX-License-Identifier: Apache-2.0
#include "capqa/parse.hpp"

#include <cctype>

namespace capqa {

namespace {

bool is_option_letter(char c) {
  const char u = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return u >= 'A' && u <= 'E';
}

int option_index(char c) {
  return std::toupper(static_cast<unsigned char>(c)) - 'A';
}

bool is_word_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) != 0;
}

}  // namespace

ChoiceOutcome parse_choice(std::string_view text) {
  ChoiceOutcome outcome;
  outcome.raw_text = std::string(text);

  // Primary rule: the first non-whitespace character wins outright, whatever
  // follows it.
  std::size_t i = 0;
  while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
  if (i < text.size() && is_option_letter(text[i])) {
    outcome.index = option_index(text[i]);
    return outcome;
  }

  // Fallback: first standalone option letter bounded by non-word characters.
  for (std::size_t j = 0; j < text.size(); ++j) {
    if (!is_option_letter(text[j])) continue;
    const bool left_ok = j == 0 || !is_word_char(text[j - 1]);
    const bool right_ok = j + 1 >= text.size() || !is_word_char(text[j + 1]);
    if (left_ok && right_ok) {
      outcome.index = option_index(text[j]);
      return outcome;
    }
  }
  return outcome;  // parse failure carries the raw text
}

std::optional<IntervalPrediction> parse_intervals(std::string_view text) {
  IntervalPrediction prediction;

  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t open = text.find('[', pos);
    if (open == std::string_view::npos) break;
    std::size_t cursor = open + 1;

    auto read_int = [&](std::int64_t& out) {
      while (cursor < text.size() && std::isspace(static_cast<unsigned char>(text[cursor]))) ++cursor;
      const std::size_t digits_begin = cursor;
      while (cursor < text.size() && std::isdigit(static_cast<unsigned char>(text[cursor]))) ++cursor;
      if (cursor == digits_begin) return false;
      out = 0;
      for (std::size_t k = digits_begin; k < cursor; ++k) out = out * 10 + (text[k] - '0');
      while (cursor < text.size() && std::isspace(static_cast<unsigned char>(text[cursor]))) ++cursor;
      return true;
    };

    std::int64_t a = 0;
    std::int64_t b = 0;
    if (read_int(a) && cursor < text.size() && text[cursor] == ',' && (++cursor, read_int(b)) &&
        cursor < text.size() && text[cursor] == ']') {
      if (a > b) {
        std::swap(a, b);
        prediction.normalized_swap = true;
      }
      prediction.intervals.push_back({a, b});
      pos = cursor + 1;
    } else {
      pos = open + 1;
    }
  }

  if (prediction.intervals.empty()) return std::nullopt;
  return prediction;
}

std::string format_intervals(const IntervalPrediction& prediction) {
  std::string out;
  for (std::size_t i = 0; i < prediction.intervals.size(); ++i) {
    if (i > 0) out += " and ";
    out += "[" + std::to_string(prediction.intervals[i].first) + ", " +
           std::to_string(prediction.intervals[i].last) + "]";
  }
  return out;
}

}  // namespace capqa
