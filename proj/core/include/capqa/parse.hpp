// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace capqa {

/// Outcome of reading a multiple-choice answer out of raw model text.
/// Parse failure is a value, not an error: failed items score as incorrect
/// and are reported separately.
struct ChoiceOutcome {
  std::optional<int> index;  // 0..4 <=> A..E
  std::string raw_text;

  bool parsed() const { return index.has_value(); }
  char letter() const { return static_cast<char>('A' + *index); }
};

/// Primary rule: the first non-whitespace character, case-insensitive, wins
/// when it is one of A-E. Fallback: the first standalone letter token A-E
/// bounded by non-alphanumerics. Otherwise a parse failure carrying the raw
/// text.
ChoiceOutcome parse_choice(std::string_view text);

/// Inclusive frame-index interval [first, last], first <= last.
struct FrameInterval {
  std::int64_t first = 0;
  std::int64_t last = 0;

  bool operator==(const FrameInterval&) const = default;
};

struct IntervalPrediction {
  std::vector<FrameInterval> intervals;  // non-empty
  bool normalized_swap = false;          // at least one pair arrived inverted
};

/// Extracts "[int, int]" groups from model text; surrounding prose and "and"
/// joiners are tolerated. Inverted pairs are swapped and flagged. Returns
/// nullopt when no bracketed integer pair is present.
std::optional<IntervalPrediction> parse_intervals(std::string_view text);

/// Formats a prediction in the same style the grounding prompt requests,
/// e.g. "[1, 10] and [50, 60]". parse_intervals(format_intervals(p)) == p.
std::string format_intervals(const IntervalPrediction& prediction);

}  // namespace capqa
