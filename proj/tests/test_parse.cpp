// SPDX-License-Identifier: Apache-2.0
#include "capqa/parse.hpp"

#include <random>

#include "doctest.h"

using namespace capqa;

TEST_CASE("first-character rule wins") {
  CHECK(parse_choice("B").index == 1);
  CHECK(parse_choice("B: The camera wearer organizes the dishes.").index == 1);
  CHECK(parse_choice("  C  ").index == 2);
  CHECK(parse_choice("e").index == 4);
  CHECK(parse_choice("A.").index == 0);
  CHECK(parse_choice("D\nbecause of the ladder").index == 3);
}

TEST_CASE("first-character rule is literal, any suffix included") {
  // The rule takes the first character outright, so a leading option letter
  // wins even when it opens an ordinary word.
  CHECK(parse_choice("Because the person is cooking").index == 1);
  CHECK(parse_choice("Clearly visible in the video").index == 2);
}

TEST_CASE("non-option leading words fall back to standalone scanning") {
  CHECK_FALSE(parse_choice("The person keeps moving things").parsed());
  CHECK_FALSE(parse_choice("Sure: the wearer tidies up").parsed());
}

TEST_CASE("fallback finds the first standalone option letter") {
  CHECK(parse_choice("The answer is (D).").index == 3);
  CHECK(parse_choice("The correct option: B").index == 1);
  CHECK(parse_choice("I would pick \"C\" here").index == 2);
  CHECK(parse_choice("option-E matches").index == 4);
  CHECK(parse_choice("-> A").index == 0);
  CHECK(parse_choice("3. D is right").index == 3);
  CHECK(parse_choice("the answer is b.").index == 1);
  CHECK(parse_choice("(e)").index == 4);
  CHECK(parse_choice("my pick: C, see rationale above").index == 2);
  CHECK(parse_choice("*D*").index == 3);
}

TEST_CASE("a leading option letter preempts later standalone letters") {
  // "Answer" starts with A, and the first-character rule is deliberately
  // literal, mirroring how single-letter outputs are post-processed.
  CHECK(parse_choice("Answer: C").index == 0);
}

TEST_CASE("parse failure is a value carrying the raw text") {
  const auto outcome = parse_choice("I am not sure about this one");
  CHECK_FALSE(outcome.parsed());
  CHECK(outcome.raw_text == "I am not sure about this one");
  CHECK_FALSE(parse_choice("").parsed());
  CHECK_FALSE(parse_choice("   ").parsed());
  CHECK_FALSE(parse_choice("42").parsed());
}

TEST_CASE("parse_choice is total on arbitrary bytes") {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<int> len(0, 64);
  std::uniform_int_distribution<int> byte(1, 255);
  for (int i = 0; i < 300; ++i) {
    std::string s;
    const int n = len(rng);
    for (int j = 0; j < n; ++j) s.push_back(static_cast<char>(byte(rng)));
    const auto outcome = parse_choice(s);  // must not throw
    if (outcome.parsed()) {
      CHECK(*outcome.index >= 0);
      CHECK(*outcome.index <= 4);
    }
  }
}

TEST_CASE("letter plus arbitrary non-word suffix parses to that letter") {
  const char* suffixes[] = {"", ".", ":", ")", ",", ". Because of the video.",
                            ": the wearer cooks", "\nSecond line", " is my answer", "!!"};
  for (char letter = 'A'; letter <= 'E'; ++letter) {
    for (const char* suffix : suffixes) {
      const auto outcome = parse_choice(std::string(1, letter) + suffix);
      REQUIRE(outcome.parsed());
      CHECK(outcome.letter() == letter);
    }
  }
}

TEST_CASE("interval grammar accepts the documented formats") {
  auto one = parse_intervals("[5, 19]");
  REQUIRE(one.has_value());
  CHECK(one->intervals == std::vector<FrameInterval>{{5, 19}});

  auto two = parse_intervals("[30, 60]");
  REQUIRE(two.has_value());
  CHECK(two->intervals == std::vector<FrameInterval>{{30, 60}});

  auto multi = parse_intervals("[1, 10] and [50, 60]");
  REQUIRE(multi.has_value());
  CHECK(multi->intervals == std::vector<FrameInterval>{{1, 10}, {50, 60}});
}

TEST_CASE("interval grammar tolerates surrounding prose") {
  auto parsed = parse_intervals("I will check [30,60] of the video");
  REQUIRE(parsed.has_value());
  CHECK(parsed->intervals == std::vector<FrameInterval>{{30, 60}});
  CHECK_FALSE(parsed->normalized_swap);
}

TEST_CASE("inverted pairs are swapped and flagged") {
  auto parsed = parse_intervals("[30, 10]");
  REQUIRE(parsed.has_value());
  CHECK(parsed->intervals == std::vector<FrameInterval>{{10, 30}});
  CHECK(parsed->normalized_swap);
}

TEST_CASE("text without a bracketed pair is a failure value") {
  CHECK_FALSE(parse_intervals("frames 10 to 30").has_value());
  CHECK_FALSE(parse_intervals("[not, numbers]").has_value());
  CHECK_FALSE(parse_intervals("").has_value());
}

TEST_CASE("malformed brackets do not hide later valid pairs") {
  auto parsed = parse_intervals("[oops [5, 9] and [12, 14]");
  REQUIRE(parsed.has_value());
  CHECK(parsed->intervals == std::vector<FrameInterval>{{5, 9}, {12, 14}});
}

TEST_CASE("format/parse round-trip preserves intervals") {
  std::mt19937_64 rng(1234);
  std::uniform_int_distribution<int> count(1, 4);
  std::uniform_int_distribution<std::int64_t> frame(0, 5000);
  for (int i = 0; i < 200; ++i) {
    IntervalPrediction prediction;
    const int n = count(rng);
    for (int j = 0; j < n; ++j) {
      std::int64_t a = frame(rng);
      std::int64_t b = frame(rng);
      if (a > b) std::swap(a, b);
      prediction.intervals.push_back({a, b});
    }
    const auto reparsed = parse_intervals(format_intervals(prediction));
    REQUIRE(reparsed.has_value());
    CHECK(reparsed->intervals == prediction.intervals);
    CHECK_FALSE(reparsed->normalized_swap);
  }
}
