// SPDX-License-Identifier: Apache-2.0
#include "capqa/metrics.hpp"

#include <algorithm>
#include <random>

#include "doctest.h"
#include "capqa/errors.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace capqa;
using test::MsInterval;

namespace {

std::vector<SecondInterval> gts(std::initializer_list<SecondInterval> list) {
  return std::vector<SecondInterval>(list);
}

ItemResult make_result(const std::string& qa_id, std::optional<int> choice,
                       std::optional<std::vector<SecondInterval>> intervals = {}) {
  ItemResult result;
  result.qa_id = qa_id;
  result.choice.index = choice;
  result.choice.raw_text = choice ? std::string(1, static_cast<char>('A' + *choice)) : "???";
  result.predicted_intervals_s = std::move(intervals);
  return result;
}

QaItem make_qa(const std::string& qa_id, std::optional<int> answer,
               std::vector<std::string> categories = {}) {
  QaItem qa = test::golden_qa();
  qa.qa_id = qa_id;
  qa.video_id = "v";
  qa.answer_index = answer;
  qa.categories = std::move(categories);
  return qa;
}

}  // namespace

TEST_CASE("iop identities and disjoint cases") {
  CHECK(iop({10, 20}, gts({{10, 20}})) == 1.0);
  CHECK(iop({0, 5}, gts({{10, 20}})) == 0.0);
  CHECK(iop({12, 15}, gts({{10, 20}})) == 1.0);  // contained => 1
}

TEST_CASE("iop on the worked partial-overlap example") {
  // pred [5,19], gt [10,30]: overlap 9, pred length 14.
  const double value = iop({5, 19}, gts({{10, 30}}));
  CHECK(value == doctest::Approx(9.0 / 14.0).epsilon(1e-12));
  const double oracle = test::oracle_iop({5000, 19000}, {{10000, 30000}});
  CHECK(std::abs(value - oracle) < 1e-6);
}

TEST_CASE("iou on the worked partial-overlap example") {
  const double value = iou({5, 19}, gts({{10, 30}}));
  CHECK(value == doctest::Approx(0.36).epsilon(1e-12));
  const double oracle = test::oracle_iou({5000, 19000}, {{10000, 30000}});
  CHECK(std::abs(value - oracle) < 1e-6);
  CHECK(iou({5, 19}, gts({{5, 19}})) == 1.0);
  CHECK(iou({0, 5}, gts({{10, 20}})) == 0.0);
}

TEST_CASE("zero-length predictions are rejected") {
  CHECK_THROWS_AS(iop({10, 10}, gts({{0, 1}})), ValidationError);
  CHECK_THROWS_AS(iou({10, 9}, gts({{0, 1}})), ValidationError);
}

TEST_CASE("max over multiple ground-truth segments") {
  const auto segments = gts({{0, 4}, {50, 61}});
  CHECK(iop({50, 61}, segments) == 1.0);
  CHECK(iop({2, 6}, segments) == doctest::Approx(0.5));
}

TEST_CASE("score_grounding maps frames to end-exclusive seconds") {
  // Frame pair [10,19] with delta 1 covers seconds [10,20].
  IntervalPrediction prediction;
  prediction.intervals = {{10, 19}};
  const auto score = score_grounding(prediction, gts({{10, 20}}), 1.0);
  CHECK(score.iop == 1.0);
  CHECK(score.iou == 1.0);
  CHECK_FALSE(score.empty_prediction);
}

TEST_CASE("best single interval wins under the default policy") {
  IntervalPrediction prediction;
  prediction.intervals = {{1, 10}, {50, 60}};
  const auto score = score_grounding(prediction, gts({{50, 61}}), 1.0);
  // Second interval covers [50,61] exactly; first is disjoint.
  CHECK(score.iop == 1.0);
  CHECK(score.iou == 1.0);
}

TEST_CASE("iop is invariant under a common scale of prediction and ground truth") {
  IntervalPrediction prediction;
  prediction.intervals = {{3, 7}};
  const auto at1 = score_grounding(prediction, gts({{2, 9}}), 1.0);
  const auto at2 = score_grounding(prediction, gts({{4, 18}}), 2.0);
  CHECK(at1.iop == doctest::Approx(at2.iop).epsilon(1e-12));
  CHECK(at1.iou == doctest::Approx(at2.iou).epsilon(1e-12));
}

TEST_CASE("empty predictions score zero with a flag") {
  const auto score = score_grounding(std::nullopt, gts({{0, 10}}), 1.0);
  CHECK(score.iop == 0.0);
  CHECK(score.iou == 0.0);
  CHECK(score.empty_prediction);
}

TEST_CASE("union policy scores the merged prediction") {
  std::vector<SecondInterval> preds{{0, 5}, {5, 10}};
  const auto best = score_intervals(preds, gts({{0, 10}}), MultiIntervalPolicy::kBestSingle);
  const auto merged = score_intervals(preds, gts({{0, 10}}), MultiIntervalPolicy::kUnion);
  CHECK(best.iou == doctest::Approx(0.5));
  CHECK(merged.iou == doctest::Approx(1.0));
  CHECK(merged.iop == doctest::Approx(1.0));
}

TEST_CASE("metric chain against the grid oracle on random lattice intervals") {
  std::mt19937_64 rng(31415);
  std::uniform_int_distribution<std::int64_t> ms(0, 100000);
  for (int i = 0; i < 400; ++i) {
    auto draw = [&] {
      std::int64_t a = ms(rng);
      std::int64_t b = ms(rng);
      while (a == b) b = ms(rng);
      if (a > b) std::swap(a, b);
      return MsInterval{a, b};
    };
    const MsInterval pred = draw();
    const MsInterval gt = draw();

    const double impl_iop = iop(test::to_seconds(pred), gts({test::to_seconds(gt)}));
    const double impl_iou = iou(test::to_seconds(pred), gts({test::to_seconds(gt)}));
    CHECK(std::abs(impl_iop - test::oracle_iop(pred, {gt})) < 1e-6);
    CHECK(std::abs(impl_iou - test::oracle_iou(pred, {gt})) < 1e-6);
    CHECK(impl_iou >= 0.0);
    CHECK(impl_iou <= impl_iop);
    CHECK(impl_iop <= 1.0);
  }
}

TEST_CASE("aggregate computes accuracy over keyed items only") {
  std::vector<QaItem> qa{make_qa("q1", 0), make_qa("q2", 1), make_qa("q3", 2), make_qa("q4", 3),
                         make_qa("q5", std::nullopt)};
  std::vector<ItemResult> results{
      make_result("q1", 0),            // correct
      make_result("q2", 0),            // wrong
      make_result("q3", 2),            // correct
      make_result("q4", std::nullopt), // parse failure -> incorrect
      make_result("q5", 1),            // unkeyed, excluded from accuracy
  };
  const auto report = aggregate(results, qa, {}, {});
  CHECK(report.item_count == 5);
  CHECK(report.answered_count == 4);
  CHECK(report.correct_count == 2);
  CHECK(report.accuracy == doctest::Approx(0.5));
  CHECK(report.parse_failure_count == 1);
  CHECK(report.parse_failure_rate == doctest::Approx(0.2));
}

TEST_CASE("acc_gqa counts only items that are correct and grounded at 0.5") {
  std::vector<QaItem> qa{make_qa("q1", 0), make_qa("q2", 0)};
  std::map<std::string, GroundingLabel> labels;
  labels["q1"] = {"q1", {{0, 10}}};
  labels["q2"] = {"q2", {{0, 10}}};

  // q1: correct with IoP 0.6; q2: correct with IoP 0.4.
  std::vector<ItemResult> results{
      make_result("q1", 0, gts({{2, 12}})),   // overlap 8 / 10 = 0.8 -> grounded
      make_result("q2", 0, gts({{6, 16}})),   // overlap 4 / 10 = 0.4 -> not grounded
  };
  AggregateOptions options;
  options.evaluate_grounding = true;
  const auto report = aggregate(results, qa, labels, {}, options);
  REQUIRE(report.grounding.has_value());
  CHECK(report.grounding->acc_gqa == doctest::Approx(0.5));
  CHECK(report.grounding->iop_at_05 == doctest::Approx(0.5));
  CHECK(report.grounding->acc_gqa <= std::min(report.accuracy, report.grounding->iop_at_05));
}

TEST_CASE("per-category accuracy matches an independent cross-tabulation") {
  std::mt19937_64 rng(2718);
  const std::vector<std::string> vocabulary{"goal", "tools", "action", "sequence", "people"};
  std::uniform_int_distribution<int> letter(0, 4);
  std::uniform_int_distribution<int> coin(0, 1);

  std::vector<QaItem> qa;
  std::vector<ItemResult> results;
  for (int i = 0; i < 500; ++i) {
    const std::string id = "q" + std::to_string(1000 + i);
    std::vector<std::string> cats;
    for (const auto& c : vocabulary) {
      if (coin(rng)) cats.push_back(c);  // items may carry several labels
    }
    const int answer = letter(rng);
    qa.push_back(make_qa(id, answer, cats));
    results.push_back(make_result(id, letter(rng)));
  }

  const auto report = aggregate(results, qa, {}, {});

  // Independent tabulation, written against the raw fixtures.
  std::map<std::string, std::pair<int, int>> expected;  // label -> {count, correct}
  for (std::size_t i = 0; i < qa.size(); ++i) {
    const bool correct = results[i].choice.index == qa[i].answer_index;
    for (const auto& label : qa[i].categories) {
      auto& [count, hits] = expected[label];
      ++count;
      if (correct) ++hits;
    }
  }
  REQUIRE(report.per_category.size() == expected.size());
  for (const auto& [label, stat] : report.per_category) {
    REQUIRE(expected.count(label) == 1);
    CHECK(stat.count == expected[label].first);
    CHECK(stat.accuracy ==
          doctest::Approx(static_cast<double>(expected[label].second) / expected[label].first));
  }
}

TEST_CASE("aggregation is permutation-invariant") {
  std::mt19937_64 rng(5);
  std::vector<QaItem> qa;
  std::vector<ItemResult> results;
  std::map<std::string, GroundingLabel> labels;
  std::uniform_int_distribution<int> letter(0, 4);
  for (int i = 0; i < 60; ++i) {
    const std::string id = "q" + std::to_string(100 + i);
    qa.push_back(make_qa(id, letter(rng), {i % 2 ? "even" : "odd"}));
    labels[id] = {id, {{0.0, 10.0 + i}}};
    results.push_back(make_result(id, letter(rng), gts({{1.0, 4.0 + (i % 7)}})));
  }
  AggregateOptions options;
  options.evaluate_grounding = true;
  const auto baseline = summary_json(aggregate(results, qa, labels, {}, options));

  std::shuffle(results.begin(), results.end(), rng);
  CHECK(summary_json(aggregate(results, qa, labels, {}, options)) == baseline);
  std::shuffle(results.begin(), results.end(), rng);
  CHECK(summary_json(aggregate(results, qa, labels, {}, options)) == baseline);
}

TEST_CASE("aggregate rejects results with unknown qa ids") {
  std::vector<QaItem> qa{make_qa("q1", 0)};
  std::vector<ItemResult> results{make_result("zz", 0)};
  CHECK_THROWS_AS(aggregate(results, qa, {}, {}), ValidationError);
}

TEST_CASE("bootstrap resampling is deterministic under a seed") {
  std::vector<QaItem> qa;
  std::vector<ItemResult> results;
  for (int i = 0; i < 40; ++i) {
    const std::string id = "q" + std::to_string(10 + i);
    qa.push_back(make_qa(id, i % 5));
    results.push_back(make_result(id, (i % 2) ? i % 5 : (i + 1) % 5));
  }
  AggregateOptions options;
  options.bootstrap_samples = 200;
  options.seed = 42;
  const auto a = aggregate(results, qa, {}, {}, options);
  const auto b = aggregate(results, qa, {}, {}, options);
  REQUIRE(a.accuracy_ci.has_value());
  CHECK(a.accuracy_ci->accuracy_low == b.accuracy_ci->accuracy_low);
  CHECK(a.accuracy_ci->accuracy_high == b.accuracy_ci->accuracy_high);
  CHECK(a.accuracy_ci->accuracy_low <= a.accuracy);
  CHECK(a.accuracy_ci->accuracy_high >= a.accuracy_ci->accuracy_low);
}

TEST_CASE("throughput arithmetic") {
  CHECK(throughput_videos_per_minute(10, 300.0) == doctest::Approx(2.0));
  CHECK_THROWS_AS(throughput_videos_per_minute(10, 0.0), ValidationError);
}

TEST_CASE("summary serialization carries no timing-derived fields") {
  EvalReport report;
  report.item_count = 3;
  report.throughput_videos_per_min = 123.4;
  report.elapsed_s = 9.9;
  report.video_count = 2;
  const auto body = summary_json(report);
  CHECK(body.find("throughput") == std::string::npos);
  CHECK(body.find("elapsed") == std::string::npos);
  CHECK(body.find("123.4") == std::string::npos);
}

TEST_CASE("results file round-trips") {
  const auto dir = test::make_temp_dir("results");
  std::vector<ItemResult> results;
  results.push_back(make_result("q2", 1));
  results.back().video_id = "v1";
  results.back().prompt_tokens = 100;
  results.back().completion_tokens = 7;
  results.back().round_digests = {"abc", "def"};
  results.push_back(make_result("q1", std::nullopt, gts({{2.0, 4.0}})));
  results.back().video_id = "v2";
  results.back().predicted_intervals_frames = {{2, 3}};
  results.back().choice.raw_text = "no idea";

  write_results_file(dir / "results.jsonl", results);
  const auto loaded = read_results_file(dir / "results.jsonl");
  REQUIRE(loaded.size() == 2);
  CHECK(loaded[0].qa_id == "q1");  // sorted on write
  CHECK_FALSE(loaded[0].choice.parsed());
  CHECK(loaded[0].choice.raw_text == "no idea");
  REQUIRE(loaded[0].predicted_intervals_s.has_value());
  CHECK(loaded[0].predicted_intervals_frames == std::vector<FrameInterval>{{2, 3}});
  CHECK(loaded[1].qa_id == "q2");
  CHECK(loaded[1].choice.index == 1);
  CHECK(loaded[1].prompt_tokens == 100);
  CHECK(loaded[1].round_digests == std::vector<std::string>{"abc", "def"});
}
