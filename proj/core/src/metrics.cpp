// SPDX-License-Identifier: Apache-2.0
#include "capqa/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <unordered_map>

#include "capqa/errors.hpp"
#include "internal/util.hpp"

namespace capqa {

namespace {

using detail::json;

double overlap_length(const SecondInterval& a, const SecondInterval& b) {
  return std::max(0.0, std::min(a.end_s, b.end_s) - std::max(a.start_s, b.start_s));
}

void require_valid_pred(const SecondInterval& pred) {
  if (!(pred.end_s > pred.start_s)) {
    throw ValidationError("predicted interval must have end_s > start_s");
  }
}

/// Merges possibly-overlapping intervals into a disjoint sorted union.
std::vector<SecondInterval> merge_union(std::span<const SecondInterval> intervals) {
  std::vector<SecondInterval> sorted(intervals.begin(), intervals.end());
  std::sort(sorted.begin(), sorted.end(),
            [](const SecondInterval& a, const SecondInterval& b) { return a.start_s < b.start_s; });
  std::vector<SecondInterval> merged;
  for (const auto& interval : sorted) {
    if (!merged.empty() && interval.start_s <= merged.back().end_s) {
      merged.back().end_s = std::max(merged.back().end_s, interval.end_s);
    } else {
      merged.push_back(interval);
    }
  }
  return merged;
}

}  // namespace

double iop(const SecondInterval& pred, std::span<const SecondInterval> gts) {
  require_valid_pred(pred);
  double best = 0.0;
  for (const auto& gt : gts) {
    best = std::max(best, overlap_length(pred, gt) / pred.length());
  }
  return best;
}

double iou(const SecondInterval& pred, std::span<const SecondInterval> gts) {
  require_valid_pred(pred);
  double best = 0.0;
  for (const auto& gt : gts) {
    const double inter = overlap_length(pred, gt);
    // Associating as pred + (gt - inter) keeps union >= pred in floating
    // point, so IoU <= IoP holds exactly on every input.
    const double uni = pred.length() + (gt.length() - inter);
    if (uni > 0.0) best = std::max(best, inter / uni);
  }
  return best;
}

GroundingScore score_intervals(std::span<const SecondInterval> preds,
                               std::span<const SecondInterval> gts,
                               MultiIntervalPolicy policy) {
  if (preds.empty()) return {0.0, 0.0, true};
  GroundingScore score;

  if (policy == MultiIntervalPolicy::kBestSingle) {
    for (const auto& pred : preds) {
      score.iop = std::max(score.iop, iop(pred, gts));
      score.iou = std::max(score.iou, iou(pred, gts));
    }
    return score;
  }

  // Union policy: the prediction is the union of its intervals.
  const auto pieces = merge_union(preds);
  double union_len = 0.0;
  for (const auto& piece : pieces) union_len += piece.length();
  for (const auto& gt : gts) {
    double inter = 0.0;
    for (const auto& piece : pieces) inter += overlap_length(piece, gt);
    score.iop = std::max(score.iop, inter / union_len);
    const double uni = union_len + (gt.length() - inter);
    if (uni > 0.0) score.iou = std::max(score.iou, inter / uni);
  }
  return score;
}

std::vector<SecondInterval> frames_to_seconds(const IntervalPrediction& prediction,
                                              double seconds_per_index) {
  if (seconds_per_index <= 0.0) {
    throw ValidationError("seconds_per_index must be positive");
  }
  std::vector<SecondInterval> out;
  out.reserve(prediction.intervals.size());
  for (const auto& interval : prediction.intervals) {
    out.push_back({static_cast<double>(interval.first) * seconds_per_index,
                   static_cast<double>(interval.last + 1) * seconds_per_index});
  }
  return out;
}

GroundingScore score_grounding(const std::optional<IntervalPrediction>& prediction,
                               std::span<const SecondInterval> gts, double seconds_per_index,
                               MultiIntervalPolicy policy) {
  if (!prediction || prediction->intervals.empty()) return {0.0, 0.0, true};
  const auto preds = frames_to_seconds(*prediction, seconds_per_index);
  return score_intervals(preds, gts, policy);
}

EvalReport aggregate(std::span<const ItemResult> results, std::span<const QaItem> qa_items,
                     const std::map<std::string, GroundingLabel>& grounding_labels,
                     const CategoryMap& categories, const AggregateOptions& options) {
  std::unordered_map<std::string, const QaItem*> qa_by_id;
  for (const auto& item : qa_items) qa_by_id[item.qa_id] = &item;

  // Fixed iteration order makes aggregation permutation-invariant.
  std::vector<const ItemResult*> ordered;
  ordered.reserve(results.size());
  for (const auto& r : results) ordered.push_back(&r);
  std::sort(ordered.begin(), ordered.end(),
            [](const ItemResult* a, const ItemResult* b) { return a->qa_id < b->qa_id; });

  EvalReport report;
  report.item_count = static_cast<std::int64_t>(ordered.size());

  struct CategoryAccum {
    std::int64_t count = 0;
    std::int64_t correct = 0;
  };
  std::map<std::string, CategoryAccum> per_category;

  double iop_sum = 0.0;
  double iou_sum = 0.0;
  std::int64_t iop_hits = 0;
  std::int64_t iou_hits = 0;
  std::int64_t gqa_hits = 0;

  std::vector<bool> keyed_correct;  // per keyed item, for bootstrap resampling
  keyed_correct.reserve(ordered.size());

  for (const ItemResult* result : ordered) {
    const auto found = qa_by_id.find(result->qa_id);
    if (found == qa_by_id.end()) {
      throw ValidationError("result references unknown qa_id \"" + result->qa_id + "\"");
    }
    const QaItem& qa = *found->second;

    if (!result->choice.parsed()) ++report.parse_failure_count;
    report.prompt_tokens_total += result->prompt_tokens;
    report.completion_tokens_total += result->completion_tokens;

    bool correct = false;
    if (qa.answer_index) {
      ++report.answered_count;
      correct = result->choice.parsed() && *result->choice.index == *qa.answer_index;
      if (correct) ++report.correct_count;
      keyed_correct.push_back(correct);

      std::vector<std::string> labels = qa.categories;
      const auto extra = categories.by_qa_id.find(qa.qa_id);
      if (extra != categories.by_qa_id.end()) {
        for (const auto& label : extra->second) {
          if (std::find(labels.begin(), labels.end(), label) == labels.end()) {
            labels.push_back(label);
          }
        }
      }
      for (const auto& label : labels) {
        auto& accum = per_category[label];
        ++accum.count;
        if (correct) ++accum.correct;
      }
    }

    if (options.evaluate_grounding) {
      GroundingScore score;  // zero when the item has no prediction or no label
      const auto label = grounding_labels.find(result->qa_id);
      if (label != grounding_labels.end() && result->predicted_intervals_s &&
          !result->predicted_intervals_s->empty()) {
        score = score_intervals(*result->predicted_intervals_s, label->second.segments,
                                options.interval_policy);
      }
      iop_sum += score.iop;
      iou_sum += score.iou;
      if (score.iop >= 0.5) ++iop_hits;
      if (score.iou >= 0.5) ++iou_hits;
      if (correct && score.iop >= 0.5) ++gqa_hits;
    }
  }

  report.accuracy = report.answered_count > 0
                        ? static_cast<double>(report.correct_count) / report.answered_count
                        : 0.0;
  report.parse_failure_rate =
      report.item_count > 0 ? static_cast<double>(report.parse_failure_count) / report.item_count
                            : 0.0;

  for (const auto& [label, accum] : per_category) {
    report.per_category[label] = {
        accum.count, accum.count > 0 ? static_cast<double>(accum.correct) / accum.count : 0.0};
  }

  if (options.evaluate_grounding) {
    GroundingSummary grounding;
    const double n = report.item_count > 0 ? static_cast<double>(report.item_count) : 1.0;
    grounding.m_iop = iop_sum / n;
    grounding.m_iou = iou_sum / n;
    grounding.iop_at_05 = iop_hits / n;
    grounding.iou_at_05 = iou_hits / n;
    grounding.acc_gqa = gqa_hits / n;
    report.grounding = grounding;
  }

  report.estimated_cost = report.prompt_tokens_total / 1000.0 * options.price_per_1k_prompt_tokens +
                          report.completion_tokens_total / 1000.0 *
                              options.price_per_1k_completion_tokens;

  if (options.bootstrap_samples > 0 && !keyed_correct.empty()) {
    std::mt19937_64 rng(options.seed);
    std::uniform_int_distribution<std::size_t> pick(0, keyed_correct.size() - 1);
    std::vector<double> samples;
    samples.reserve(options.bootstrap_samples);
    for (int s = 0; s < options.bootstrap_samples; ++s) {
      std::int64_t hits = 0;
      for (std::size_t i = 0; i < keyed_correct.size(); ++i) {
        if (keyed_correct[pick(rng)]) ++hits;
      }
      samples.push_back(static_cast<double>(hits) / keyed_correct.size());
    }
    std::sort(samples.begin(), samples.end());
    const auto at = [&](double q) {
      const auto idx = static_cast<std::size_t>(std::llround(q * (samples.size() - 1)));
      return samples[idx];
    };
    report.accuracy_ci = BootstrapCi{options.bootstrap_samples, at(0.025), at(0.975)};
  }

  return report;
}

double throughput_videos_per_minute(std::int64_t video_count, double elapsed_s,
                                    double video_duration_s) {
  if (elapsed_s <= 0.0) throw ValidationError("elapsed time must be positive");
  if (video_duration_s <= 0.0) throw ValidationError("video duration must be positive");
  return static_cast<double>(video_count) / (elapsed_s / 60.0);
}

std::string summary_json(const EvalReport& report) {
  json doc{
      {"format", "capqa/summary"},
      {"version", 1},
      {"accuracy", report.accuracy},
      {"answered_count", report.answered_count},
      {"correct_count", report.correct_count},
      {"item_count", report.item_count},
      {"parse_failure_count", report.parse_failure_count},
      {"parse_failure_rate", report.parse_failure_rate},
      {"prompt_tokens_total", report.prompt_tokens_total},
      {"completion_tokens_total", report.completion_tokens_total},
      {"estimated_cost", report.estimated_cost},
  };
  json cats = json::object();
  for (const auto& [label, stat] : report.per_category) {
    cats[label] = {{"count", stat.count}, {"accuracy", stat.accuracy}};
  }
  doc["per_category"] = std::move(cats);
  if (report.grounding) {
    doc["grounding"] = {{"m_iop", report.grounding->m_iop},
                        {"m_iou", report.grounding->m_iou},
                        {"iop_at_05", report.grounding->iop_at_05},
                        {"iou_at_05", report.grounding->iou_at_05},
                        {"acc_gqa", report.grounding->acc_gqa}};
  }
  if (report.accuracy_ci) {
    doc["accuracy_ci95"] = {{"samples", report.accuracy_ci->samples},
                            {"low", report.accuracy_ci->accuracy_low},
                            {"high", report.accuracy_ci->accuracy_high}};
  }
  return doc.dump(2) + "\n";
}

void write_results_file(const std::filesystem::path& path, std::span<const ItemResult> results) {
  std::vector<const ItemResult*> ordered;
  ordered.reserve(results.size());
  for (const auto& r : results) ordered.push_back(&r);
  std::sort(ordered.begin(), ordered.end(),
            [](const ItemResult* a, const ItemResult* b) { return a->qa_id < b->qa_id; });

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write results file: " + path.string());
  out << json{{"format", "capqa/results"}, {"version", 1}}.dump() << '\n';

  for (const ItemResult* result : ordered) {
    json rec{{"qa_id", result->qa_id}, {"video_id", result->video_id}};
    if (result->choice.parsed()) {
      rec["choice"] = std::string(1, result->choice.letter());
    } else {
      rec["choice"] = nullptr;
      rec["raw_text"] = result->choice.raw_text;
    }
    if (result->predicted_intervals_s) {
      json frames = json::array();
      for (const auto& f : result->predicted_intervals_frames) {
        frames.push_back({f.first, f.last});
      }
      rec["intervals_frames"] = std::move(frames);
      json seconds = json::array();
      for (const auto& s : *result->predicted_intervals_s) {
        seconds.push_back({s.start_s, s.end_s});
      }
      rec["intervals_s"] = std::move(seconds);
      rec["interval_swap"] = result->interval_swap_normalized;
    }
    rec["selected_captions"] = result->selected_captions;
    rec["prompt_tokens"] = result->prompt_tokens;
    rec["completion_tokens"] = result->completion_tokens;
    rec["latency_ms"] = result->latency_ms;
    rec["rounds"] = result->round_digests;
    out << rec.dump() << '\n';
  }
  out.flush();
  if (!out) throw Error("write failed: " + path.string());
}

std::vector<ItemResult> read_results_file(const std::filesystem::path& path) {
  std::vector<ItemResult> results;
  detail::read_jsonl(path, "capqa/results", [&](std::size_t line_no, const json& rec) {
    ItemResult result;
    result.qa_id = rec.at("qa_id").get<std::string>();
    result.video_id = rec.value("video_id", std::string());
    if (rec.contains("choice") && rec["choice"].is_string()) {
      const std::string letter = rec["choice"].get<std::string>();
      if (letter.size() != 1 || letter[0] < 'A' || letter[0] > 'E') {
        detail::corpus_fail(path, line_no, "choice must be a letter A-E or null");
      }
      result.choice.index = letter[0] - 'A';
      result.choice.raw_text = letter;
    } else {
      result.choice.raw_text = rec.value("raw_text", std::string());
    }
    if (rec.contains("intervals_s")) {
      std::vector<SecondInterval> seconds;
      for (const auto& pair : rec["intervals_s"]) {
        seconds.push_back({pair.at(0).get<double>(), pair.at(1).get<double>()});
      }
      result.predicted_intervals_s = std::move(seconds);
      if (rec.contains("intervals_frames")) {
        for (const auto& pair : rec["intervals_frames"]) {
          result.predicted_intervals_frames.push_back(
              {pair.at(0).get<std::int64_t>(), pair.at(1).get<std::int64_t>()});
        }
      }
      result.interval_swap_normalized = rec.value("interval_swap", false);
    }
    result.selected_captions = rec.value("selected_captions", 0);
    result.prompt_tokens = rec.value("prompt_tokens", std::int64_t{0});
    result.completion_tokens = rec.value("completion_tokens", std::int64_t{0});
    result.latency_ms = rec.value("latency_ms", std::int64_t{0});
    if (rec.contains("rounds")) {
      for (const auto& d : rec["rounds"]) result.round_digests.push_back(d.get<std::string>());
    }
    results.push_back(std::move(result));
  });
  return results;
}

}  // namespace capqa
