// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "capqa/corpus.hpp"
#include "capqa/parse.hpp"

namespace capqa {

/// Intersection over Prediction: max over ground-truth segments of
/// |pred ∩ gt| / |pred|. 1.0 iff the prediction lies inside some segment.
double iop(const SecondInterval& pred, std::span<const SecondInterval> gts);

/// Temporal Intersection over Union: max over ground-truth segments of
/// |pred ∩ gt| / |pred ∪ gt|. 1.0 iff the prediction equals some segment.
double iou(const SecondInterval& pred, std::span<const SecondInterval> gts);

/// How multi-interval predictions are scored against the ground truth.
enum class MultiIntervalPolicy {
  kBestSingle,  // best single predicted interval wins (default)
  kUnion,       // predicted intervals scored as their union
};

struct GroundingScore {
  double iop = 0.0;
  double iou = 0.0;
  bool empty_prediction = false;
};

/// Scores second-interval predictions against ground-truth segments.
GroundingScore score_intervals(std::span<const SecondInterval> preds,
                               std::span<const SecondInterval> gts,
                               MultiIntervalPolicy policy = MultiIntervalPolicy::kBestSingle);

/// Converts a frame-index prediction to second intervals and scores it.
/// Frame pair [a, b] maps to seconds [a*delta, (b+1)*delta] so a single
/// frame has nonzero duration. A missing prediction scores 0 with a flag.
GroundingScore score_grounding(const std::optional<IntervalPrediction>& prediction,
                               std::span<const SecondInterval> gts,
                               double seconds_per_index,
                               MultiIntervalPolicy policy = MultiIntervalPolicy::kBestSingle);

std::vector<SecondInterval> frames_to_seconds(const IntervalPrediction& prediction,
                                              double seconds_per_index);

/// Per-question outcome, the unit the evaluator aggregates.
struct ItemResult {
  std::string qa_id;
  std::string video_id;
  ChoiceOutcome choice;
  /// Predicted grounding converted to second intervals; nullopt when the
  /// item produced no usable prediction (or grounding was not requested).
  std::optional<std::vector<SecondInterval>> predicted_intervals_s;
  std::vector<FrameInterval> predicted_intervals_frames;
  bool interval_swap_normalized = false;
  int selected_captions = 0;
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
  std::int64_t latency_ms = 0;
  std::vector<std::string> round_digests;
};

struct CategoryStat {
  std::int64_t count = 0;  // items carrying the label that have answer keys
  double accuracy = 0.0;
};

struct GroundingSummary {
  double m_iop = 0.0;
  double m_iou = 0.0;
  double iop_at_05 = 0.0;
  double iou_at_05 = 0.0;
  double acc_gqa = 0.0;
};

struct BootstrapCi {
  int samples = 0;
  double accuracy_low = 0.0;   // 2.5th percentile
  double accuracy_high = 0.0;  // 97.5th percentile
};

struct EvalReport {
  std::int64_t item_count = 0;
  std::int64_t answered_count = 0;  // items with answer keys
  std::int64_t correct_count = 0;
  double accuracy = 0.0;
  std::map<std::string, CategoryStat> per_category;
  std::optional<GroundingSummary> grounding;
  std::int64_t parse_failure_count = 0;
  double parse_failure_rate = 0.0;
  std::int64_t prompt_tokens_total = 0;
  std::int64_t completion_tokens_total = 0;
  double estimated_cost = 0.0;
  std::optional<BootstrapCi> accuracy_ci;
  // Timing-derived; reported in the run manifest, excluded from the summary
  // file so summaries stay byte-reproducible.
  double throughput_videos_per_min = 0.0;
  std::int64_t video_count = 0;
  double elapsed_s = 0.0;
};

struct AggregateOptions {
  MultiIntervalPolicy interval_policy = MultiIntervalPolicy::kBestSingle;
  bool evaluate_grounding = false;
  int bootstrap_samples = 0;
  std::uint64_t seed = 0;
  double price_per_1k_prompt_tokens = 0.0;
  double price_per_1k_completion_tokens = 0.0;
};

/// Aggregates per-item results into a report. Accuracy is computed over
/// items with answer keys; grounding means and thresholds are computed over
/// all items (missing predictions contribute 0), which guarantees
/// acc_gqa <= min(accuracy, iop_at_05). Aggregation sorts by qa_id first and
/// is therefore permutation-invariant. Throws ValidationError when a result
/// references an unknown qa_id.
EvalReport aggregate(std::span<const ItemResult> results,
                     std::span<const QaItem> qa_items,
                     const std::map<std::string, GroundingLabel>& grounding_labels,
                     const CategoryMap& categories,
                     const AggregateOptions& options = {});

/// Videos per minute of wall clock. `video_duration_s` is the declared
/// per-video duration the figure is quoted against. Throws on zero elapsed
/// time.
double throughput_videos_per_minute(std::int64_t video_count, double elapsed_s,
                                    double video_duration_s = 180.0);

/// Deterministic JSON serialization of the report (sorted keys, no
/// timing-derived fields). Byte-identical for identical inputs.
std::string summary_json(const EvalReport& report);

void write_results_file(const std::filesystem::path& path,
                        std::span<const ItemResult> results);
std::vector<ItemResult> read_results_file(const std::filesystem::path& path);

}  // namespace capqa
