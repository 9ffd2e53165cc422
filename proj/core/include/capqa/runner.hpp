// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "capqa/backend.hpp"
#include "capqa/metrics.hpp"
#include "capqa/prompt.hpp"
#include "capqa/sampler.hpp"

namespace capqa {

struct StrategyConfig {
  Strategy kind = Strategy::kStandard;
  SummaryVariant variant = SummaryVariant::kCq;
  int n_words = 500;
  /// Round-1 temperature for the summarization strategy; defaults to the
  /// global temperature when unset.
  std::optional<double> summary_temperature;
  /// Adds the grounding round (and interval parsing) to the chosen QA
  /// strategy. Strategy::kGrounding implies standard QA + grounding.
  bool with_grounding = false;
};

struct BackendConfig {
  BackendMode mode = BackendMode::kMock;
  std::string backend_id;  // defaults to the mode name / base URL
  std::string model = "gpt-3.5-turbo";
  double temperature = 0.0;
  std::optional<int> max_output_tokens;
  std::string base_url;       // live mode
  std::string api_key;        // resolved from ${ENV_VAR} references only
  std::string api_key_ref;    // the unresolved reference, kept for digests
  std::string rulebook_path;  // mock mode
};

struct PricingConfig {
  double prompt_per_1k = 0.0;
  double completion_per_1k = 0.0;
};

/// One declarative experiment: corpus + sampler + strategy + backend.
struct ExperimentConfig {
  std::filesystem::path captions_path;
  std::string captions_endpoint;  // optional remote caption source
  std::filesystem::path qa_path;
  std::optional<std::filesystem::path> grounding_path;
  std::optional<std::filesystem::path> categories_path;
  std::optional<std::filesystem::path> templates_dir;  // default: embedded set
  SamplerConfig sampler;
  StrategyConfig strategy;
  BackendConfig backend;
  RatePolicy rate;
  int workers = 1;
  std::filesystem::path cache_path;
  std::filesystem::path output_dir;
  std::uint64_t seed = 0;  // governs synthetic resampling only, never live calls
  std::string video_duration_label = "3 minute";
  double video_duration_s = 180.0;
  std::string fps_label = "1";
  PricingConfig pricing;
  MultiIntervalPolicy interval_policy = MultiIntervalPolicy::kBestSingle;
  int bootstrap_samples = 0;
  std::optional<int> limit_items;
};

/// Reads a config file (JSON). Environment-variable interpolation is applied
/// to the api_key field only; everything else is taken literally.
ExperimentConfig load_config(const std::filesystem::path& path);

/// Canonical digest of the experiment identity: corpus, sampler, strategy,
/// backend identity (never credentials), pricing, policy, and seed.
/// Execution knobs (workers, rate, paths of outputs/cache, mode) are
/// excluded: they cannot change the summary.
std::string config_digest(const ExperimentConfig& config);

/// Pre-flight validation; throws ValidationError before any backend call.
void validate_config(const ExperimentConfig& config);

/// Test seams: replace the transport or the clock without touching config.
struct RunHooks {
  std::function<std::unique_ptr<CompletionBackend>(const ExperimentConfig&)> backend_factory;
  Clock* clock = nullptr;
};

struct RunArtifacts {
  EvalReport report;
  std::filesystem::path summary_path;
  std::filesystem::path results_path;
  std::filesystem::path manifest_path;
  ExecutorStats executor_stats;
};

/// Executes the experiment: every QA item exactly once, results and summary
/// written under output_dir, manifest recording the config digest, template
/// version, backend id, and wall clock. Interruptions leave the cache
/// consistent for resume and surface as PartialRunError.
RunArtifacts run(const ExperimentConfig& config, const RunHooks& hooks = {});

enum class SweepAxis { kClipLength, kStride };

struct SweepPoint {
  double axis_value = 0.0;
  std::optional<EvalReport> report;
  std::string error;  // empty on success
  std::filesystem::path output_dir;
};

/// Runs one experiment per axis value, sharing the completion cache across
/// points. Per-point failures are recorded, not fatal to the sweep.
std::vector<SweepPoint> sweep(const ExperimentConfig& config, SweepAxis axis,
                              const std::vector<double>& values,
                              const RunHooks& hooks = {});

/// Re-aggregates a report from a per-item results file plus the corpora.
EvalReport reaggregate(const std::filesystem::path& results_path,
                       const std::filesystem::path& qa_path,
                       const std::optional<std::filesystem::path>& grounding_path,
                       const std::optional<std::filesystem::path>& categories_path,
                       const AggregateOptions& options = {});

}  // namespace capqa
