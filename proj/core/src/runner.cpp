// SPDX-License-Identifier: Apache-2.0
#include "capqa/runner.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <set>
#include <thread>
#include <unordered_map>

#include "capqa/errors.hpp"
#include "capqa/parse.hpp"
#include "internal/util.hpp"

namespace capqa {

namespace {

using detail::json;

Strategy strategy_from_name(const std::string& name) {
  if (name == "standard") return Strategy::kStandard;
  if (name == "summarize") return Strategy::kSummarizeThenAnswer;
  if (name == "cot") return Strategy::kZeroShotCot;
  if (name == "plan_solve" || name == "plan-solve") return Strategy::kPlanAndSolve;
  if (name == "grounding") return Strategy::kGrounding;
  throw ValidationError("unknown strategy \"" + name + "\"");
}

SummaryVariant variant_from_name(const std::string& name) {
  if (name == "c") return SummaryVariant::kC;
  if (name == "cq") return SummaryVariant::kCq;
  if (name == "cqa") return SummaryVariant::kCqa;
  throw ValidationError("unknown summary variant \"" + name + "\" (want c|cq|cqa)");
}

BackendMode mode_from_name(const std::string& name) {
  if (name == "live") return BackendMode::kLive;
  if (name == "mock") return BackendMode::kMock;
  if (name == "replay" || name == "replay-only") return BackendMode::kReplayOnly;
  throw ValidationError("unknown backend mode \"" + name + "\" (want live|mock|replay)");
}

/// api_key fields accept "${ENV_NAME}" references; nothing else is
/// interpolated, so configs stay credential-free.
std::string resolve_credential(const std::string& value, std::string& ref_out) {
  ref_out = value;
  if (value.size() > 3 && value.rfind("${", 0) == 0 && value.back() == '}') {
    const std::string name = value.substr(2, value.size() - 3);
    const char* resolved = std::getenv(name.c_str());
    return resolved ? std::string(resolved) : std::string();
  }
  return value;
}

}  // namespace

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config file: " + path.string());
  json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) {
    throw ValidationError("config file is not a JSON object: " + path.string());
  }

  ExperimentConfig config;
  const auto base = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
  const auto resolve_path = [&](const std::string& p) {
    std::filesystem::path fp(p);
    return fp.is_absolute() ? fp : base / fp;
  };

  if (doc.contains("captions")) config.captions_path = resolve_path(doc["captions"].get<std::string>());
  config.captions_endpoint = doc.value("captions_endpoint", std::string());
  if (doc.contains("qa")) config.qa_path = resolve_path(doc["qa"].get<std::string>());
  if (doc.contains("grounding")) config.grounding_path = resolve_path(doc["grounding"].get<std::string>());
  if (doc.contains("categories")) config.categories_path = resolve_path(doc["categories"].get<std::string>());
  if (doc.contains("templates_dir")) config.templates_dir = resolve_path(doc["templates_dir"].get<std::string>());

  if (doc.contains("sampler")) {
    const auto& s = doc["sampler"];
    config.sampler.target_clip_length_s = s.value("clip_length_s", 0.0);
    config.sampler.sampling_stride = s.value("stride", 1);
    if (s.value("numbering", std::string("off")) == "frame_index") {
      config.sampler.numbering = Numbering::kFrameIndex;
    }
    if (s.contains("index_stride")) {
      config.sampler.index_stride = s["index_stride"].get<int>();
    } else {
      config.sampler.index_stride = 0;  // derive from the corpus
    }
  } else {
    config.sampler.index_stride = 0;
  }

  if (doc.contains("strategy")) {
    const auto& s = doc["strategy"];
    config.strategy.kind = strategy_from_name(s.value("kind", std::string("standard")));
    config.strategy.variant = variant_from_name(s.value("variant", std::string("cq")));
    config.strategy.n_words = s.value("n_words", 500);
    if (s.contains("summary_temperature")) {
      config.strategy.summary_temperature = s["summary_temperature"].get<double>();
    }
    config.strategy.with_grounding = s.value("with_grounding", false);
  }

  if (doc.contains("backend")) {
    const auto& b = doc["backend"];
    config.backend.mode = mode_from_name(b.value("mode", std::string("mock")));
    config.backend.backend_id = b.value("backend_id", std::string());
    config.backend.model = b.value("model", std::string("gpt-3.5-turbo"));
    config.backend.temperature = b.value("temperature", 0.0);
    if (b.contains("max_output_tokens")) {
      config.backend.max_output_tokens = b["max_output_tokens"].get<int>();
    }
    config.backend.base_url = b.value("base_url", std::string());
    if (b.contains("api_key")) {
      config.backend.api_key =
          resolve_credential(b["api_key"].get<std::string>(), config.backend.api_key_ref);
    }
    if (b.contains("rulebook")) {
      config.backend.rulebook_path = resolve_path(b["rulebook"].get<std::string>()).string();
    }
  }

  if (doc.contains("rate")) {
    const auto& r = doc["rate"];
    config.rate.requests_per_minute = r.value("requests_per_minute", config.rate.requests_per_minute);
    config.rate.tokens_per_minute = r.value("tokens_per_minute", config.rate.tokens_per_minute);
    config.rate.max_in_flight = r.value("max_in_flight", config.rate.max_in_flight);
    if (r.contains("retry")) {
      const auto& retry = r["retry"];
      config.rate.retry.max_attempts = retry.value("max_attempts", config.rate.retry.max_attempts);
      config.rate.retry.base_delay_ms = retry.value("base_delay_ms", config.rate.retry.base_delay_ms);
      config.rate.retry.max_delay_ms = retry.value("max_delay_ms", config.rate.retry.max_delay_ms);
      config.rate.retry.jitter_fraction =
          retry.value("jitter_fraction", config.rate.retry.jitter_fraction);
    }
  }

  config.workers = doc.value("workers", 1);
  if (doc.contains("cache")) config.cache_path = resolve_path(doc["cache"].get<std::string>());
  if (doc.contains("output_dir")) config.output_dir = resolve_path(doc["output_dir"].get<std::string>());
  config.seed = doc.value("seed", std::uint64_t{0});
  config.video_duration_label = doc.value("video_duration_label", config.video_duration_label);
  config.video_duration_s = doc.value("video_duration_s", config.video_duration_s);
  config.fps_label = doc.value("fps_label", config.fps_label);
  if (doc.contains("pricing")) {
    config.pricing.prompt_per_1k = doc["pricing"].value("prompt_per_1k", 0.0);
    config.pricing.completion_per_1k = doc["pricing"].value("completion_per_1k", 0.0);
  }
  if (doc.value("interval_policy", std::string("best_single")) == "union") {
    config.interval_policy = MultiIntervalPolicy::kUnion;
  }
  config.bootstrap_samples = doc.value("bootstrap_samples", 0);
  if (doc.contains("limit_items")) config.limit_items = doc["limit_items"].get<int>();
  return config;
}

namespace {

bool grounding_requested(const ExperimentConfig& config) {
  return config.strategy.with_grounding || config.strategy.kind == Strategy::kGrounding;
}

std::string default_backend_id(const ExperimentConfig& config) {
  if (!config.backend.backend_id.empty()) return config.backend.backend_id;
  if (!config.backend.base_url.empty()) return config.backend.base_url;
  return "mock";
}

json sampler_json(const ExperimentConfig& config) {
  return {{"clip_length_s", config.sampler.target_clip_length_s},
          {"stride", config.sampler.sampling_stride},
          {"numbering", config.sampler.numbering == Numbering::kFrameIndex ? "frame_index" : "off"},
          {"index_stride", config.sampler.index_stride}};
}

}  // namespace

std::string config_digest(const ExperimentConfig& config) {
  // Experiment identity: what can change the summary bytes. Execution knobs
  // (workers, rate limits, cache/output locations, run mode) and credentials
  // are excluded.
  json canonical{
      {"captions", config.captions_path.string()},
      {"captions_endpoint", config.captions_endpoint},
      {"qa", config.qa_path.string()},
      {"grounding", config.grounding_path ? json(config.grounding_path->string()) : json(nullptr)},
      {"categories", config.categories_path ? json(config.categories_path->string()) : json(nullptr)},
      {"sampler", sampler_json(config)},
      {"strategy",
       {{"kind", strategy_name(config.strategy.kind)},
        {"variant", summary_variant_name(config.strategy.variant)},
        {"n_words", config.strategy.n_words},
        {"summary_temperature", config.strategy.summary_temperature
                                    ? json(*config.strategy.summary_temperature)
                                    : json(nullptr)},
        {"with_grounding", grounding_requested(config)}}},
      {"backend",
       {{"backend_id", default_backend_id(config)},
        {"model", config.backend.model},
        {"temperature", config.backend.temperature},
        {"max_output_tokens", config.backend.max_output_tokens
                                  ? json(*config.backend.max_output_tokens)
                                  : json(nullptr)}}},
      {"seed", config.seed},
      {"video_duration_label", config.video_duration_label},
      {"video_duration_s", config.video_duration_s},
      {"fps_label", config.fps_label},
      {"pricing",
       {{"prompt_per_1k", config.pricing.prompt_per_1k},
        {"completion_per_1k", config.pricing.completion_per_1k}}},
      {"interval_policy",
       config.interval_policy == MultiIntervalPolicy::kUnion ? "union" : "best_single"},
      {"bootstrap_samples", config.bootstrap_samples},
      {"limit_items", config.limit_items ? json(*config.limit_items) : json(nullptr)},
  };
  return detail::sha256_hex(canonical.dump());
}

void validate_config(const ExperimentConfig& config) {
  if (config.qa_path.empty()) throw ValidationError("qa corpus path is required");
  if (!std::filesystem::exists(config.qa_path)) {
    throw ValidationError("qa corpus does not exist: " + config.qa_path.string());
  }
  if (config.captions_path.empty() && config.captions_endpoint.empty()) {
    throw ValidationError("either a captions corpus path or a captions endpoint is required");
  }
  if (!config.captions_path.empty() && !std::filesystem::exists(config.captions_path)) {
    throw ValidationError("captions corpus does not exist: " + config.captions_path.string());
  }
  if (config.workers < 1) throw ValidationError("workers must be >= 1");
  if (config.sampler.sampling_stride < 1) throw ValidationError("sampling stride must be >= 1");
  if (config.cache_path.empty()) throw ValidationError("cache path is required");
  if (config.output_dir.empty()) throw ValidationError("output_dir is required");
  if (config.bootstrap_samples < 0) throw ValidationError("bootstrap_samples must be >= 0");
  if (config.limit_items && *config.limit_items < 1) {
    throw ValidationError("limit_items must be >= 1");
  }

  if (config.strategy.kind == Strategy::kSummarizeThenAnswer && config.strategy.n_words < 1) {
    throw ValidationError("summarize strategy requires n_words >= 1");
  }

  if (grounding_requested(config)) {
    if (!config.grounding_path) {
      throw ValidationError("grounding metrics requested but no grounding labels provided");
    }
    if (!std::filesystem::exists(*config.grounding_path)) {
      throw ValidationError("grounding labels do not exist: " + config.grounding_path->string());
    }
  }

  switch (config.backend.mode) {
    case BackendMode::kLive:
      if (config.backend.base_url.empty()) {
        throw ValidationError("live backend requires base_url");
      }
      break;
    case BackendMode::kMock:
      if (!config.backend.rulebook_path.empty() &&
          !std::filesystem::exists(config.backend.rulebook_path)) {
        throw ValidationError("mock rulebook does not exist: " + config.backend.rulebook_path);
      }
      break;
    case BackendMode::kReplayOnly:
      if (!std::filesystem::exists(config.cache_path)) {
        throw ValidationError("replay-only run requires an existing cache: " +
                              config.cache_path.string());
      }
      break;
  }
}

namespace {

std::unique_ptr<CompletionBackend> default_backend(const ExperimentConfig& config) {
  switch (config.backend.mode) {
    case BackendMode::kMock: {
      MockRulebook book;
      if (!config.backend.rulebook_path.empty()) {
        book = MockRulebook::from_file(config.backend.rulebook_path);
      }
      return std::make_unique<MockBackend>(std::move(book));
    }
    case BackendMode::kLive: {
      HttpBackendConfig http;
      http.base_url = config.backend.base_url;
      http.api_key = config.backend.api_key;
      return std::make_unique<HttpChatBackend>(std::move(http));
    }
    case BackendMode::kReplayOnly:
      return nullptr;  // the cache answers everything
  }
  return nullptr;
}

struct WorkItem {
  const QaItem* qa = nullptr;
  const CaptionTrack* track = nullptr;
};

struct ItemOutcome {
  ItemResult result;
  bool done = false;
};

/// Per-run immutable context shared by the worker pool.
struct RunContext {
  const ExperimentConfig* config;
  const TemplateLibrary* templates;
  Executor* executor;
  bool grounding;
  PromptContext prompt_context;
};

ItemResult process_item(const RunContext& ctx, const WorkItem& work) {
  const ExperimentConfig& config = *ctx.config;
  const CaptionTrack& track = *work.track;
  const QaItem& qa = *work.qa;

  // Resolve the frame-index stride: explicit config wins, else the corpus
  // declaration; stored frame indices need no stride at all.
  int index_stride = config.sampler.index_stride;
  const bool has_stored_indices =
      !track.clips.empty() && track.clips.front().frame_index.has_value();
  if (index_stride < 1) {
    index_stride = static_cast<int>(track.frame_stride.value_or(0));
  }
  if (ctx.grounding && index_stride < 1 && !has_stored_indices) {
    throw ValidationError("grounding requested but video \"" + track.video_id +
                          "\" has neither stored frame indices nor a declared index stride");
  }

  SamplerConfig sampler = config.sampler;
  sampler.index_stride = index_stride >= 1 ? index_stride : 1;
  if (ctx.grounding) sampler.numbering = Numbering::kFrameIndex;

  const CaptionBlock block = render_block(track, sampler);
  const double clip_length_s = config.sampler.target_clip_length_s > 0.0
                                   ? config.sampler.target_clip_length_s
                                   : track.native_clip_length_s;

  PromptPlan qa_plan;
  switch (config.strategy.kind) {
    case Strategy::kStandard:
    case Strategy::kGrounding:
      qa_plan = build_standard(*ctx.templates, block, qa, clip_length_s, ctx.prompt_context);
      break;
    case Strategy::kSummarizeThenAnswer:
      qa_plan = build_summarize_then_answer(*ctx.templates, block, qa, config.strategy.variant,
                                            config.strategy.n_words, clip_length_s,
                                            ctx.prompt_context);
      if (config.strategy.summary_temperature) {
        qa_plan.rounds.front().temperature_override = config.strategy.summary_temperature;
      }
      break;
    case Strategy::kZeroShotCot:
      qa_plan = build_zero_shot_cot(*ctx.templates, block, qa, clip_length_s, ctx.prompt_context);
      break;
    case Strategy::kPlanAndSolve:
      qa_plan = build_plan_and_solve(*ctx.templates, block, qa, clip_length_s, ctx.prompt_context);
      break;
  }

  ItemResult result;
  result.qa_id = qa.qa_id;
  result.video_id = qa.video_id;
  result.selected_captions = block.selected_count;

  const auto qa_records = ctx.executor->execute_plan(qa_plan);
  for (const auto& record : qa_records) {
    result.prompt_tokens += record.prompt_tokens;
    result.completion_tokens += record.completion_tokens;
    result.latency_ms += record.latency_ms;
    result.round_digests.push_back(record.request_digest);
  }
  result.choice = parse_choice(qa_records.back().response_text);

  if (ctx.grounding) {
    const PromptPlan grounding_plan = build_grounding(*ctx.templates, block, qa.question,
                                                      sampler.index_stride, ctx.prompt_context);
    const auto grounding_records = ctx.executor->execute_plan(grounding_plan);
    const auto& record = grounding_records.back();
    result.prompt_tokens += record.prompt_tokens;
    result.completion_tokens += record.completion_tokens;
    result.latency_ms += record.latency_ms;
    result.round_digests.push_back(record.request_digest);

    if (const auto prediction = parse_intervals(record.response_text)) {
      result.predicted_intervals_frames = prediction->intervals;
      result.interval_swap_normalized = prediction->normalized_swap;
      result.predicted_intervals_s = frames_to_seconds(*prediction, track.seconds_per_index());
    }
  }
  return result;
}

}  // namespace

RunArtifacts run(const ExperimentConfig& config, const RunHooks& hooks) {
  validate_config(config);

  const std::int64_t wall_start_ms = detail::unix_ms_now();
  const auto t0 = std::chrono::steady_clock::now();

  const TemplateLibrary templates =
      config.templates_dir ? TemplateLibrary::load(*config.templates_dir)
                           : TemplateLibrary::builtin();

  std::vector<QaItem> qa_items = load_qa(config.qa_path);
  if (qa_items.empty()) throw ValidationError("qa corpus has no items");

  std::map<std::string, GroundingLabel> grounding_labels;
  if (config.grounding_path) {
    grounding_labels = load_grounding(*config.grounding_path);
    std::set<std::string> known_ids;
    for (const auto& item : qa_items) known_ids.insert(item.qa_id);
    for (const auto& [qa_id, _] : grounding_labels) {
      if (!known_ids.count(qa_id)) {
        std::cerr << "warning: grounding label for unknown qa_id \"" << qa_id
                  << "\" (retained)\n";
      }
    }
  }

  if (config.limit_items && static_cast<int>(qa_items.size()) > *config.limit_items) {
    qa_items.resize(*config.limit_items);
  }
  CategoryMap categories;
  if (config.categories_path) categories = load_categories(*config.categories_path);

  // Assemble tracks: local corpus first, then the per-video fetch cache,
  // then the remote caption source (never in replay mode).
  std::unordered_map<std::string, CaptionTrack> tracks;
  if (!config.captions_path.empty()) {
    for (auto& track : load_caption_tracks(config.captions_path)) {
      tracks.emplace(track.video_id, std::move(track));
    }
  }
  std::set<std::string> wanted_videos;
  for (const auto& item : qa_items) wanted_videos.insert(item.video_id);

  const auto caption_cache_dir = config.cache_path.parent_path() / "captions";
  for (const auto& video_id : wanted_videos) {
    if (tracks.count(video_id)) continue;
    const auto cached = caption_cache_dir / (detail::sanitize_filename(video_id) + ".captions.jsonl");
    if (std::filesystem::exists(cached)) {
      for (auto& track : load_caption_tracks(cached)) {
        tracks.emplace(track.video_id, std::move(track));
      }
      continue;
    }
    if (config.captions_endpoint.empty() || config.backend.mode == BackendMode::kReplayOnly) {
      throw ValidationError("no caption track available for video \"" + video_id + "\"" +
                            (config.backend.mode == BackendMode::kReplayOnly
                                 ? " (replay-only runs never fetch)"
                                 : ""));
    }
    FetchOptions fetch;
    fetch.cache_dir = caption_cache_dir;
    CaptionTrack track = fetch_captions_remote(config.captions_endpoint, video_id,
                                               {0.0, config.video_duration_s}, fetch);
    tracks.emplace(video_id, std::move(track));
  }

  const bool grounding = grounding_requested(config);

  std::vector<WorkItem> work;
  work.reserve(qa_items.size());
  for (const auto& item : qa_items) {
    work.push_back({&item, &tracks.at(item.video_id)});
  }

  // Corpus-level pre-flight: fail before any backend call, not mid-run.
  if (grounding) {
    for (const auto& w : work) {
      const bool has_indices =
          !w.track->clips.empty() && w.track->clips.front().frame_index.has_value();
      const int stride = config.sampler.index_stride >= 1
                             ? config.sampler.index_stride
                             : static_cast<int>(w.track->frame_stride.value_or(0));
      if (!has_indices && stride < 1) {
        throw ValidationError("grounding requested but video \"" + w.track->video_id +
                              "\" has neither stored frame indices nor a declared index stride");
      }
    }
  }

  auto cache = std::make_shared<CompletionCache>(config.cache_path);
  std::unique_ptr<CompletionBackend> backend =
      hooks.backend_factory ? hooks.backend_factory(config) : default_backend(config);

  ExecutorConfig exec_config;
  exec_config.mode = config.backend.mode;
  exec_config.backend_id = default_backend_id(config);
  exec_config.model = config.backend.model;
  exec_config.temperature = config.backend.temperature;
  exec_config.max_output_tokens = config.backend.max_output_tokens;
  exec_config.rate = config.rate;
  if (config.backend.mode != BackendMode::kLive) exec_config.jitter_seed = config.seed;

  Executor executor(exec_config, cache, std::move(backend), hooks.clock);

  RunContext ctx{&config, &templates, &executor, grounding,
                 PromptContext{config.video_duration_label, config.fps_label}};

  std::vector<ItemOutcome> outcomes(work.size());
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::mutex error_mu;
  std::exception_ptr first_error;

  const int worker_count = std::max(1, std::min<int>(config.workers, static_cast<int>(work.size())));
  std::vector<std::thread> pool;
  pool.reserve(worker_count);
  for (int w = 0; w < worker_count; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= work.size() || failed.load()) return;
        try {
          outcomes[i].result = process_item(ctx, work[i]);
          outcomes[i].done = true;
        } catch (...) {
          {
            std::lock_guard lock(error_mu);
            if (!first_error) first_error = std::current_exception();
          }
          failed.store(true);
          return;
        }
      }
    });
  }
  for (auto& t : pool) t.join();

  if (failed.load()) {
    std::string cause = "unknown error";
    try {
      std::rethrow_exception(first_error);
    } catch (const std::exception& e) {
      cause = e.what();
    }
    std::size_t completed = 0;
    for (const auto& o : outcomes) {
      if (o.done) ++completed;
    }
    throw PartialRunError("run stopped after " + std::to_string(completed) + "/" +
                          std::to_string(work.size()) +
                          " items (cache is consistent for resume): " + cause);
  }

  std::vector<ItemResult> results;
  results.reserve(outcomes.size());
  for (auto& outcome : outcomes) results.push_back(std::move(outcome.result));

  AggregateOptions agg;
  agg.interval_policy = config.interval_policy;
  agg.evaluate_grounding = grounding;
  agg.bootstrap_samples = config.bootstrap_samples;
  agg.seed = config.seed;
  agg.price_per_1k_prompt_tokens = config.pricing.prompt_per_1k;
  agg.price_per_1k_completion_tokens = config.pricing.completion_per_1k;

  EvalReport report = aggregate(results, qa_items, grounding_labels, categories, agg);

  const auto t1 = std::chrono::steady_clock::now();
  report.elapsed_s = std::chrono::duration<double>(t1 - t0).count();
  report.video_count = static_cast<std::int64_t>(wanted_videos.size());
  report.throughput_videos_per_min = throughput_videos_per_minute(
      report.video_count, std::max(report.elapsed_s, 1e-9), config.video_duration_s);

  std::filesystem::create_directories(config.output_dir);
  RunArtifacts artifacts;
  artifacts.report = report;
  artifacts.results_path = config.output_dir / "results.jsonl";
  artifacts.summary_path = config.output_dir / "summary.json";
  artifacts.manifest_path = config.output_dir / "manifest.json";
  artifacts.executor_stats = executor.stats();

  write_results_file(artifacts.results_path, results);

  {
    std::ofstream out(artifacts.summary_path, std::ios::trunc);
    if (!out) throw Error("cannot write summary: " + artifacts.summary_path.string());
    out << summary_json(report);
  }

  const std::int64_t wall_end_ms = detail::unix_ms_now();
  json manifest{
      {"format", "capqa/manifest"},
      {"version", 1},
      {"config_digest", config_digest(config)},
      {"template_version", templates.version()},
      {"template_hash", templates.version_hash()},
      {"backend_id", exec_config.backend_id},
      {"mode", backend_mode_name(config.backend.mode)},
      {"model", config.backend.model},
      {"strategy", strategy_name(config.strategy.kind)},
      {"workers", config.workers},
      {"started_utc", detail::iso8601_utc(wall_start_ms)},
      {"finished_utc", detail::iso8601_utc(wall_end_ms)},
      {"elapsed_s", report.elapsed_s},
      {"items", report.item_count},
      {"videos", report.video_count},
      {"video_duration_s", config.video_duration_s},
      {"throughput_videos_per_min", report.throughput_videos_per_min},
      {"backend_calls", artifacts.executor_stats.backend_calls},
      {"cache_hits", artifacts.executor_stats.cache_hits},
      {"total_attempts", artifacts.executor_stats.total_attempts},
      {"live_transport_instances", HttpChatBackend::instances_created()},
  };
  {
    std::ofstream out(artifacts.manifest_path, std::ios::trunc);
    if (!out) throw Error("cannot write manifest: " + artifacts.manifest_path.string());
    out << manifest.dump(2) << '\n';
  }
  return artifacts;
}

std::vector<SweepPoint> sweep(const ExperimentConfig& config, SweepAxis axis,
                              const std::vector<double>& values, const RunHooks& hooks) {
  if (values.empty()) throw ValidationError("sweep needs at least one axis value");

  std::vector<SweepPoint> points;
  points.reserve(values.size());
  const char* axis_name = axis == SweepAxis::kClipLength ? "clip_length" : "stride";

  for (const double value : values) {
    SweepPoint point;
    point.axis_value = value;

    ExperimentConfig point_config = config;
    if (axis == SweepAxis::kClipLength) {
      point_config.sampler.target_clip_length_s = value;
    } else {
      if (value < 1.0 || value != std::floor(value)) {
        point.error = "stride must be a positive integer";
        points.push_back(std::move(point));
        continue;
      }
      point_config.sampler.sampling_stride = static_cast<int>(value);
    }

    std::string label = std::to_string(value);
    label.erase(label.find_last_not_of('0') + 1);
    if (!label.empty() && label.back() == '.') label.pop_back();
    point_config.output_dir =
        config.output_dir / (std::string("sweep_") + axis_name + "_" + label);
    point.output_dir = point_config.output_dir;

    try {
      point.report = run(point_config, hooks).report;
    } catch (const std::exception& e) {
      point.error = e.what();
    }
    points.push_back(std::move(point));
  }

  json summary = json::array();
  for (const auto& point : points) {
    json entry{{"axis", axis_name},
               {"value", point.axis_value},
               {"output_dir", point.output_dir.string()}};
    if (point.report) {
      entry["accuracy"] = point.report->accuracy;
      entry["prompt_tokens_total"] = point.report->prompt_tokens_total;
      entry["completion_tokens_total"] = point.report->completion_tokens_total;
    } else {
      entry["error"] = point.error;
    }
    summary.push_back(std::move(entry));
  }
  std::filesystem::create_directories(config.output_dir);
  std::ofstream out(config.output_dir / "sweep_summary.json", std::ios::trunc);
  out << summary.dump(2) << '\n';

  return points;
}

EvalReport reaggregate(const std::filesystem::path& results_path,
                       const std::filesystem::path& qa_path,
                       const std::optional<std::filesystem::path>& grounding_path,
                       const std::optional<std::filesystem::path>& categories_path,
                       const AggregateOptions& options) {
  const auto results = read_results_file(results_path);
  const auto qa_items = load_qa(qa_path);
  std::map<std::string, GroundingLabel> grounding_labels;
  if (grounding_path) grounding_labels = load_grounding(*grounding_path);
  CategoryMap categories;
  if (categories_path) categories = load_categories(*categories_path);

  AggregateOptions effective = options;
  effective.evaluate_grounding = grounding_path.has_value();
  return aggregate(results, qa_items, grounding_labels, categories, effective);
}

}  // namespace capqa
