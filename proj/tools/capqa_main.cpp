// SPDX-License-Identifier: Apache-2.0
//
// capqa — batch orchestration CLI for caption-based long-video QA.
//
// Subcommands:
//   run       execute one experiment and write results/summary/manifest
//   sweep     run a clip-length or stride sweep sharing one cache
//   report    re-aggregate a summary from a per-item results file
//   validate  pre-flight a config without issuing any backend call
//
// Exit codes: 0 success, 1 unexpected error, 2 validation failure,
// 3 transport failure, 4 partial failure (interrupted run / failed sweep
// points).

#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "capqa/errors.hpp"
#include "capqa/metrics.hpp"
#include "capqa/runner.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitValidation = 2;
constexpr int kExitTransport = 3;
constexpr int kExitPartial = 4;

struct CommonOverrides {
  std::string config_path;
  int workers = -1;
  std::string output_dir;
  std::string cache;
  std::string mode;
  int limit_items = -1;
  std::string strategy;
  double clip_length_s = -1.0;
  int stride = -1;
};

void add_common(CLI::App* cmd, CommonOverrides& opts) {
  cmd->add_option("--config", opts.config_path, "Experiment config file (JSON)")->required();
  cmd->add_option("--workers", opts.workers, "Override worker count");
  cmd->add_option("--output-dir", opts.output_dir, "Override output directory");
  cmd->add_option("--cache", opts.cache, "Override completion cache file");
  cmd->add_option("--mode", opts.mode, "Override backend mode (live|mock|replay)");
  cmd->add_option("--limit-items", opts.limit_items, "Process only the first N items (qa_id order)");
  cmd->add_option("--strategy", opts.strategy,
                  "Override strategy (standard|summarize|cot|plan_solve|grounding)");
  cmd->add_option("--clip-length", opts.clip_length_s, "Override sampler clip length (seconds)");
  cmd->add_option("--stride", opts.stride, "Override sampler stride");
}

capqa::ExperimentConfig materialize(const CommonOverrides& opts) {
  capqa::ExperimentConfig config = capqa::load_config(opts.config_path);
  if (opts.workers > 0) config.workers = opts.workers;
  if (!opts.output_dir.empty()) config.output_dir = opts.output_dir;
  if (!opts.cache.empty()) config.cache_path = opts.cache;
  if (!opts.mode.empty()) {
    if (opts.mode == "live") config.backend.mode = capqa::BackendMode::kLive;
    else if (opts.mode == "mock") config.backend.mode = capqa::BackendMode::kMock;
    else if (opts.mode == "replay" || opts.mode == "replay-only")
      config.backend.mode = capqa::BackendMode::kReplayOnly;
    else throw capqa::ValidationError("unknown --mode " + opts.mode);
  }
  if (opts.limit_items > 0) config.limit_items = opts.limit_items;
  if (!opts.strategy.empty()) {
    if (opts.strategy == "standard") config.strategy.kind = capqa::Strategy::kStandard;
    else if (opts.strategy == "summarize") config.strategy.kind = capqa::Strategy::kSummarizeThenAnswer;
    else if (opts.strategy == "cot") config.strategy.kind = capqa::Strategy::kZeroShotCot;
    else if (opts.strategy == "plan_solve") config.strategy.kind = capqa::Strategy::kPlanAndSolve;
    else if (opts.strategy == "grounding") config.strategy.kind = capqa::Strategy::kGrounding;
    else throw capqa::ValidationError("unknown --strategy " + opts.strategy);
  }
  if (opts.clip_length_s > 0) config.sampler.target_clip_length_s = opts.clip_length_s;
  if (opts.stride > 0) config.sampler.sampling_stride = opts.stride;
  return config;
}

void print_report(const capqa::EvalReport& report) {
  std::cout << "items: " << report.item_count << " answered: " << report.answered_count
            << " accuracy: " << report.accuracy
            << " parse_failures: " << report.parse_failure_count << "\n";
  if (report.grounding) {
    std::cout << "mIoP: " << report.grounding->m_iop << " mIoU: " << report.grounding->m_iou
              << " IoP@0.5: " << report.grounding->iop_at_05
              << " IoU@0.5: " << report.grounding->iou_at_05
              << " Acc@GQA: " << report.grounding->acc_gqa << "\n";
  }
  std::cout << "tokens: " << report.prompt_tokens_total << " prompt / "
            << report.completion_tokens_total << " completion, estimated cost: "
            << report.estimated_cost << "\n";
  std::cout << "throughput: " << report.throughput_videos_per_min << " videos/min over "
            << report.elapsed_s << " s\n";
}

int run_command(const CommonOverrides& opts) {
  const auto config = materialize(opts);
  const auto artifacts = capqa::run(config);
  print_report(artifacts.report);
  std::cout << "results:  " << artifacts.results_path.string() << "\n"
            << "summary:  " << artifacts.summary_path.string() << "\n"
            << "manifest: " << artifacts.manifest_path.string() << "\n";
  return kExitOk;
}

int sweep_command(const CommonOverrides& opts, const std::string& axis,
                  const std::vector<double>& values) {
  const auto config = materialize(opts);
  capqa::SweepAxis sweep_axis;
  if (axis == "clip_length") sweep_axis = capqa::SweepAxis::kClipLength;
  else if (axis == "stride") sweep_axis = capqa::SweepAxis::kStride;
  else throw capqa::ValidationError("unknown sweep axis \"" + axis + "\" (want clip_length|stride)");

  const auto points = capqa::sweep(config, sweep_axis, values);
  bool any_failed = false;
  for (const auto& point : points) {
    std::cout << axis << "=" << point.axis_value << ": ";
    if (point.report) {
      std::cout << "accuracy " << point.report->accuracy << ", prompt tokens "
                << point.report->prompt_tokens_total << "\n";
    } else {
      any_failed = true;
      std::cout << "FAILED: " << point.error << "\n";
    }
  }
  return any_failed ? kExitPartial : kExitOk;
}

struct ReportPricing {
  double prompt_per_1k = 0.0;
  double completion_per_1k = 0.0;
  int bootstrap_samples = 0;
  std::uint64_t seed = 0;
};

int report_command(const std::string& results, const std::string& qa, const std::string& grounding,
                   const std::string& categories, const std::string& output,
                   const std::string& interval_policy, const ReportPricing& pricing) {
  capqa::AggregateOptions options;
  if (interval_policy == "union") options.interval_policy = capqa::MultiIntervalPolicy::kUnion;
  else if (!interval_policy.empty() && interval_policy != "best_single") {
    throw capqa::ValidationError("unknown interval policy \"" + interval_policy + "\"");
  }
  options.price_per_1k_prompt_tokens = pricing.prompt_per_1k;
  options.price_per_1k_completion_tokens = pricing.completion_per_1k;
  options.bootstrap_samples = pricing.bootstrap_samples;
  options.seed = pricing.seed;
  std::optional<std::filesystem::path> grounding_path;
  if (!grounding.empty()) grounding_path = grounding;
  std::optional<std::filesystem::path> categories_path;
  if (!categories.empty()) categories_path = categories;

  const auto report = capqa::reaggregate(results, qa, grounding_path, categories_path, options);
  const std::string body = capqa::summary_json(report);
  if (output.empty()) {
    std::cout << body;
  } else {
    std::ofstream out(output, std::ios::trunc);
    if (!out) throw capqa::Error("cannot write " + output);
    out << body;
    std::cout << "summary: " << output << "\n";
  }
  return kExitOk;
}

int validate_command(const CommonOverrides& opts) {
  const auto config = materialize(opts);
  capqa::validate_config(config);
  std::cout << "config ok\nconfig_digest: " << capqa::config_digest(config) << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"caption-based long-video QA orchestration"};
  app.require_subcommand(1);

  CommonOverrides run_opts;
  auto* run_cmd = app.add_subcommand("run", "Execute one experiment");
  add_common(run_cmd, run_opts);

  CommonOverrides sweep_opts;
  std::string sweep_axis;
  std::vector<double> sweep_values;
  auto* sweep_cmd = app.add_subcommand("sweep", "Run a clip-length or stride sweep");
  add_common(sweep_cmd, sweep_opts);
  sweep_cmd->add_option("--axis", sweep_axis, "Sweep axis (clip_length|stride)")->required();
  sweep_cmd->add_option("--values", sweep_values, "Axis values")->required()->delimiter(',');

  std::string rep_results, rep_qa, rep_grounding, rep_categories, rep_output, rep_policy;
  ReportPricing rep_pricing;
  auto* report_cmd = app.add_subcommand("report", "Re-aggregate from a results file");
  report_cmd->add_option("--results", rep_results, "Per-item results file")->required();
  report_cmd->add_option("--qa", rep_qa, "QA corpus file")->required();
  report_cmd->add_option("--grounding", rep_grounding, "Grounding labels file");
  report_cmd->add_option("--categories", rep_categories, "Category map file");
  report_cmd->add_option("-o,--output", rep_output, "Write summary here instead of stdout");
  report_cmd->add_option("--interval-policy", rep_policy, "best_single|union");
  report_cmd->add_option("--prompt-price-per-1k", rep_pricing.prompt_per_1k,
                         "Price per 1k prompt tokens");
  report_cmd->add_option("--completion-price-per-1k", rep_pricing.completion_per_1k,
                         "Price per 1k completion tokens");
  report_cmd->add_option("--bootstrap", rep_pricing.bootstrap_samples,
                         "Bootstrap resample count for the accuracy CI");
  report_cmd->add_option("--seed", rep_pricing.seed, "Bootstrap seed");

  CommonOverrides validate_opts;
  auto* validate_cmd = app.add_subcommand("validate", "Pre-flight a config, no backend calls");
  add_common(validate_cmd, validate_opts);

  CLI11_PARSE(app, argc, argv);

  try {
    if (run_cmd->parsed()) return run_command(run_opts);
    if (sweep_cmd->parsed()) return sweep_command(sweep_opts, sweep_axis, sweep_values);
    if (report_cmd->parsed()) {
      return report_command(rep_results, rep_qa, rep_grounding, rep_categories, rep_output,
                            rep_policy, rep_pricing);
    }
    if (validate_cmd->parsed()) return validate_command(validate_opts);
  } catch (const capqa::ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const capqa::CorpusError& e) {
    std::cerr << "corpus error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const capqa::PartialRunError& e) {
    std::cerr << "partial run: " << e.what() << "\n";
    return kExitPartial;
  } catch (const capqa::TransportError& e) {
    std::cerr << "transport error: " << e.what() << "\n";
    return kExitTransport;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}
