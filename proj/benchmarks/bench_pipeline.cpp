// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include <random>
#include <string>
#include <vector>

#include "capqa/backend.hpp"
#include "capqa/metrics.hpp"
#include "capqa/parse.hpp"
#include "capqa/prompt.hpp"
#include "capqa/sampler.hpp"

namespace {

using namespace capqa;

CaptionTrack synthetic_track(int clips) {
  CaptionTrack track;
  track.video_id = "bench";
  track.native_clip_length_s = 1.0;
  track.clips.reserve(clips);
  for (int i = 0; i < clips; ++i) {
    track.clips.push_back({"bench", static_cast<double>(i), static_cast<double>(i + 1),
                           "the camera wearer performs step " + std::to_string(i),
                           std::nullopt});
  }
  return track;
}

QaItem synthetic_qa() {
  QaItem qa;
  qa.qa_id = "bench_q";
  qa.video_id = "bench";
  qa.question = "What is the overarching goal of the activity?";
  qa.options = {"assembling furniture", "preparing a meal", "repairing a bicycle",
                "painting a canvas", "organizing a shelf"};
  qa.answer_index = 1;
  return qa;
}

void BM_RenderBlock(benchmark::State& state) {
  const auto track = synthetic_track(static_cast<int>(state.range(0)));
  SamplerConfig config;
  config.sampling_stride = 2;
  for (auto _ : state) {
    benchmark::DoNotOptimize(render_block(track, config));
  }
  state.SetItemsProcessed(state.iterations() * track.clips.size());
}
BENCHMARK(BM_RenderBlock)->Arg(180)->Arg(1800)->Arg(10000);

void BM_MergeSubsample(benchmark::State& state) {
  const auto track = synthetic_track(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(subsample(merge_to_length(track, 4.0), 2));
  }
}
BENCHMARK(BM_MergeSubsample)->Arg(1800)->Arg(10000);

void BM_BuildStandardPrompt(benchmark::State& state) {
  const auto templates = TemplateLibrary::builtin();
  const auto track = synthetic_track(static_cast<int>(state.range(0)));
  const auto block = render_block(track, SamplerConfig{});
  const auto qa = synthetic_qa();
  for (auto _ : state) {
    benchmark::DoNotOptimize(build_standard(templates, block, qa, 1.0));
  }
  state.SetBytesProcessed(state.iterations() * block.text.size());
}
BENCHMARK(BM_BuildStandardPrompt)->Arg(180)->Arg(1800);

void BM_ParseChoice(benchmark::State& state) {
  const std::string texts[] = {
      "B", "B: because the wearer rinses plates", "The answer is (D).",
      "I am fairly sure the best option here is C, given the captions.",
  };
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(parse_choice(texts[i++ & 3]));
  }
}
BENCHMARK(BM_ParseChoice);

void BM_ParseIntervals(benchmark::State& state) {
  for (auto _ : state) {
    benchmark::DoNotOptimize(parse_intervals("I will check [1, 10] and [50, 60] of the video"));
  }
}
BENCHMARK(BM_ParseIntervals);

void BM_IopIou(benchmark::State& state) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> pos(0.0, 99.0);
  std::vector<SecondInterval> preds;
  std::vector<SecondInterval> gts;
  for (int i = 0; i < 1024; ++i) {
    const double p = pos(rng);
    preds.push_back({p, p + 1.0});
    const double g = pos(rng);
    gts.push_back({g, g + 5.0});
  }
  std::size_t i = 0;
  for (auto _ : state) {
    const auto& pred = preds[i & 1023];
    benchmark::DoNotOptimize(iop(pred, gts));
    benchmark::DoNotOptimize(iou(pred, gts));
    ++i;
  }
}
BENCHMARK(BM_IopIou);

void BM_RequestDigest(benchmark::State& state) {
  const auto templates = TemplateLibrary::builtin();
  const auto block = render_block(synthetic_track(static_cast<int>(state.range(0))),
                                  SamplerConfig{});
  const auto plan = build_standard(templates, block, synthetic_qa(), 1.0);
  CompletionRequest request;
  request.model = "gpt-3.5-turbo";
  request.turns = {{Role::kUser, plan.rounds[0].user_text}};
  for (auto _ : state) {
    benchmark::DoNotOptimize(request_digest("bench", request));
  }
  state.SetBytesProcessed(state.iterations() * request.turns[0].content.size());
}
BENCHMARK(BM_RequestDigest)->Arg(180)->Arg(1800);

}  // namespace

BENCHMARK_MAIN();
