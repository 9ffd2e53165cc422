// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace capqa {

/// One short-clip caption. Clips within a video are non-overlapping and
/// ordered by start time; gaps between clips are legal (sparse corpora).
struct ClipCaption {
  std::string video_id;
  double start_s = 0.0;
  double end_s = 0.0;
  std::string text;
  std::optional<std::int64_t> frame_index;
};

/// The temporally ordered caption sequence of one video.
struct CaptionTrack {
  std::string video_id;
  std::vector<ClipCaption> clips;  // sorted by start_s, pairwise non-overlapping
  double native_clip_length_s = 1.0;
  std::optional<std::int64_t> frame_stride;
  std::optional<double> seconds_per_frame_index;

  /// Seconds covered by one frame-index step. Falls back to the native clip
  /// length when the corpus does not declare a conversion factor.
  double seconds_per_index() const {
    return seconds_per_frame_index.value_or(native_clip_length_s);
  }
};

/// A five-way multiple-choice question. Options map to letters A-E by index.
struct QaItem {
  std::string qa_id;
  std::string video_id;
  std::string question;
  std::array<std::string, 5> options;
  std::optional<int> answer_index;  // 0..4; absent on blind test sets
  std::vector<std::string> categories;
};

/// Closed interval in seconds, end_s > start_s.
struct SecondInterval {
  double start_s = 0.0;
  double end_s = 0.0;

  double length() const { return end_s - start_s; }
};

/// Ground-truth temporal segments for one question.
struct GroundingLabel {
  std::string qa_id;
  std::vector<SecondInterval> segments;  // non-empty, sorted by start_s
};

/// qa_id -> category labels, with an optional declared vocabulary.
struct CategoryMap {
  std::vector<std::string> vocabulary;
  std::map<std::string, std::vector<std::string>> by_qa_id;
};

// Corpus loaders. All files are line-delimited JSON with a self-describing
// header line ({"format": "capqa/<kind>", "version": 1}). Errors name the
// offending file, line, and field.

std::vector<CaptionTrack> load_caption_tracks(const std::filesystem::path& path);
std::vector<QaItem> load_qa(const std::filesystem::path& path);
std::map<std::string, GroundingLabel> load_grounding(const std::filesystem::path& path);
CategoryMap load_categories(const std::filesystem::path& path);

/// Persists tracks in the captions corpus format (also used as the local
/// cache format for remotely fetched tracks).
void write_caption_tracks(const std::filesystem::path& path,
                          std::span<const CaptionTrack> tracks);

/// Time window requested from a remote caption source.
struct ClipWindow {
  double start_s = 0.0;
  double end_s = 0.0;
};

struct FetchOptions {
  int max_attempts = 3;
  int base_delay_ms = 100;
  int max_delay_ms = 2000;
  int timeout_s = 30;
  /// When set, the fetched track is persisted under this directory as a
  /// captions corpus file named after the video id.
  std::optional<std::filesystem::path> cache_dir;
  /// Retry/attempt observer for run logs; called once per attempt.
  std::function<void(int attempt, const std::string& note)> on_attempt;
};

/// Fetches one track from a caption-source service speaking the wire
/// contract: POST {endpoint}/captions with {video_id, start_s, end_s},
/// response {clips: [{start_s, end_s, text}]}. The returned track satisfies
/// all CaptionTrack invariants; violations raise SchemaError.
CaptionTrack fetch_captions_remote(const std::string& endpoint,
                                   const std::string& video_id,
                                   const ClipWindow& window,
                                   const FetchOptions& options = {});

}  // namespace capqa
