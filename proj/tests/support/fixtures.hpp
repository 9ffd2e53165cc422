// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "capqa/corpus.hpp"
#include "capqa/sampler.hpp"

namespace capqa::test {

using json = nlohmann::json;

inline std::filesystem::path make_temp_dir(const std::string& hint) {
  static std::atomic<int> counter{0};
  const auto dir = std::filesystem::temp_directory_path() /
                   ("capqa_" + hint + "_" + std::to_string(::getpid()) + "_" +
                    std::to_string(counter.fetch_add(1)));
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline void write_text(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  out << content;
}

// --- corpus fixture writers -------------------------------------------------

struct CaptionSpec {
  std::string video_id;
  double start_s = 0.0;
  double end_s = 0.0;
  std::string text;
  std::optional<std::int64_t> frame_index;
};

inline void write_captions(const std::filesystem::path& path,
                           const std::vector<CaptionSpec>& clips,
                           std::optional<double> native_clip_length_s = {},
                           std::optional<std::int64_t> frame_stride = {},
                           std::optional<double> seconds_per_frame_index = {}) {
  std::ofstream out(path, std::ios::trunc);
  json header{{"format", "capqa/captions"}, {"version", 1}};
  if (native_clip_length_s) header["native_clip_length_s"] = *native_clip_length_s;
  if (frame_stride) header["frame_stride"] = *frame_stride;
  if (seconds_per_frame_index) header["seconds_per_frame_index"] = *seconds_per_frame_index;
  out << header.dump() << '\n';
  for (const auto& clip : clips) {
    json rec{{"video_id", clip.video_id},
             {"start_s", clip.start_s},
             {"end_s", clip.end_s},
             {"text", clip.text}};
    if (clip.frame_index) rec["frame_index"] = *clip.frame_index;
    out << rec.dump() << '\n';
  }
}

struct QaSpec {
  std::string qa_id;
  std::string video_id;
  std::string question;
  std::array<std::string, 5> options;
  std::optional<int> answer_index;
  std::vector<std::string> categories;
};

inline void write_qa(const std::filesystem::path& path, const std::vector<QaSpec>& items) {
  std::ofstream out(path, std::ios::trunc);
  out << json{{"format", "capqa/qa"}, {"version", 1}}.dump() << '\n';
  for (const auto& item : items) {
    json rec{{"qa_id", item.qa_id},
             {"video_id", item.video_id},
             {"question", item.question},
             {"options", item.options}};
    if (item.answer_index) rec["answer_index"] = *item.answer_index;
    if (!item.categories.empty()) rec["categories"] = item.categories;
    out << rec.dump() << '\n';
  }
}

inline void write_grounding(
    const std::filesystem::path& path,
    const std::vector<std::pair<std::string, std::vector<std::pair<double, double>>>>& labels) {
  std::ofstream out(path, std::ios::trunc);
  out << json{{"format", "capqa/grounding"}, {"version", 1}}.dump() << '\n';
  for (const auto& [qa_id, segments] : labels) {
    json segs = json::array();
    for (const auto& [a, b] : segments) segs.push_back({a, b});
    out << json{{"qa_id", qa_id}, {"segments", segs}}.dump() << '\n';
  }
}

inline void write_categories(
    const std::filesystem::path& path, const std::vector<std::string>& vocabulary,
    const std::vector<std::pair<std::string, std::vector<std::string>>>& entries) {
  std::ofstream out(path, std::ios::trunc);
  json header{{"format", "capqa/categories"}, {"version", 1}};
  if (!vocabulary.empty()) header["vocabulary"] = vocabulary;
  out << header.dump() << '\n';
  for (const auto& [qa_id, cats] : entries) {
    out << json{{"qa_id", qa_id}, {"categories", cats}}.dump() << '\n';
  }
}

inline void write_rulebook(const std::filesystem::path& path,
                           const std::vector<std::pair<std::string, std::string>>& rules,
                           const std::string& default_response) {
  json doc;
  doc["rules"] = json::array();
  for (const auto& [contains, response] : rules) {
    doc["rules"].push_back({{"contains", contains}, {"response", response}});
  }
  doc["default"] = default_response;
  std::ofstream out(path, std::ios::trunc);
  out << doc.dump(2) << '\n';
}

// --- the golden prompt fixture ----------------------------------------------
// Shared by the prompt unit tests and the acceptance suite; the checked-in
// golden files under tests/golden/ were transcribed against these values.

inline QaItem golden_qa() {
  QaItem qa;
  qa.qa_id = "qa_0001";
  qa.video_id = "v_kitchen";
  qa.question = "What is the primary activity shown in the video?";
  qa.options = {"Cooking dinner", "Washing dishes", "Fixing a bike", "Painting a wall",
                "Reading a book"};
  qa.answer_index = 1;
  return qa;
}

inline CaptionTrack golden_track() {
  CaptionTrack track;
  track.video_id = "v_kitchen";
  track.native_clip_length_s = 1.0;
  track.clips = {
      {"v_kitchen", 0.0, 1.0, "C opens the door", std::nullopt},
      {"v_kitchen", 1.0, 2.0, "C washes a plate", std::nullopt},
      {"v_kitchen", 2.0, 3.0, "C dries the plate", std::nullopt},
  };
  return track;
}

inline CaptionBlock golden_block() {
  return render_block(golden_track(), SamplerConfig{});
}

inline CaptionBlock golden_numbered_block() {
  SamplerConfig config;
  config.numbering = Numbering::kFrameIndex;
  config.index_stride = 2;
  return render_block(golden_track(), config);
}

inline const char* golden_summary_text() {
  return "The camera wearer washes and dries dishes at the sink.";
}

}  // namespace capqa::test
