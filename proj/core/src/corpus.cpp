// SPDX-License-Identifier: Apache-2.0
#include "capqa/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <thread>
#include <unordered_set>

#include "httplib.h"
#include "capqa/errors.hpp"
#include "internal/util.hpp"

namespace capqa {

namespace {

using detail::json;

constexpr double kOverlapEps = 1e-9;

struct NumberedClip {
  ClipCaption clip;
  std::size_t line_no;
};

double require_number(const json& rec, const char* field, const std::filesystem::path& path,
                      std::size_t line_no) {
  if (!rec.contains(field) || !rec[field].is_number()) {
    detail::corpus_fail(path, line_no, std::string("missing or non-numeric field \"") + field + "\"");
  }
  return rec[field].get<double>();
}

std::string require_string(const json& rec, const char* field, const std::filesystem::path& path,
                           std::size_t line_no) {
  if (!rec.contains(field) || !rec[field].is_string()) {
    detail::corpus_fail(path, line_no, std::string("missing or non-string field \"") + field + "\"");
  }
  return rec[field].get<std::string>();
}

void sort_and_check_clips(CaptionTrack& track, const std::filesystem::path& path,
                          const std::vector<std::size_t>* line_nos) {
  std::vector<std::size_t> order(track.clips.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return track.clips[a].start_s < track.clips[b].start_s;
  });
  std::vector<ClipCaption> sorted;
  sorted.reserve(track.clips.size());
  std::vector<std::size_t> sorted_lines;
  for (const std::size_t i : order) {
    sorted.push_back(std::move(track.clips[i]));
    if (line_nos) sorted_lines.push_back((*line_nos)[i]);
  }
  track.clips = std::move(sorted);

  std::optional<std::int64_t> prev_frame;
  for (std::size_t i = 0; i < track.clips.size(); ++i) {
    const auto& clip = track.clips[i];
    if (i > 0) {
      const auto& prev = track.clips[i - 1];
      if (clip.start_s < prev.end_s - kOverlapEps) {
        const std::string where =
            line_nos ? " (line " + std::to_string(sorted_lines[i]) + ")" : "";
        throw CorpusError(path.string() + ": overlapping clips in video \"" + track.video_id +
                          "\" at " + std::to_string(clip.start_s) + "s" + where);
      }
    }
    if (clip.frame_index) {
      if (prev_frame && *clip.frame_index <= *prev_frame) {
        throw CorpusError(path.string() + ": frame_index not strictly increasing in video \"" +
                          track.video_id + "\"");
      }
      prev_frame = clip.frame_index;
    }
  }
}

}  // namespace

std::vector<CaptionTrack> load_caption_tracks(const std::filesystem::path& path) {
  std::map<std::string, std::vector<NumberedClip>> by_video;

  const json header = detail::read_jsonl(path, "capqa/captions", [&](std::size_t line_no,
                                                                     const json& rec) {
    ClipCaption clip;
    clip.video_id = require_string(rec, "video_id", path, line_no);
    clip.start_s = require_number(rec, "start_s", path, line_no);
    clip.end_s = require_number(rec, "end_s", path, line_no);
    clip.text = require_string(rec, "text", path, line_no);
    if (clip.video_id.empty()) detail::corpus_fail(path, line_no, "empty video_id");
    if (clip.start_s < 0) detail::corpus_fail(path, line_no, "negative start_s");
    if (clip.end_s <= clip.start_s) {
      detail::corpus_fail(path, line_no, "end_s must be greater than start_s (video \"" +
                                             clip.video_id + "\", start_s " +
                                             std::to_string(clip.start_s) + ")");
    }
    if (detail::trim(clip.text).empty()) {
      detail::corpus_fail(path, line_no, "empty caption text");
    }
    if (rec.contains("frame_index")) {
      if (!rec["frame_index"].is_number_integer() || rec["frame_index"].get<std::int64_t>() < 0) {
        detail::corpus_fail(path, line_no, "frame_index must be a non-negative integer");
      }
      clip.frame_index = rec["frame_index"].get<std::int64_t>();
    }
    by_video[clip.video_id].push_back({std::move(clip), line_no});
  });

  if (by_video.empty()) {
    throw CorpusError(path.string() + ": empty corpus (no caption records)");
  }

  std::optional<double> header_native;
  if (header.contains("native_clip_length_s")) {
    header_native = header["native_clip_length_s"].get<double>();
    if (*header_native <= 0) throw CorpusError(path.string() + ": non-positive native_clip_length_s");
  }

  std::vector<CaptionTrack> tracks;
  tracks.reserve(by_video.size());
  for (auto& [video_id, numbered] : by_video) {
    CaptionTrack track;
    track.video_id = video_id;
    std::vector<std::size_t> lines;
    lines.reserve(numbered.size());
    for (auto& nc : numbered) {
      track.clips.push_back(std::move(nc.clip));
      lines.push_back(nc.line_no);
    }
    sort_and_check_clips(track, path, &lines);
    track.native_clip_length_s =
        header_native.value_or(track.clips.front().end_s - track.clips.front().start_s);
    if (header.contains("frame_stride")) {
      track.frame_stride = header["frame_stride"].get<std::int64_t>();
      if (*track.frame_stride <= 0) throw CorpusError(path.string() + ": non-positive frame_stride");
    }
    if (header.contains("seconds_per_frame_index")) {
      track.seconds_per_frame_index = header["seconds_per_frame_index"].get<double>();
      if (*track.seconds_per_frame_index <= 0) {
        throw CorpusError(path.string() + ": non-positive seconds_per_frame_index");
      }
    }
    tracks.push_back(std::move(track));
  }
  return tracks;  // keyed map iteration => sorted by video_id
}

std::vector<QaItem> load_qa(const std::filesystem::path& path) {
  std::vector<QaItem> items;
  std::unordered_set<std::string> seen;

  detail::read_jsonl(path, "capqa/qa", [&](std::size_t line_no, const json& rec) {
    QaItem item;
    item.qa_id = require_string(rec, "qa_id", path, line_no);
    item.video_id = require_string(rec, "video_id", path, line_no);
    item.question = require_string(rec, "question", path, line_no);
    if (!rec.contains("options") || !rec["options"].is_array() || rec["options"].size() != 5) {
      detail::corpus_fail(path, line_no,
                          "expected 5 options for qa_id \"" + item.qa_id + "\"");
    }
    for (std::size_t i = 0; i < 5; ++i) {
      if (!rec["options"][i].is_string()) {
        detail::corpus_fail(path, line_no, "option " + std::to_string(i) + " is not a string");
      }
      item.options[i] = rec["options"][i].get<std::string>();
    }
    if (rec.contains("answer_index") && !rec["answer_index"].is_null()) {
      if (!rec["answer_index"].is_number_integer()) {
        detail::corpus_fail(path, line_no, "answer_index must be an integer");
      }
      const int idx = rec["answer_index"].get<int>();
      if (idx < 0 || idx > 4) {
        detail::corpus_fail(path, line_no, "answer_index out of range 0..4");
      }
      item.answer_index = idx;
    }
    if (rec.contains("categories")) {
      for (const auto& c : rec["categories"]) {
        item.categories.push_back(c.get<std::string>());
      }
    }
    if (!seen.insert(item.qa_id).second) {
      detail::corpus_fail(path, line_no, "duplicate qa_id \"" + item.qa_id + "\"");
    }
    items.push_back(std::move(item));
  });

  std::sort(items.begin(), items.end(),
            [](const QaItem& a, const QaItem& b) { return a.qa_id < b.qa_id; });
  return items;
}

std::map<std::string, GroundingLabel> load_grounding(const std::filesystem::path& path) {
  std::map<std::string, GroundingLabel> labels;

  detail::read_jsonl(path, "capqa/grounding", [&](std::size_t line_no, const json& rec) {
    const std::string qa_id = require_string(rec, "qa_id", path, line_no);
    if (!rec.contains("segments") || !rec["segments"].is_array() || rec["segments"].empty()) {
      detail::corpus_fail(path, line_no, "missing or empty segments for qa_id \"" + qa_id + "\"");
    }
    auto& label = labels[qa_id];
    label.qa_id = qa_id;
    for (const auto& seg : rec["segments"]) {
      if (!seg.is_array() || seg.size() != 2 || !seg[0].is_number() || !seg[1].is_number()) {
        detail::corpus_fail(path, line_no, "segment must be a numeric [start_s, end_s] pair");
      }
      SecondInterval interval{seg[0].get<double>(), seg[1].get<double>()};
      if (interval.end_s <= interval.start_s) {
        detail::corpus_fail(path, line_no, "inverted segment [" + std::to_string(interval.start_s) +
                                               ", " + std::to_string(interval.end_s) +
                                               "] for qa_id \"" + qa_id + "\"");
      }
      label.segments.push_back(interval);
    }
  });

  for (auto& [_, label] : labels) {
    std::sort(label.segments.begin(), label.segments.end(),
              [](const SecondInterval& a, const SecondInterval& b) { return a.start_s < b.start_s; });
  }
  return labels;
}

CategoryMap load_categories(const std::filesystem::path& path) {
  CategoryMap map;

  const json header =
      detail::read_jsonl(path, "capqa/categories", [&](std::size_t line_no, const json& rec) {
        const std::string qa_id = require_string(rec, "qa_id", path, line_no);
        if (!rec.contains("categories") || !rec["categories"].is_array()) {
          detail::corpus_fail(path, line_no, "missing categories array");
        }
        auto& labels = map.by_qa_id[qa_id];
        for (const auto& c : rec["categories"]) {
          const auto name = c.get<std::string>();
          if (std::find(labels.begin(), labels.end(), name) == labels.end()) {
            labels.push_back(name);
          }
        }
      });

  if (header.contains("vocabulary")) {
    for (const auto& v : header["vocabulary"]) {
      map.vocabulary.push_back(v.get<std::string>());
    }
    for (const auto& [qa_id, labels] : map.by_qa_id) {
      for (const auto& label : labels) {
        if (std::find(map.vocabulary.begin(), map.vocabulary.end(), label) ==
            map.vocabulary.end()) {
          throw CorpusError(path.string() + ": category \"" + label + "\" for qa_id \"" + qa_id +
                            "\" is not in the declared vocabulary");
        }
      }
    }
  }
  return map;
}

void write_caption_tracks(const std::filesystem::path& path,
                          std::span<const CaptionTrack> tracks) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write captions file: " + path.string());

  json header{{"format", "capqa/captions"}, {"version", 1}};
  if (!tracks.empty()) {
    header["native_clip_length_s"] = tracks.front().native_clip_length_s;
    if (tracks.front().frame_stride) header["frame_stride"] = *tracks.front().frame_stride;
    if (tracks.front().seconds_per_frame_index) {
      header["seconds_per_frame_index"] = *tracks.front().seconds_per_frame_index;
    }
  }
  out << header.dump() << '\n';
  for (const auto& track : tracks) {
    for (const auto& clip : track.clips) {
      json rec{{"video_id", track.video_id},
               {"start_s", clip.start_s},
               {"end_s", clip.end_s},
               {"text", clip.text}};
      if (clip.frame_index) rec["frame_index"] = *clip.frame_index;
      out << rec.dump() << '\n';
    }
  }
  out.flush();
  if (!out) throw Error("write failed: " + path.string());
}

CaptionTrack fetch_captions_remote(const std::string& endpoint, const std::string& video_id,
                                   const ClipWindow& window, const FetchOptions& options) {
  const json body{{"video_id", video_id}, {"start_s", window.start_s}, {"end_s", window.end_s}};

  std::string payload;
  int status = 0;
  std::string last_error;
  for (int attempt = 1; attempt <= options.max_attempts; ++attempt) {
    httplib::Client client(endpoint);
    client.set_connection_timeout(options.timeout_s, 0);
    client.set_read_timeout(options.timeout_s, 0);
    auto res = client.Post("/captions", body.dump(), "application/json");
    if (res && res->status == 200) {
      payload = res->body;
      status = 200;
      break;
    }
    if (res && res->status < 500) {
      throw TransportError("caption source " + endpoint + " answered status " +
                           std::to_string(res->status) + " for video \"" + video_id + "\"");
    }
    last_error = res ? "status " + std::to_string(res->status)
                     : "transport error: " + httplib::to_string(res.error());
    if (options.on_attempt) options.on_attempt(attempt, last_error);
    if (attempt < options.max_attempts) {
      const int delay = std::min<int>(options.max_delay_ms,
                                      options.base_delay_ms * (1 << (attempt - 1)));
      std::this_thread::sleep_for(std::chrono::milliseconds(delay));
    }
  }
  if (status != 200) {
    throw TransportError("caption fetch failed after " + std::to_string(options.max_attempts) +
                         " attempts (" + last_error + ") for video \"" + video_id + "\"");
  }

  json reply = json::parse(payload, nullptr, false);
  if (reply.is_discarded() || !reply.is_object() || !reply.contains("clips") ||
      !reply["clips"].is_array()) {
    throw SchemaError("caption source reply is not an object with a clips array");
  }

  CaptionTrack track;
  track.video_id = video_id;
  for (const auto& c : reply["clips"]) {
    if (!c.is_object() || !c.contains("start_s") || !c.contains("end_s") || !c.contains("text")) {
      throw SchemaError("caption source clip missing start_s/end_s/text");
    }
    ClipCaption clip;
    clip.video_id = video_id;
    clip.start_s = c["start_s"].get<double>();
    clip.end_s = c["end_s"].get<double>();
    clip.text = c["text"].get<std::string>();
    if (clip.end_s <= clip.start_s || detail::trim(clip.text).empty()) {
      throw SchemaError("caption source clip violates invariants (empty text or end_s <= start_s)");
    }
    if (c.contains("frame_index")) clip.frame_index = c["frame_index"].get<std::int64_t>();
    track.clips.push_back(std::move(clip));
  }
  if (track.clips.empty()) {
    throw SchemaError("caption source returned zero clips for video \"" + video_id + "\"");
  }

  try {
    sort_and_check_clips(track, std::filesystem::path(endpoint), nullptr);
  } catch (const CorpusError& e) {
    throw SchemaError(std::string("caption source reply violates track invariants: ") + e.what());
  }

  if (reply.contains("native_clip_length_s")) {
    track.native_clip_length_s = reply["native_clip_length_s"].get<double>();
  } else {
    track.native_clip_length_s = track.clips.front().end_s - track.clips.front().start_s;
  }

  if (options.cache_dir) {
    const auto file =
        *options.cache_dir / (detail::sanitize_filename(video_id) + ".captions.jsonl");
    write_caption_tracks(file, std::span<const CaptionTrack>(&track, 1));
  }
  return track;
}

}  // namespace capqa
