// SPDX-License-Identifier: Apache-2.0
#include "capqa/sampler.hpp"

#include <cmath>

#include "capqa/errors.hpp"
#include "internal/util.hpp"

namespace capqa {

namespace {

// Number of native clips per merged window; target must be an integer
// multiple of the native clip length.
std::size_t merge_group_size(double target_s, double native_s) {
  const double ratio = target_s / native_s;
  const double rounded = std::round(ratio);
  if (rounded < 1.0 || std::abs(ratio - rounded) > 1e-6) {
    throw ValidationError("target clip length " + std::to_string(target_s) +
                          "s is not an integer multiple of the native clip length " +
                          std::to_string(native_s) + "s");
  }
  return static_cast<std::size_t>(rounded);
}

}  // namespace

CaptionTrack merge_to_length(const CaptionTrack& track, double target_clip_length_s) {
  if (target_clip_length_s <= 0.0) return track;
  const std::size_t group = merge_group_size(target_clip_length_s, track.native_clip_length_s);
  if (group == 1) return track;

  CaptionTrack merged;
  merged.video_id = track.video_id;
  merged.native_clip_length_s = target_clip_length_s;
  merged.frame_stride = track.frame_stride;
  merged.seconds_per_frame_index = track.seconds_per_frame_index;
  merged.clips.reserve((track.clips.size() + group - 1) / group);

  for (std::size_t begin = 0; begin < track.clips.size(); begin += group) {
    const std::size_t end = std::min(begin + group, track.clips.size());
    ClipCaption clip;
    clip.video_id = track.video_id;
    clip.start_s = track.clips[begin].start_s;
    clip.end_s = track.clips[end - 1].end_s;
    clip.frame_index = track.clips[begin].frame_index;
    for (std::size_t i = begin; i < end; ++i) {
      if (!clip.text.empty()) clip.text.push_back(' ');
      clip.text += track.clips[i].text;
    }
    merged.clips.push_back(std::move(clip));
  }
  return merged;
}

CaptionTrack subsample(const CaptionTrack& track, int stride) {
  if (stride < 1) throw ValidationError("sampling stride must be >= 1");
  if (stride == 1) return track;

  CaptionTrack sampled;
  sampled.video_id = track.video_id;
  sampled.native_clip_length_s = track.native_clip_length_s;
  sampled.frame_stride = track.frame_stride;
  sampled.seconds_per_frame_index = track.seconds_per_frame_index;
  for (std::size_t i = 0; i < track.clips.size(); i += static_cast<std::size_t>(stride)) {
    sampled.clips.push_back(track.clips[i]);
  }
  return sampled;
}

CaptionBlock render_block(const CaptionTrack& track, const SamplerConfig& config) {
  if (track.clips.empty()) {
    throw ValidationError("cannot render a caption block from an empty track (video \"" +
                          track.video_id + "\")");
  }

  const CaptionTrack merged = merge_to_length(track, config.target_clip_length_s);
  const std::size_t group =
      config.target_clip_length_s > 0.0
          ? merge_group_size(config.target_clip_length_s, track.native_clip_length_s)
          : 1;
  const int stride = config.sampling_stride;
  if (stride < 1) throw ValidationError("sampling stride must be >= 1");

  CaptionBlock block;
  block.frame_indexed = config.numbering == Numbering::kFrameIndex;

  std::size_t position = 0;
  for (std::size_t i = 0; i < merged.clips.size(); i += static_cast<std::size_t>(stride)) {
    const ClipCaption& clip = merged.clips[i];
    std::string segment;
    if (block.frame_indexed) {
      std::int64_t index = 0;
      if (clip.frame_index) {
        index = *clip.frame_index;
      } else if (config.index_stride >= 1) {
        index = static_cast<std::int64_t>(position) * config.index_stride;
      } else {
        throw ValidationError("frame-index numbering requested but no index is derivable "
                              "(no stored frame indices and no index_stride)");
      }
      segment = std::to_string(index) + ": ";
    }
    segment += detail::trim(clip.text);
    if (!detail::ends_with_terminal_punctuation(segment)) segment.push_back('.');

    if (!block.text.empty()) block.text.push_back(' ');
    block.text += segment;
    block.source_indices.push_back(i * group);  // first constituent in the input track
    ++position;
  }
  block.selected_count = static_cast<int>(position);
  return block;
}

}  // namespace capqa
