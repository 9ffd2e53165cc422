// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "capqa/corpus.hpp"

namespace capqa {

enum class Numbering {
  kOff,
  kFrameIndex,  // prefix each caption with its frame index
};

/// Clip-length and clip-sampling policy applied before prompt rendering.
struct SamplerConfig {
  /// Target clip length in seconds; must be an integer multiple of the
  /// track's native clip length. 0 means "native" (no merging).
  double target_clip_length_s = 0.0;
  /// Keep one clip every `sampling_stride` native clips.
  int sampling_stride = 1;
  Numbering numbering = Numbering::kOff;
  /// Frame-index units between consecutive rendered captions, used when the
  /// corpus does not store explicit frame indices.
  int index_stride = 1;
};

/// The concatenated caption text fed to the model as video context.
struct CaptionBlock {
  std::string text;
  int selected_count = 0;
  std::vector<std::size_t> source_indices;  // strictly increasing input clip indices
  bool frame_indexed = false;
};

/// Merges consecutive native clips into windows of `target_clip_length_s`.
/// Output has ceil(n_clips * native / target) clips; each merged caption is
/// the space-joined text of its constituents and spans their time window.
CaptionTrack merge_to_length(const CaptionTrack& track, double target_clip_length_s);

/// Keeps clips at native indices {0, k, 2k, ...}; order preserved.
CaptionTrack subsample(const CaptionTrack& track, int stride);

/// Applies the full sampler config (merge, then subsample) and joins the
/// surviving captions into a block. Each caption is terminated with "." when
/// it does not already end in terminal punctuation; captions are joined with
/// a single space. With frame-index numbering, each caption is prefixed with
/// "<index>: " using the stored frame index when present, else
/// position * index_stride.
CaptionBlock render_block(const CaptionTrack& track, const SamplerConfig& config);

}  // namespace capqa
