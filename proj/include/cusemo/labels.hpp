#pragma once

#include <optional>
#include <vector>

#include "cusemo/audio.hpp"
#include "cusemo/corpus.hpp"

namespace cusemo {

/// Regression/classification targets on the model's output scale.
struct NormalizedTargets {
  std::vector<double> valence;  // [-1, 1] per label frame
  std::vector<double> arousal;  // [-1, 1] per label frame
  std::vector<bool> frame_mask;  // false on padded frames; padded values are 0
  double empathy = 0.0;          // [0, 1]
  std::optional<double> gender_label;  // 1 = female, 0 = male, absent = unknown

  void validate() const;
};

struct SegmentBatchSpec {
  int segment_s = 150;
  int batch_size = 5;

  void validate() const;
};

/// One training example: fixed-length audio plus aligned label frames.
struct Segment {
  std::vector<double> audio;  // segment_s * sample_rate samples, zero padded
  NormalizedTargets targets;  // segment_s * 1000 / label_period_ms frames
};

/// Natural cubic spline resampling of both dimensions onto a new uniform
/// grid 0, target, 2*target, ... capped at the original final timestamp.
/// Spline overshoot is clamped back to the [-1000, 1000] annotation range.
AnnotationTrack resample_track(const AnnotationTrack& track, int target_period_ms);

/// Centered running median. Tap count = round(window_ms / period_ms), forced
/// odd by rounding up; edge windows shrink to the available samples and an
/// even sample count takes the mean of the central two order statistics.
AnnotationTrack median_filter_track(const AnnotationTrack& track, int window_ms);

/// Element-wise mean across annotators, per dimension.
AnnotationTrack fuse_gold_standard(const std::vector<AnnotationTrack>& tracks);

/// Scale annotation units to model units: dimensional ratings / 1000,
/// empathy / 10, gender female -> 1.0, male -> 0.0, unknown -> absent.
NormalizedTargets normalize_targets(const AnnotationTrack& track,
                                    const ContextMetadata& metadata);

/// Cut a conversation into consecutive non-overlapping fixed-length segments.
/// The final partial segment is zero-padded in audio and its missing label
/// frames are masked out. Conversation-level empathy/gender go to every
/// segment.
std::vector<Segment> segment_conversation(const NormalizedTargets& targets,
                                          const AudioClip& audio,
                                          const SegmentBatchSpec& spec,
                                          int label_period_ms);

}  // namespace cusemo
