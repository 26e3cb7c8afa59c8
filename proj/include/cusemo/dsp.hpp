#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cusemo/audio.hpp"
#include "cusemo/corpus.hpp"

namespace cusemo {

// Analysis framing. Frame i covers samples [i*hop, i*hop + window).
struct FrameSpec {
  int window_ms = 100;
  int hop_ms = 50;

  void validate() const {
    if (hop_ms <= 0 || window_ms < hop_ms) {
      throw ValidationError("frame spec requires window_ms >= hop_ms > 0");
    }
  }
  std::size_t window_samples(int rate) const {
    return static_cast<std::size_t>(window_ms) * rate / 1000;
  }
  std::size_t hop_samples(int rate) const {
    return static_cast<std::size_t>(hop_ms) * rate / 1000;
  }
};

// Half-open sample range of detected silence.
struct SilenceSegment {
  std::size_t start_sample = 0;
  std::size_t end_sample = 0;  // exclusive
};

// One RMS value per hop-aligned frame.
std::vector<double> frame_rms(const AudioClip& clip, const FrameSpec& spec);

// Maximal runs of frames whose RMS is below 10^(threshold_dbfs/20), as
// sorted, non-overlapping sample ranges. A silent run reaching the last
// frame extends to the end of the clip.
std::vector<SilenceSegment> detect_silence(const AudioClip& clip, double threshold_dbfs,
                                           const FrameSpec& spec);

// Replaces every segment strictly longer than threshold_s with
// replacement_s of zeros; everything else is copied through untouched.
AudioClip compress_silence(const AudioClip& clip, const std::vector<SilenceSegment>& segments,
                           double threshold_s = 3.0, double replacement_s = 1.0);

// Per-frame F0 in Hz via normalized autocorrelation over the 60-400 Hz lag
// range with parabolic peak refinement; a frame is voiced iff the peak
// autocorrelation is at least the voicing threshold (0.45). Picks the
// smallest lag whose local max is within 90% of the global one, which kills
// subharmonic (octave-down) errors on strongly periodic frames.
std::vector<std::optional<double>> estimate_f0(const AudioClip& clip,
                                               const FrameSpec& spec = {40, 10});

struct F0Ranking {
  std::vector<std::pair<std::string, double>> ranked;  // (id, f0 std), descending
  std::vector<std::pair<std::string, std::string>> excluded;  // (id, reason)
};

// Ranks conversations by the population standard deviation of their voiced
// F0 estimates, highest first; ties break by id ascending. Conversations
// with fewer than 2 voiced frames are excluded and reported.
F0Ranking rank_by_f0_std(const std::vector<Conversation>& conversations,
                         const FrameSpec& spec = {40, 10});

}  // namespace cusemo
