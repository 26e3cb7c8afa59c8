#include "cusemo/labels.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>

#include "cusemo/common.hpp"

namespace cusemo {
namespace {

// Second derivatives of the natural cubic spline through (i*h, y_i).
// Tridiagonal system solved with the Thomas algorithm; ends pinned to 0.
std::vector<double> natural_spline_m(const std::vector<double>& y, double h) {
  const std::size_t n = y.size();
  std::vector<double> m(n, 0.0);
  if (n < 3) return m;  // two points: straight line
  const std::size_t k = n - 2;  // interior unknowns
  std::vector<double> diag(k, 2.0 * h / 3.0);
  std::vector<double> off(k, h / 6.0);
  std::vector<double> rhs(k);
  for (std::size_t i = 0; i < k; ++i) {
    rhs[i] = (y[i + 2] - y[i + 1]) / h - (y[i + 1] - y[i]) / h;
  }
  for (std::size_t i = 1; i < k; ++i) {
    const double w = off[i - 1] / diag[i - 1];
    diag[i] -= w * off[i - 1];
    rhs[i] -= w * rhs[i - 1];
  }
  m[k] = rhs[k - 1] / diag[k - 1];
  for (std::size_t i = k - 1; i-- > 0;) {
    m[i + 1] = (rhs[i] - off[i] * m[i + 2]) / diag[i];
  }
  return m;
}

double spline_eval(const std::vector<double>& y, const std::vector<double>& m,
                   double h, double t) {
  const std::size_t n = y.size();
  std::size_t i = static_cast<std::size_t>(t / h);
  if (i >= n - 1) i = n - 2;
  const double t0 = static_cast<double>(i) * h;
  const double a = (t0 + h - t) / h;  // weight toward the left knot
  const double b = (t - t0) / h;
  return a * y[i] + b * y[i + 1] +
         ((a * a * a - a) * m[i] + (b * b * b - b) * m[i + 1]) * h * h / 6.0;
}

std::vector<double> resample_dim(const std::vector<double>& y, double period_ms,
                                 const std::vector<double>& grid_ms) {
  const std::vector<double> m = natural_spline_m(y, period_ms);
  std::vector<double> out(grid_ms.size());
  for (std::size_t i = 0; i < grid_ms.size(); ++i) {
    out[i] = std::clamp(spline_eval(y, m, period_ms, grid_ms[i]), -1000.0, 1000.0);
  }
  return out;
}

double window_median(std::vector<double>& buf) {
  std::sort(buf.begin(), buf.end());
  const std::size_t n = buf.size();
  if (n % 2 == 1) return buf[n / 2];
  return 0.5 * (buf[n / 2 - 1] + buf[n / 2]);
}

}  // namespace

void NormalizedTargets::validate() const {
  if (valence.size() != arousal.size() || valence.size() != frame_mask.size()) {
    throw ValidationError("target sequences have mismatched lengths");
  }
  for (std::size_t i = 0; i < valence.size(); ++i) {
    if (std::abs(valence[i]) > 1.0 || std::abs(arousal[i]) > 1.0) {
      throw ValidationError("normalized target outside [-1, 1]");
    }
    if (!frame_mask[i] && (valence[i] != 0.0 || arousal[i] != 0.0)) {
      throw ValidationError("masked frame carries a nonzero value");
    }
  }
  if (empathy < 0.0 || empathy > 1.0) {
    throw ValidationError("empathy outside [0, 1]");
  }
  if (gender_label && *gender_label != 0.0 && *gender_label != 1.0) {
    throw ValidationError("gender label must be 0 or 1");
  }
}

void SegmentBatchSpec::validate() const {
  if (segment_s <= 0) throw ValidationError("segment length must be positive");
  if (batch_size <= 0) throw ValidationError("batch size must be positive");
}

AnnotationTrack resample_track(const AnnotationTrack& track, int target_period_ms) {
  track.validate();
  if (track.size() < 2) throw ValidationError("resampling needs at least 2 points");
  if (target_period_ms < 1) throw ValidationError("target period must be >= 1 ms");

  const double last_ms = static_cast<double>((track.size() - 1) * track.period_ms);
  std::vector<double> grid;
  for (double t = 0.0; t <= last_ms; t += target_period_ms) grid.push_back(t);

  AnnotationTrack out;
  out.period_ms = target_period_ms;
  out.valence = resample_dim(track.valence, track.period_ms, grid);
  out.arousal = resample_dim(track.arousal, track.period_ms, grid);
  return out;
}

AnnotationTrack median_filter_track(const AnnotationTrack& track, int window_ms) {
  track.validate();
  if (window_ms < track.period_ms) {
    throw ValidationError("filter window shorter than the label period");
  }
  std::size_t taps = static_cast<std::size_t>(
      std::llround(static_cast<double>(window_ms) / track.period_ms));
  if (taps % 2 == 0) ++taps;
  const std::size_t r = taps / 2;
  const std::size_t n = track.size();

  AnnotationTrack out = track;
  std::vector<double> buf;
  for (const bool valence_dim : {true, false}) {
    const std::vector<double>& src = valence_dim ? track.valence : track.arousal;
    std::vector<double>& dst = valence_dim ? out.valence : out.arousal;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t lo = i >= r ? i - r : 0;
      const std::size_t hi = std::min(i + r, n - 1);
      buf.assign(src.begin() + lo, src.begin() + hi + 1);
      dst[i] = window_median(buf);
    }
  }
  return out;
}

AnnotationTrack fuse_gold_standard(const std::vector<AnnotationTrack>& tracks) {
  if (tracks.size() < 2) throw ValidationError("gold standard needs >= 2 annotators");
  const AnnotationTrack& first = tracks.front();
  first.validate();
  for (const auto& t : tracks) {
    t.validate();
    if (t.period_ms != first.period_ms) {
      throw ValidationError("annotation tracks have mismatched periods");
    }
    if (t.size() != first.size()) {
      throw ValidationError("annotation tracks have mismatched lengths");
    }
  }
  AnnotationTrack out;
  out.period_ms = first.period_ms;
  out.valence.assign(first.size(), 0.0);
  out.arousal.assign(first.size(), 0.0);
  for (const auto& t : tracks) {
    for (std::size_t i = 0; i < t.size(); ++i) {
      out.valence[i] += t.valence[i];
      out.arousal[i] += t.arousal[i];
    }
  }
  const double k = static_cast<double>(tracks.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.valence[i] /= k;
    out.arousal[i] /= k;
  }
  return out;
}

NormalizedTargets normalize_targets(const AnnotationTrack& track,
                                    const ContextMetadata& metadata) {
  track.validate();
  metadata.validate();
  NormalizedTargets out;
  out.valence.resize(track.size());
  out.arousal.resize(track.size());
  out.frame_mask.assign(track.size(), true);
  for (std::size_t i = 0; i < track.size(); ++i) {
    out.valence[i] = track.valence[i] / 1000.0;
    out.arousal[i] = track.arousal[i] / 1000.0;
  }
  out.empathy = metadata.empathy / 10.0;
  switch (metadata.gender) {
    case Gender::female: out.gender_label = 1.0; break;
    case Gender::male: out.gender_label = 0.0; break;
    case Gender::unknown: break;
  }
  return out;
}

std::vector<Segment> segment_conversation(const NormalizedTargets& targets,
                                          const AudioClip& audio,
                                          const SegmentBatchSpec& spec,
                                          int label_period_ms) {
  targets.validate();
  audio.validate();
  spec.validate();
  if (label_period_ms < 1) throw ValidationError("label period must be >= 1 ms");
  if (targets.valence.empty()) throw ValidationError("conversation has no label frames");
  const double label_span_ms = static_cast<double>(targets.valence.size()) * label_period_ms;
  if (std::abs(label_span_ms - audio.duration_ms()) > label_period_ms) {
    throw ValidationError("audio and labels cover different durations");
  }
  const std::size_t seg_ms = static_cast<std::size_t>(spec.segment_s) * 1000;
  if (seg_ms % static_cast<std::size_t>(label_period_ms) != 0) {
    throw ValidationError("segment length is not a whole number of label frames");
  }
  const std::size_t fps = seg_ms / static_cast<std::size_t>(label_period_ms);
  const std::size_t seg_samples =
      static_cast<std::size_t>(spec.segment_s) * static_cast<std::size_t>(audio.sample_rate_hz);
  const std::size_t n_frames = targets.valence.size();
  const std::size_t n_segments = (n_frames + fps - 1) / fps;

  std::vector<Segment> segments(n_segments);
  for (std::size_t s = 0; s < n_segments; ++s) {
    Segment& seg = segments[s];
    seg.audio.assign(seg_samples, 0.0);
    const std::size_t a0 = s * seg_samples;
    const std::size_t a1 = std::min(a0 + seg_samples, audio.samples.size());
    if (a0 < a1) {
      std::copy(audio.samples.begin() + a0, audio.samples.begin() + a1, seg.audio.begin());
    }
    seg.targets.valence.assign(fps, 0.0);
    seg.targets.arousal.assign(fps, 0.0);
    seg.targets.frame_mask.assign(fps, false);
    const std::size_t f0 = s * fps;
    for (std::size_t f = f0; f < std::min(f0 + fps, n_frames); ++f) {
      seg.targets.valence[f - f0] = targets.valence[f];
      seg.targets.arousal[f - f0] = targets.arousal[f];
      seg.targets.frame_mask[f - f0] = targets.frame_mask[f];
    }
    seg.targets.empathy = targets.empathy;
    seg.targets.gender_label = targets.gender_label;
  }
  return segments;
}

}  // namespace cusemo
