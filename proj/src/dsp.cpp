#include "cusemo/dsp.hpp"

#include <algorithm>
#include <cmath>

namespace cusemo {

std::vector<double> frame_rms(const AudioClip& clip, const FrameSpec& spec) {
  spec.validate();
  const std::size_t window = spec.window_samples(clip.sample_rate_hz);
  const std::size_t hop = spec.hop_samples(clip.sample_rate_hz);
  if (window == 0 || hop == 0) throw ValidationError("frame spec too small for sample rate");
  if (clip.samples.size() < window) {
    throw ValidationError("clip shorter than one analysis window");
  }
  const std::size_t n_frames = (clip.samples.size() - window) / hop + 1;
  std::vector<double> rms(n_frames);
  for (std::size_t i = 0; i < n_frames; ++i) {
    const double* x = clip.samples.data() + i * hop;
    double acc = 0.0;
    for (std::size_t k = 0; k < window; ++k) acc += x[k] * x[k];
    rms[i] = std::sqrt(acc / static_cast<double>(window));
  }
  return rms;
}

std::vector<SilenceSegment> detect_silence(const AudioClip& clip, double threshold_dbfs,
                                           const FrameSpec& spec) {
  if (threshold_dbfs >= 0.0) throw ValidationError("silence threshold must be below 0 dBFS");
  const std::vector<double> rms = frame_rms(clip, spec);
  const double linear = std::pow(10.0, threshold_dbfs / 20.0);
  const std::size_t window = spec.window_samples(clip.sample_rate_hz);
  const std::size_t hop = spec.hop_samples(clip.sample_rate_hz);

  std::vector<SilenceSegment> segments;
  std::size_t run_start = 0;
  bool in_run = false;
  auto flush = [&](std::size_t run_end_frame) {
    SilenceSegment seg;
    seg.start_sample = run_start * hop;
    seg.end_sample = (run_end_frame - 1) * hop + window;
    if (run_end_frame == rms.size()) seg.end_sample = clip.samples.size();
    // window tails can reach past the next run's start when window > 2*hop
    if (!segments.empty()) {
      seg.start_sample = std::max(seg.start_sample, segments.back().end_sample);
    }
    if (seg.start_sample < seg.end_sample) segments.push_back(seg);
  };
  for (std::size_t i = 0; i < rms.size(); ++i) {
    if (rms[i] < linear) {
      if (!in_run) {
        run_start = i;
        in_run = true;
      }
    } else if (in_run) {
      flush(i);
      in_run = false;
    }
  }
  if (in_run) flush(rms.size());
  return segments;
}

AudioClip compress_silence(const AudioClip& clip, const std::vector<SilenceSegment>& segments,
                           double threshold_s, double replacement_s) {
  clip.validate();
  const std::size_t n = clip.samples.size();
  std::size_t prev_end = 0;
  for (const auto& seg : segments) {
    if (seg.start_sample >= seg.end_sample || seg.end_sample > n) {
      throw ValidationError("invalid silence segment bounds");
    }
    if (seg.start_sample < prev_end) {
      throw ValidationError("silence segments overlap or are unsorted");
    }
    prev_end = seg.end_sample;
  }

  const double rate = clip.sample_rate_hz;
  const std::size_t replacement = static_cast<std::size_t>(std::llround(replacement_s * rate));

  AudioClip out;
  out.sample_rate_hz = clip.sample_rate_hz;
  out.samples.reserve(n);
  std::size_t cursor = 0;
  for (const auto& seg : segments) {
    const double duration_s = static_cast<double>(seg.end_sample - seg.start_sample) / rate;
    if (duration_s <= threshold_s) continue;  // "surpassing" is strict
    out.samples.insert(out.samples.end(), clip.samples.begin() + cursor,
                       clip.samples.begin() + seg.start_sample);
    out.samples.insert(out.samples.end(), replacement, 0.0);
    cursor = seg.end_sample;
  }
  out.samples.insert(out.samples.end(), clip.samples.begin() + cursor, clip.samples.end());
  return out;
}

std::vector<std::optional<double>> estimate_f0(const AudioClip& clip, const FrameSpec& spec) {
  spec.validate();
  constexpr double kMinHz = 60.0, kMaxHz = 400.0, kVoicingThreshold = 0.45;
  const int rate = clip.sample_rate_hz;
  if (rate < 2 * static_cast<int>(kMaxHz)) {
    throw ValidationError("sample rate below twice the maximum search frequency");
  }
  const std::size_t window = spec.window_samples(rate);
  const std::size_t hop = spec.hop_samples(rate);
  if (clip.samples.size() < window) {
    throw ValidationError("clip shorter than one analysis window");
  }
  const std::size_t lag_min = static_cast<std::size_t>(rate / kMaxHz);
  const std::size_t lag_max =
      std::min(static_cast<std::size_t>(std::ceil(rate / kMinHz)), window - 1);
  const std::size_t n_frames = (clip.samples.size() - window) / hop + 1;

  std::vector<std::optional<double>> f0(n_frames);
  std::vector<double> corr(lag_max + 2, 0.0);
  for (std::size_t i = 0; i < n_frames; ++i) {
    const double* x = clip.samples.data() + i * hop;
    double energy = 0.0;
    for (std::size_t k = 0; k < window; ++k) energy += x[k] * x[k];
    if (energy < 1e-12) continue;  // silent frame

    std::size_t best_lag = 0;
    double best_val = 0.0;
    for (std::size_t lag = lag_min - 1; lag <= lag_max + 1 && lag < window; ++lag) {
      double num = 0.0, e0 = 0.0, e1 = 0.0;
      const std::size_t m = window - lag;
      for (std::size_t k = 0; k < m; ++k) {
        num += x[k] * x[k + lag];
        e0 += x[k] * x[k];
        e1 += x[k + lag] * x[k + lag];
      }
      const double denom = std::sqrt(e0 * e1);
      corr[lag] = denom > 0.0 ? num / denom : 0.0;
      if (lag >= lag_min && lag <= lag_max && corr[lag] > best_val) {
        best_val = corr[lag];
        best_lag = lag;
      }
    }
    if (best_lag == 0 || best_val < kVoicingThreshold) continue;

    // A periodic frame peaks at every multiple of its period and windowing
    // noise can push a subharmonic peak above the true one, so prefer the
    // smallest local max that comes close to the global one.
    for (std::size_t lag = lag_min; lag < best_lag && lag + 1 < window; ++lag) {
      if (corr[lag] >= corr[lag - 1] && corr[lag] >= corr[lag + 1] &&
          corr[lag] >= 0.9 * best_val) {
        best_lag = lag;
        break;
      }
    }

    double refined = static_cast<double>(best_lag);
    if (best_lag > lag_min - 1 && best_lag + 1 <= std::min(lag_max + 1, window - 1)) {
      const double l = corr[best_lag - 1], c = corr[best_lag], r = corr[best_lag + 1];
      const double denom = l - 2.0 * c + r;
      if (std::abs(denom) > 1e-12) {
        const double delta = 0.5 * (l - r) / denom;
        if (std::abs(delta) <= 1.0) refined += delta;
      }
    }
    f0[i] = static_cast<double>(rate) / refined;
  }
  return f0;
}

F0Ranking rank_by_f0_std(const std::vector<Conversation>& conversations,
                         const FrameSpec& spec) {
  F0Ranking result;
  for (const auto& c : conversations) {
    std::vector<double> voiced;
    for (const auto& v : estimate_f0(c.audio, spec)) {
      if (v) voiced.push_back(*v);
    }
    if (voiced.size() < 2) {
      result.excluded.emplace_back(c.id, "fewer than 2 voiced frames");
      continue;
    }
    double mean = 0.0;
    for (double v : voiced) mean += v;
    mean /= static_cast<double>(voiced.size());
    double var = 0.0;
    for (double v : voiced) var += (v - mean) * (v - mean);
    var /= static_cast<double>(voiced.size());  // population variance
    result.ranked.emplace_back(c.id, std::sqrt(var));
  }
  std::sort(result.ranked.begin(), result.ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  return result;
}

}  // namespace cusemo
