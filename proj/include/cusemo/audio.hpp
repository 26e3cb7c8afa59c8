#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cusemo/common.hpp"

namespace cusemo {

// Mono audio, samples in [-1, 1]. Corpus audio is 8 kHz telephone speech.
struct AudioClip {
  std::vector<double> samples;
  int sample_rate_hz = 8000;

  double duration_s() const {
    return static_cast<double>(samples.size()) / sample_rate_hz;
  }
  double duration_ms() const { return duration_s() * 1000.0; }

  // Throws ValidationError if any invariant is broken.
  void validate() const;
};

// Reads a RIFF/WAVE file. Only PCM 16-bit mono is accepted; integer samples
// are mapped to [-1, 1] by division by 32768.
AudioClip read_wav(const std::string& path);

// Writes PCM 16-bit mono. Round-tripping through read_wav reproduces each
// sample within 1/32768.
void write_wav(const AudioClip& clip, const std::string& path);

}  // namespace cusemo
