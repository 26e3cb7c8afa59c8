#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cusemo/autograd.hpp"
#include "cusemo/rng.hpp"

namespace cusemo {

struct ModelConfig {
  std::vector<std::size_t> conv_channels{50, 125, 125};
  std::vector<std::size_t> conv_kernels{8, 6, 6};
  std::vector<std::size_t> pool_kernels{10, 5, 5};
  std::size_t lstm_hidden = 256;
  std::size_t lstm_layers = 2;
  double dropout = 0.5;
  std::vector<std::size_t> mlp_hidden{512, 256};
  // Valence and arousal heads are always present.
  bool head_empathy = true;
  bool head_gender = true;

  void validate() const;
  std::size_t head_count() const {
    return 2 + (head_empathy ? 1 : 0) + (head_gender ? 1 : 0);
  }
};

struct ModelOutput {
  std::vector<double> valence;  // one value per label frame, in [-1, 1]
  std::vector<double> arousal;
  std::optional<double> empathy;       // [0, 1]
  std::optional<double> gender_logit;  // pre-sigmoid
};

/// Differentiable forward results used by the loss.
struct ModelOutputVars {
  ad::Var valence;  // [n_labels]
  ad::Var arousal;  // [n_labels]
  ad::Var empathy;       // scalar, null when the head is disabled
  ad::Var gender_logit;  // scalar, null when the head is disabled
};

/// Balanced contiguous partition of n_frames into n_labels bins; bin sizes
/// are floor or ceil of the ratio, bin i = [floor(i*F/L), floor((i+1)*F/L)).
std::vector<std::pair<std::size_t, std::size_t>> frame_to_label_bins(std::size_t n_frames,
                                                                     std::size_t n_labels);

/// Raw waveform regressor: per-segment z-scored audio through a conv/pool
/// stack, stacked LSTMs with dropout, a per-frame MLP, and one output channel
/// per task. Valence/arousal are averaged onto the label grid then squashed
/// by tanh; empathy/gender reduce their channels by time-mean.
class EmotionModel {
 public:
  EmotionModel(ModelConfig config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  const std::vector<ad::Var>& parameters() const { return params_; }

  /// Frame count the conv/pool stack produces for a waveform of n_samples;
  /// throws if any stage would see an input shorter than its kernel.
  std::size_t conv_stack_frames(std::size_t n_samples) const;

  ModelOutputVars forward(const std::vector<double>& audio, std::size_t n_labels,
                          bool training, SplitMix64& rng) const;
  ModelOutput forward_eval(const std::vector<double>& audio, std::size_t n_labels) const;

 private:
  ModelConfig config_;
  std::vector<ad::Var> params_;

  const ad::Var& param(std::size_t i) const { return params_[i]; }
};

std::size_t parameter_count(const ModelConfig& config);
std::vector<std::pair<std::string, std::size_t>> parameter_breakdown(const ModelConfig& config);

/// Versioned parameter snapshot: a text header listing names and shapes,
/// then raw little-endian doubles in parameter order.
void save_checkpoint(const std::string& path, const EmotionModel& model);
void load_checkpoint(const std::string& path, EmotionModel& model);

}  // namespace cusemo
