#include "cusemo/model.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "cusemo/common.hpp"
#include "cusemo/textio.hpp"

namespace cusemo {
namespace {

ad::Tensor uniform_tensor(std::vector<std::size_t> shape, double bound, SplitMix64& rng) {
  ad::Tensor t = ad::Tensor::zeros(std::move(shape));
  for (double& v : t.data) v = rng.uniform(-bound, bound);
  return t;
}

struct LayerSizes {
  // (name, shape) in creation order; keeps init, counting and checkpoints
  // agreeing on one layout.
  std::vector<std::pair<std::string, std::vector<std::size_t>>> entries;

  void add(std::string name, std::vector<std::size_t> shape) {
    entries.emplace_back(std::move(name), std::move(shape));
  }
};

LayerSizes layer_sizes(const ModelConfig& c) {
  LayerSizes s;
  std::size_t in_ch = 1;
  for (std::size_t i = 0; i < c.conv_channels.size(); ++i) {
    const std::string base = "conv" + std::to_string(i + 1);
    s.add(base + ".weight", {c.conv_channels[i], in_ch, c.conv_kernels[i]});
    s.add(base + ".bias", {c.conv_channels[i]});
    in_ch = c.conv_channels[i];
  }
  std::size_t d_in = in_ch;
  for (std::size_t i = 0; i < c.lstm_layers; ++i) {
    const std::string base = "lstm" + std::to_string(i + 1);
    s.add(base + ".w_ih", {4 * c.lstm_hidden, d_in});
    s.add(base + ".w_hh", {4 * c.lstm_hidden, c.lstm_hidden});
    s.add(base + ".bias", {4 * c.lstm_hidden});
    d_in = c.lstm_hidden;
  }
  for (std::size_t i = 0; i < c.mlp_hidden.size(); ++i) {
    const std::string base = "mlp" + std::to_string(i + 1);
    s.add(base + ".weight", {c.mlp_hidden[i], d_in});
    s.add(base + ".bias", {c.mlp_hidden[i]});
    d_in = c.mlp_hidden[i];
  }
  s.add("head.weight", {c.head_count(), d_in});
  s.add("head.bias", {c.head_count()});
  return s;
}

}  // namespace

void ModelConfig::validate() const {
  if (conv_channels.empty() || conv_channels.size() != conv_kernels.size() ||
      conv_channels.size() != pool_kernels.size()) {
    throw ValidationError("conv channel/kernel/pool lists must be nonempty and equal length");
  }
  for (std::size_t v : conv_channels) {
    if (v == 0) throw ValidationError("conv channels must be positive");
  }
  for (std::size_t v : conv_kernels) {
    if (v == 0) throw ValidationError("conv kernels must be positive");
  }
  for (std::size_t v : pool_kernels) {
    if (v == 0) throw ValidationError("pool kernels must be positive");
  }
  if (lstm_hidden == 0 || lstm_layers == 0) {
    throw ValidationError("lstm size and layer count must be positive");
  }
  if (dropout < 0.0 || dropout >= 1.0) throw ValidationError("dropout must be in [0, 1)");
  for (std::size_t v : mlp_hidden) {
    if (v == 0) throw ValidationError("mlp widths must be positive");
  }
}

std::vector<std::pair<std::size_t, std::size_t>> frame_to_label_bins(std::size_t n_frames,
                                                                     std::size_t n_labels) {
  if (n_labels < 1) throw ValidationError("label bin count must be >= 1");
  if (n_frames < n_labels) {
    throw ValidationError("fewer frames than label bins (" + std::to_string(n_frames) +
                          " < " + std::to_string(n_labels) + ")");
  }
  std::vector<std::pair<std::size_t, std::size_t>> bins(n_labels);
  for (std::size_t i = 0; i < n_labels; ++i) {
    bins[i] = {i * n_frames / n_labels, (i + 1) * n_frames / n_labels};
  }
  return bins;
}

EmotionModel::EmotionModel(ModelConfig config, std::uint64_t seed)
    : config_(std::move(config)) {
  config_.validate();
  SplitMix64 rng(seed);
  const LayerSizes sizes = layer_sizes(config_);
  params_.reserve(sizes.entries.size());
  for (std::size_t i = 0; i < sizes.entries.size(); ++i) {
    const auto& [name, shape] = sizes.entries[i];
    double bound;
    if (name.rfind("lstm", 0) == 0) {
      bound = std::sqrt(1.0 / static_cast<double>(config_.lstm_hidden));
    } else if (name.ends_with(".bias")) {
      const auto& wshape = sizes.entries[i - 1].second;  // weight precedes bias
      std::size_t fan_in = 1;
      for (std::size_t d = 1; d < wshape.size(); ++d) fan_in *= wshape[d];
      bound = std::sqrt(1.0 / static_cast<double>(fan_in));
    } else {
      std::size_t fan_in = 1;
      for (std::size_t d = 1; d < shape.size(); ++d) fan_in *= shape[d];
      bound = std::sqrt(1.0 / static_cast<double>(fan_in));
    }
    ad::Tensor t = uniform_tensor(shape, bound, rng);
    if (name.rfind("lstm", 0) == 0 && name.ends_with(".bias")) {
      // Forget gate bias starts at 1 so early cell states persist.
      for (std::size_t j = config_.lstm_hidden; j < 2 * config_.lstm_hidden; ++j) {
        t.data[j] = 1.0;
      }
    }
    params_.push_back(ad::make_leaf(std::move(t), true, name));
  }
}

std::size_t EmotionModel::conv_stack_frames(std::size_t n_samples) const {
  std::size_t len = n_samples;
  for (std::size_t i = 0; i < config_.conv_kernels.size(); ++i) {
    if (len < config_.conv_kernels[i]) {
      throw ValidationError("segment too short: conv stage " + std::to_string(i + 1) +
                            " needs >= " + std::to_string(config_.conv_kernels[i]) +
                            " samples, got " + std::to_string(len));
    }
    len = len - config_.conv_kernels[i] + 1;
    if (len < config_.pool_kernels[i]) {
      throw ValidationError("segment too short: pool stage " + std::to_string(i + 1) +
                            " needs >= " + std::to_string(config_.pool_kernels[i]) +
                            " frames, got " + std::to_string(len));
    }
    len = (len - config_.pool_kernels[i]) / config_.pool_kernels[i] + 1;
  }
  return len;
}

ModelOutputVars EmotionModel::forward(const std::vector<double>& audio,
                                      std::size_t n_labels, bool training,
                                      SplitMix64& rng) const {
  if (audio.empty()) throw ValidationError("empty audio segment");
  const std::size_t n_frames = conv_stack_frames(audio.size());
  const auto bins = frame_to_label_bins(n_frames, n_labels);

  // Per-segment z-score; the epsilon keeps silent (all-equal) segments finite.
  std::vector<double> x = audio;
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(x.size());
  const double inv_std = 1.0 / std::sqrt(var + 1e-8);
  for (double& v : x) v = (v - mean) * inv_std;

  const std::size_t n_samples = x.size();
  ad::Var h = ad::make_leaf(ad::Tensor({1, n_samples}, std::move(x)), false);
  std::size_t p = 0;
  for (std::size_t i = 0; i < config_.conv_channels.size(); ++i) {
    h = ad::conv1d(h, param(p), param(p + 1));
    p += 2;
    h = ad::relu(h);
    h = ad::maxpool1d(h, config_.pool_kernels[i]);
  }
  h = ad::transpose2d(h);  // [T, C]

  const ad::Tensor zero_state = ad::Tensor::zeros({config_.lstm_hidden});
  for (std::size_t i = 0; i < config_.lstm_layers; ++i) {
    h = ad::lstm_layer(h, param(p), param(p + 1), param(p + 2), zero_state, zero_state);
    p += 3;
    h = ad::dropout(h, config_.dropout, training, rng);
  }
  for (std::size_t i = 0; i < config_.mlp_hidden.size(); ++i) {
    h = ad::linear(h, param(p), param(p + 1));
    p += 2;
    h = ad::relu(h);
  }
  h = ad::linear(h, param(p), param(p + 1));  // [T, heads]

  ModelOutputVars out;
  out.valence = ad::tanh_op(ad::bin_average(ad::column(h, 0), bins));
  out.arousal = ad::tanh_op(ad::bin_average(ad::column(h, 1), bins));
  std::size_t ch = 2;
  if (config_.head_empathy) {
    out.empathy = ad::sigmoid_op(ad::mean_all(ad::column(h, ch++)));
  }
  if (config_.head_gender) {
    out.gender_logit = ad::mean_all(ad::column(h, ch++));
  }

  for (const ad::Var& v : {out.valence, out.arousal, out.empathy, out.gender_logit}) {
    if (!v) continue;
    for (double d : v->value.data) {
      if (!std::isfinite(d)) throw RuntimeFailure("non-finite activation in forward pass");
    }
  }
  return out;
}

ModelOutput EmotionModel::forward_eval(const std::vector<double>& audio,
                                       std::size_t n_labels) const {
  SplitMix64 unused(0);
  const ModelOutputVars vars = forward(audio, n_labels, false, unused);
  ModelOutput out;
  out.valence.assign(vars.valence->value.data.begin(), vars.valence->value.data.end());
  out.arousal.assign(vars.arousal->value.data.begin(), vars.arousal->value.data.end());
  if (vars.empathy) out.empathy = vars.empathy->value.data[0];
  if (vars.gender_logit) out.gender_logit = vars.gender_logit->value.data[0];
  return out;
}

std::size_t parameter_count(const ModelConfig& config) {
  std::size_t total = 0;
  for (const auto& [name, count] : parameter_breakdown(config)) total += count;
  return total;
}

std::vector<std::pair<std::string, std::size_t>> parameter_breakdown(
    const ModelConfig& config) {
  config.validate();
  std::vector<std::pair<std::string, std::size_t>> out;
  for (const auto& [name, shape] : layer_sizes(config).entries) {
    out.emplace_back(name, ad::Tensor::numel_of(shape));
  }
  return out;
}

void save_checkpoint(const std::string& path, const EmotionModel& model) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw RuntimeFailure("cannot open checkpoint for writing: " + path);
  f << "cusemo-checkpoint v1\n";
  f << model.parameters().size() << "\n";
  for (const auto& p : model.parameters()) {
    f << p->name;
    for (std::size_t d : p->value.shape) f << " " << d;
    f << "\n";
  }
  f << "DATA\n";
  for (const auto& p : model.parameters()) {
    f.write(reinterpret_cast<const char*>(p->value.data.data()),
            static_cast<std::streamsize>(p->value.data.size() * sizeof(double)));
  }
  if (!f) throw RuntimeFailure("failed writing checkpoint: " + path);
}

void load_checkpoint(const std::string& path, EmotionModel& model) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw RuntimeFailure("cannot open checkpoint: " + path);
  std::string line;
  if (!std::getline(f, line) || line != "cusemo-checkpoint v1") {
    throw FormatError("unrecognized checkpoint header in " + path);
  }
  if (!std::getline(f, line)) throw FormatError("truncated checkpoint: " + path);
  const long n = parse_int(line, "checkpoint parameter count");
  if (n != static_cast<long>(model.parameters().size())) {
    throw FormatError("checkpoint has " + std::to_string(n) + " parameters, model has " +
                      std::to_string(model.parameters().size()));
  }
  for (const auto& p : model.parameters()) {
    if (!std::getline(f, line)) throw FormatError("truncated checkpoint: " + path);
    std::istringstream ss(line);
    std::string name;
    ss >> name;
    if (name != p->name) {
      throw FormatError("checkpoint parameter '" + name + "' does not match model '" +
                        p->name + "'");
    }
    std::vector<std::size_t> shape;
    std::size_t d;
    while (ss >> d) shape.push_back(d);
    if (shape != p->value.shape) {
      throw FormatError("checkpoint shape mismatch for parameter '" + name + "'");
    }
  }
  if (!std::getline(f, line) || line != "DATA") {
    throw FormatError("checkpoint data marker missing in " + path);
  }
  for (const auto& p : model.parameters()) {
    f.read(reinterpret_cast<char*>(p->value.data.data()),
           static_cast<std::streamsize>(p->value.data.size() * sizeof(double)));
    if (f.gcount() != static_cast<std::streamsize>(p->value.data.size() * sizeof(double))) {
      throw FormatError("checkpoint data truncated in " + path);
    }
  }
}

}  // namespace cusemo
