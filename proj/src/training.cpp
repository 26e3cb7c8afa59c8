#include "cusemo/training.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <sstream>

#include <json.hpp>

#include "cusemo/common.hpp"
#include "cusemo/experiments.hpp"
#include "cusemo/optim.hpp"
#include "cusemo/textio.hpp"

namespace fs = std::filesystem;

namespace cusemo {
namespace {

constexpr double kGradClipNorm = 5.0;
constexpr std::uint64_t kDropoutSalt = 0x64726F70;  // distinct stream per purpose

std::uint64_t parse_u64(const std::string& s, const std::string& context) {
  std::uint64_t v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw FormatError("not an unsigned integer: '" + s + "' in " + context);
  }
  return v;
}

std::vector<std::size_t> parse_size_list(const std::string& s, const std::string& context) {
  std::vector<std::size_t> out;
  for (const std::string& part : split(s, ',')) {
    const long long v = parse_int(trim(part), context);
    if (v <= 0) throw FormatError("list entries must be positive in " + context);
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

std::string render_size_list(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(v[i]);
  }
  return out;
}

bool parse_bool(const std::string& s, const std::string& context) {
  if (s == "true") return true;
  if (s == "false") return false;
  throw FormatError("expected true or false in " + context + ", got '" + s + "'");
}

std::string csv_opt(const std::optional<double>& v) {
  return v ? format_double(*v) : std::string();
}

}  // namespace

CorpusSplit split_corpus(std::vector<Conversation> conversations, const SplitSpec& spec) {
  if (spec.n_train == 0 || spec.n_dev == 0 || spec.n_test == 0) {
    throw ValidationError("split sizes must all be positive");
  }
  if (spec.n_train + spec.n_dev + spec.n_test != conversations.size()) {
    throw ValidationError("split sizes sum to " +
                          std::to_string(spec.n_train + spec.n_dev + spec.n_test) +
                          " but the corpus has " + std::to_string(conversations.size()) +
                          " conversations");
  }
  SplitMix64 rng(spec.seed);
  rng.shuffle(conversations);
  CorpusSplit out;
  auto it = conversations.begin();
  out.train.assign(it, it + static_cast<std::ptrdiff_t>(spec.n_train));
  it += static_cast<std::ptrdiff_t>(spec.n_train);
  out.dev.assign(it, it + static_cast<std::ptrdiff_t>(spec.n_dev));
  it += static_cast<std::ptrdiff_t>(spec.n_dev);
  out.test.assign(it, it + static_cast<std::ptrdiff_t>(spec.n_test));
  return out;
}

std::vector<PreparedConversation> prepare_conversations(
    const std::vector<Conversation>& conversations, int label_period_ms,
    const SegmentBatchSpec& spec) {
  std::vector<PreparedConversation> out;
  out.reserve(conversations.size());
  for (const auto& conv : conversations) {
    if (conv.tracks.empty()) {
      throw ValidationError("conversation '" + conv.id + "' has no annotation tracks");
    }
    AnnotationTrack fused;
    if (conv.tracks.size() == 1) {
      fused = conv.tracks.front().second;
    } else {
      std::vector<AnnotationTrack> tracks;
      for (const auto& [_, t] : conv.tracks) tracks.push_back(t);
      fused = fuse_gold_standard(tracks);
    }
    if (fused.period_ms != label_period_ms) {
      fused = resample_track(fused, label_period_ms);
    }
    const NormalizedTargets targets = normalize_targets(fused, conv.metadata);

    // The resampled grid stops at the last original timestamp, so the labels
    // can cover slightly less than the recording; training only uses labeled
    // audio.
    AudioClip audio = conv.audio;
    const std::size_t span_samples = static_cast<std::size_t>(
        targets.valence.size() * static_cast<std::size_t>(label_period_ms) *
        static_cast<std::size_t>(audio.sample_rate_hz) / 1000);
    if (audio.samples.size() > span_samples) audio.samples.resize(span_samples);

    PreparedConversation pc;
    pc.id = conv.id;
    pc.segments = segment_conversation(targets, audio, spec, label_period_ms);
    out.push_back(std::move(pc));
  }
  return out;
}

std::vector<std::vector<std::size_t>> make_batches(std::size_t n_segments,
                                                   int batch_size, std::uint64_t seed,
                                                   std::uint64_t epoch) {
  if (n_segments == 0) throw ValidationError("no segments to batch");
  if (batch_size < 1) throw ValidationError("batch size must be >= 1");
  std::vector<std::size_t> order(n_segments);
  for (std::size_t i = 0; i < n_segments; ++i) order[i] = i;
  SplitMix64 rng(mix_seed(seed, epoch));
  rng.shuffle(order);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < n_segments; i += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(n_segments, i + static_cast<std::size_t>(batch_size));
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

void TrainRunConfig::validate() const {
  if (label_period_ms != 40 && label_period_ms != 100 && label_period_ms != 200 &&
      label_period_ms != 500) {
    throw ValidationError("label period must be one of 40, 100, 200, 500 ms");
  }
  if (segment_s <= 0) throw ValidationError("segment length must be positive");
  if (batch_size <= 0) throw ValidationError("batch size must be positive");
  weights.validate();
  if (epochs < 1) throw ValidationError("epochs must be >= 1 (no training performed)");
  if (lr <= 0.0) throw ValidationError("learning rate must be positive");
  model.validate();
}

TrainRunConfig parse_run_config(const std::string& text) {
  TrainRunConfig c;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    const std::string ctx = "config line " + std::to_string(line_no);
    if (eq == std::string::npos) throw FormatError("missing '=' in " + ctx);
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (key.empty() || val.empty()) throw FormatError("empty key or value in " + ctx);

    if (key == "label_period_ms") {
      c.label_period_ms = static_cast<int>(parse_int(val, ctx));
    } else if (key == "segment_s") {
      c.segment_s = static_cast<int>(parse_int(val, ctx));
    } else if (key == "batch_size") {
      c.batch_size = static_cast<int>(parse_int(val, ctx));
    } else if (key == "alpha") {
      c.weights.alpha = parse_double(val, ctx);
    } else if (key == "beta") {
      c.weights.beta = parse_double(val, ctx);
    } else if (key == "epochs") {
      c.epochs = static_cast<int>(parse_int(val, ctx));
    } else if (key == "lr") {
      c.lr = parse_double(val, ctx);
    } else if (key == "seed") {
      c.seed = parse_u64(val, ctx);
    } else if (key == "model.conv_channels") {
      c.model.conv_channels = parse_size_list(val, ctx);
    } else if (key == "model.conv_kernels") {
      c.model.conv_kernels = parse_size_list(val, ctx);
    } else if (key == "model.pool_kernels") {
      c.model.pool_kernels = parse_size_list(val, ctx);
    } else if (key == "model.lstm_hidden") {
      c.model.lstm_hidden = static_cast<std::size_t>(parse_int(val, ctx));
    } else if (key == "model.lstm_layers") {
      c.model.lstm_layers = static_cast<std::size_t>(parse_int(val, ctx));
    } else if (key == "model.dropout") {
      c.model.dropout = parse_double(val, ctx);
    } else if (key == "model.mlp_hidden") {
      c.model.mlp_hidden = parse_size_list(val, ctx);
    } else if (key == "model.head_empathy") {
      c.model.head_empathy = parse_bool(val, ctx);
    } else if (key == "model.head_gender") {
      c.model.head_gender = parse_bool(val, ctx);
    } else {
      throw FormatError("unknown config key '" + key + "' in " + ctx);
    }
  }
  return c;
}

std::string serialize_run_config(const TrainRunConfig& c) {
  std::ostringstream out;
  out << "label_period_ms = " << c.label_period_ms << "\n";
  out << "segment_s = " << c.segment_s << "\n";
  out << "batch_size = " << c.batch_size << "\n";
  out << "alpha = " << format_double(c.weights.alpha) << "\n";
  out << "beta = " << format_double(c.weights.beta) << "\n";
  out << "epochs = " << c.epochs << "\n";
  out << "lr = " << format_double(c.lr) << "\n";
  out << "seed = " << c.seed << "\n";
  out << "model.conv_channels = " << render_size_list(c.model.conv_channels) << "\n";
  out << "model.conv_kernels = " << render_size_list(c.model.conv_kernels) << "\n";
  out << "model.pool_kernels = " << render_size_list(c.model.pool_kernels) << "\n";
  out << "model.lstm_hidden = " << c.model.lstm_hidden << "\n";
  out << "model.lstm_layers = " << c.model.lstm_layers << "\n";
  out << "model.dropout = " << format_double(c.model.dropout) << "\n";
  out << "model.mlp_hidden = " << render_size_list(c.model.mlp_hidden) << "\n";
  out << "model.head_empathy = " << (c.model.head_empathy ? "true" : "false") << "\n";
  out << "model.head_gender = " << (c.model.head_gender ? "true" : "false") << "\n";
  return out.str();
}

std::uint64_t config_hash(const TrainRunConfig& config) {
  const std::string s = serialize_run_config(config);
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  return h;
}

RunResult train(const CorpusSplit& split, const TrainRunConfig& config,
                const std::string& out_dir, TrainTrace* trace) {
  config.validate();
  if (split.train.empty() || split.dev.empty() || split.test.empty()) {
    throw ValidationError("train/dev/test splits must all be non-empty");
  }
  fs::create_directories(out_dir);

  SegmentBatchSpec seg_spec;
  seg_spec.segment_s = config.segment_s;
  seg_spec.batch_size = config.batch_size;
  const auto train_prep = prepare_conversations(split.train, config.label_period_ms, seg_spec);
  const auto dev_prep = prepare_conversations(split.dev, config.label_period_ms, seg_spec);
  const auto test_prep = prepare_conversations(split.test, config.label_period_ms, seg_spec);

  struct SegRef {
    const Segment* seg;
    const std::string* conv_id;
  };
  std::vector<SegRef> train_segs;
  for (const auto& pc : train_prep) {
    for (const auto& s : pc.segments) train_segs.push_back({&s, &pc.id});
  }

  EmotionModel model(config.model, config.seed);
  ad::AdamState adam = ad::AdamState::init(model.parameters(), config.lr);
  SplitMix64 dropout_rng(mix_seed(config.seed, kDropoutSalt));

  std::ostringstream log;
  log << "epoch,step,l_v,l_a,l_e,l_g,combined\n";
  const std::string ckpt_path = out_dir + "/best.ckpt";
  const std::string log_path = out_dir + "/train_log.csv";

  double best_score = -2.0;
  RunResult result;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    auto batches = make_batches(train_segs.size(), config.batch_size, config.seed,
                                static_cast<std::uint64_t>(epoch));
    // The empathy loss correlates scalars across a batch, so a trailing
    // singleton batch can never be scored; fold it into its predecessor.
    if (config.weights.alpha > 0.0 && batches.size() >= 2 && batches.back().size() == 1) {
      batches[batches.size() - 2].push_back(batches.back().front());
      batches.pop_back();
    }
    double epoch_loss = 0.0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      std::vector<ModelOutputVars> outputs;
      std::vector<NormalizedTargets> targets;
      CombinedLoss loss;
      try {
        for (std::size_t idx : batches[b]) {
          const Segment& s = *train_segs[idx].seg;
          outputs.push_back(
              model.forward(s.audio, s.targets.valence.size(), true, dropout_rng));
          targets.push_back(s.targets);
          if (trace) trace->gradient_source_ids.push_back(*train_segs[idx].conv_id);
        }
        loss = combined_loss(outputs, targets, config.weights);
        if (!std::isfinite(loss.parts.combined)) {
          throw RuntimeFailure("non-finite loss");
        }
        ad::zero_grad(model.parameters());
        ad::backward(loss.loss);
        ad::clip_grad_norm(model.parameters(), kGradClipNorm);
        ad::adam_step(model.parameters(), adam);
      } catch (const RuntimeFailure& e) {
        // Parameters have not been touched by the failing step; keep them.
        const std::string diverged = out_dir + "/diverged.ckpt";
        save_checkpoint(diverged, model);
        throw RuntimeFailure(std::string(e.what()) + " at epoch " + std::to_string(epoch) +
                             " step " + std::to_string(b + 1) +
                             "; last good parameters saved to " + diverged);
      }
      log << epoch << "," << b + 1 << "," << format_double(loss.parts.l_ccc_v) << ","
          << format_double(loss.parts.l_ccc_a) << "," << csv_opt(loss.parts.l_ccc_e)
          << "," << csv_opt(loss.parts.l_bce_g) << ","
          << format_double(loss.parts.combined) << "\n";
      epoch_loss += loss.parts.combined;
    }

    const EvalCcc dev = evaluate_global_ccc(model, dev_prep);
    if (trace) {
      trace->epoch_train_loss.push_back(epoch_loss / static_cast<double>(batches.size()));
      trace->epoch_dev_ccc_v.push_back(dev.ccc_v);
      trace->epoch_dev_ccc_a.push_back(dev.ccc_a);
    }
    const double score = (dev.ccc_v + dev.ccc_a) / 2.0;
    if (score > best_score) {
      best_score = score;
      result.best_epoch = epoch;
      result.dev_ccc_v = dev.ccc_v;
      result.dev_ccc_a = dev.ccc_a;
      save_checkpoint(ckpt_path, model);
    }
  }

  load_checkpoint(ckpt_path, model);
  const EvalCcc test = evaluate_global_ccc(model, test_prep);
  result.test_ccc_v = test.ccc_v;
  result.test_ccc_a = test.ccc_a;
  result.checkpoint_path = ckpt_path;
  result.log_path = log_path;

  write_text_file(log_path, log.str());
  write_run_result(out_dir + "/result.json", result);
  return result;
}

void write_run_result(const std::string& path, const RunResult& result) {
  nlohmann::ordered_json j;
  j["best_epoch"] = result.best_epoch;
  j["dev_ccc_v"] = result.dev_ccc_v;
  j["dev_ccc_a"] = result.dev_ccc_a;
  j["test_ccc_v"] = result.test_ccc_v;
  j["test_ccc_a"] = result.test_ccc_a;
  j["checkpoint"] = fs::path(result.checkpoint_path).filename().string();
  j["training_log"] = fs::path(result.log_path).filename().string();
  write_text_file(path, j.dump(2) + "\n");
}

RunResult read_run_result(const std::string& path, const std::string& run_dir) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("bad run result " + path + ": " + e.what());
  }
  RunResult r;
  try {
    r.best_epoch = j.at("best_epoch").get<int>();
    r.dev_ccc_v = j.at("dev_ccc_v").get<double>();
    r.dev_ccc_a = j.at("dev_ccc_a").get<double>();
    r.test_ccc_v = j.at("test_ccc_v").get<double>();
    r.test_ccc_a = j.at("test_ccc_a").get<double>();
    r.checkpoint_path = (fs::path(run_dir) / j.at("checkpoint").get<std::string>()).string();
    r.log_path = (fs::path(run_dir) / j.at("training_log").get<std::string>()).string();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("bad run result " + path + ": " + e.what());
  }
  return r;
}

}  // namespace cusemo
