#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cusemo/corpus.hpp"
#include "cusemo/labels.hpp"
#include "cusemo/model.hpp"
#include "cusemo/objectives.hpp"

namespace cusemo {

struct SplitSpec {
  std::size_t n_train = 130;
  std::size_t n_dev = 45;
  std::size_t n_test = 40;
  std::uint64_t seed = 1;
};

struct CorpusSplit {
  std::vector<Conversation> train, dev, test;
};

/// Deterministic shuffle (SplitMix64-driven Fisher-Yates) then contiguous
/// slicing into train/dev/test. Sizes must sum to the corpus size.
CorpusSplit split_corpus(std::vector<Conversation> conversations, const SplitSpec& spec);

struct PreparedConversation {
  std::string id;
  std::vector<Segment> segments;
};

/// Fuse annotator tracks (mean), resample to the requested label period,
/// normalize to model units, trim trailing unlabeled audio, segment.
std::vector<PreparedConversation> prepare_conversations(
    const std::vector<Conversation>& conversations, int label_period_ms,
    const SegmentBatchSpec& spec);

/// Epoch-wise deterministic batch order: indices shuffled by a generator
/// seeded from (seed, epoch), chunked to batch_size, short final batch kept.
/// A single run never mixes label periods, so neither do its batches.
std::vector<std::vector<std::size_t>> make_batches(std::size_t n_segments,
                                                   int batch_size, std::uint64_t seed,
                                                   std::uint64_t epoch);

struct TrainRunConfig {
  int label_period_ms = 500;  // one of 40, 100, 200, 500
  int segment_s = 150;
  int batch_size = 5;
  LossWeights weights;
  int epochs = 100;
  double lr = 1e-4;
  std::uint64_t seed = 42;
  ModelConfig model;

  void validate() const;
};

/// Line-based `key = value` config grammar; `#` starts a comment, lists are
/// comma-separated, model fields use a `model.` prefix. Unknown keys error.
TrainRunConfig parse_run_config(const std::string& text);

/// Canonical fixed-key-order rendering; parse(serialize(c)) == c, and the
/// cell cache hashes this string.
std::string serialize_run_config(const TrainRunConfig& config);

std::uint64_t config_hash(const TrainRunConfig& config);  // FNV-1a, 64-bit

struct RunResult {
  int best_epoch = 0;
  double dev_ccc_v = 0.0;
  double dev_ccc_a = 0.0;
  double test_ccc_v = 0.0;
  double test_ccc_a = 0.0;
  std::string checkpoint_path;
  std::string log_path;
};

/// Test instrumentation: which conversations produced gradients, and the
/// per-epoch loss/score trajectory.
struct TrainTrace {
  std::vector<std::string> gradient_source_ids;
  std::vector<double> epoch_train_loss;
  std::vector<double> epoch_dev_ccc_v;
  std::vector<double> epoch_dev_ccc_a;
};

/// Full training loop: Adam with constant lr, gradient-norm clip at 5.0,
/// per-epoch dev evaluation, best epoch by dev (ccc_v + ccc_a)/2 with final
/// restore, one test evaluation. Writes best.ckpt, train_log.csv and
/// result.json under out_dir. All randomness derives from config.seed.
RunResult train(const CorpusSplit& split, const TrainRunConfig& config,
                const std::string& out_dir, TrainTrace* trace = nullptr);

void write_run_result(const std::string& path, const RunResult& result);
RunResult read_run_result(const std::string& path, const std::string& run_dir);

}  // namespace cusemo
