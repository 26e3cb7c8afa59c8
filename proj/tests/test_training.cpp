#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "cusemo/common.hpp"
#include "cusemo/experiments.hpp"
#include "cusemo/textio.hpp"
#include "cusemo/training.hpp"
#include "test_util.hpp"

using namespace cusemo;

namespace {

std::vector<Conversation> id_only_corpus(std::size_t n) {
  std::vector<Conversation> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i].id = "c" + std::to_string(i);
  return out;
}

std::set<std::string> ids_of(const std::vector<Conversation>& v) {
  std::set<std::string> out;
  for (const auto& c : v) out.insert(c.id);
  return out;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ModelConfig micro_model() {
  ModelConfig m;
  m.conv_channels = {2, 3, 3};
  m.conv_kernels = {8, 6, 6};
  m.pool_kernels = {10, 5, 5};
  m.lstm_hidden = 4;
  m.lstm_layers = 2;
  m.mlp_hidden = {8, 4};
  return m;
}

TrainRunConfig micro_run_config() {
  TrainRunConfig c;
  c.label_period_ms = 500;
  c.segment_s = 10;
  c.batch_size = 2;
  c.epochs = 5;
  c.lr = 1e-3;
  c.seed = 11;
  c.model = micro_model();
  return c;
}

}  // namespace

TEST_CASE("corpus split is a deterministic partition of the requested sizes") {
  const auto corpus = id_only_corpus(215);
  const SplitSpec spec{130, 45, 40, 7};
  const CorpusSplit a = split_corpus(corpus, spec);
  CHECK(a.train.size() == 130);
  CHECK(a.dev.size() == 45);
  CHECK(a.test.size() == 40);

  // the three parts are disjoint and jointly cover the corpus
  std::set<std::string> seen = ids_of(a.train);
  for (const auto& s : {ids_of(a.dev), ids_of(a.test)}) {
    for (const auto& id : s) REQUIRE(seen.insert(id).second);
  }
  CHECK(seen == ids_of(corpus));

  const CorpusSplit b = split_corpus(corpus, spec);
  CHECK(ids_of(b.train) == ids_of(a.train));
  CHECK(b.train.front().id == a.train.front().id);

  SplitSpec other = spec;
  other.seed = 8;
  CHECK(ids_of(split_corpus(corpus, other).train) != ids_of(a.train));

  CHECK_THROWS_AS(split_corpus(id_only_corpus(100), spec), ValidationError);
  CHECK_THROWS_AS(split_corpus(id_only_corpus(10), SplitSpec{10, 0, 0, 1}), ValidationError);
}

TEST_CASE("batch maker emits every index once per epoch in a seeded order") {
  const auto batches = make_batches(13, 5, 42, 1);
  REQUIRE(batches.size() == 3);
  CHECK(batches[0].size() == 5);
  CHECK(batches[1].size() == 5);
  CHECK(batches[2].size() == 3);  // short tail batch kept
  std::set<std::size_t> seen;
  for (const auto& b : batches) {
    for (std::size_t idx : b) {
      REQUIRE(idx < 13);
      REQUIRE(seen.insert(idx).second);
    }
  }
  CHECK(seen.size() == 13);

  CHECK(make_batches(13, 5, 42, 1) == batches);       // same (seed, epoch)
  CHECK(make_batches(13, 5, 42, 2) != batches);       // epoch advances the order
  CHECK(make_batches(13, 5, 43, 1) != batches);       // so does the seed
  CHECK(make_batches(4, 100, 1, 1).size() == 1);      // oversized batch: one chunk
  CHECK_THROWS_AS(make_batches(0, 5, 1, 1), ValidationError);
  CHECK_THROWS_AS(make_batches(13, 0, 1, 1), ValidationError);
}

TEST_CASE("run config validation rejects out-of-grid values") {
  TrainRunConfig c = micro_run_config();
  CHECK_NOTHROW(c.validate());
  c.label_period_ms = 250;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = micro_run_config();
  c.epochs = 0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = micro_run_config();
  c.lr = 0.0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = micro_run_config();
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = micro_run_config();
  c.weights.alpha = -1.0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
}

TEST_CASE("run config survives a serialize/parse round trip") {
  TrainRunConfig c;
  c.label_period_ms = 100;
  c.segment_s = 75;
  c.batch_size = 20;
  c.weights.alpha = 0.25;
  c.weights.beta = 0.5;
  c.epochs = 7;
  c.lr = 3e-4;
  c.seed = 99;
  c.model = micro_model();
  c.model.dropout = 0.3;
  c.model.head_gender = false;

  const std::string text = serialize_run_config(c);
  const TrainRunConfig back = parse_run_config(text);
  CHECK(serialize_run_config(back) == text);
  CHECK(back.label_period_ms == 100);
  CHECK(back.weights.beta == 0.5);
  CHECK(back.model.conv_channels == std::vector<std::size_t>{2, 3, 3});
  CHECK_FALSE(back.model.head_gender);
  CHECK(back.model.head_empathy);

  CHECK(config_hash(back) == config_hash(c));
  TrainRunConfig other = c;
  other.seed = 100;
  CHECK(config_hash(other) != config_hash(c));

  // comments and blank lines are cosmetic
  const TrainRunConfig sparse = parse_run_config(
      "# training setup\n\n  lr = 0.01   # step size\nseed = 4\n");
  CHECK(sparse.lr == 0.01);
  CHECK(sparse.seed == 4);
  CHECK(sparse.batch_size == TrainRunConfig{}.batch_size);  // defaults kept

  CHECK_THROWS_AS(parse_run_config("optimizer = adam\n"), FormatError);
  CHECK_THROWS_AS(parse_run_config("lr 0.01\n"), FormatError);
  CHECK_THROWS_AS(parse_run_config("lr =\n"), FormatError);
  CHECK_THROWS_AS(parse_run_config("epochs = soon\n"), FormatError);
  CHECK_THROWS_AS(parse_run_config("model.head_empathy = yes\n"), FormatError);
  CHECK_THROWS_AS(parse_run_config("model.conv_channels = 2,-3\n"), FormatError);
}

TEST_CASE("preparation fuses, resamples, trims, and segments per conversation") {
  const auto corpus = generate_synthetic_corpus(3, 30, 21);
  SegmentBatchSpec spec;
  spec.segment_s = 10;
  spec.batch_size = 5;

  // native 500 ms grid: 60 labels -> three full 20-frame segments
  const auto native = prepare_conversations(corpus, 500, spec);
  REQUIRE(native.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(native[i].id == corpus[i].id);
    REQUIRE(native[i].segments.size() == 3);
    for (const auto& seg : native[i].segments) {
      CHECK(seg.targets.valence.size() == 20);
      CHECK(seg.audio.size() == 80000);
      for (bool m : seg.targets.frame_mask) CHECK(m);
    }
  }

  // resampling to 100 ms: grid 0..29500 -> 296 labels, audio trimmed to the
  // labeled span, final segment padded and masked past frame 96
  const auto fine = prepare_conversations(corpus, 100, spec);
  for (const auto& pc : fine) {
    REQUIRE(pc.segments.size() == 3);
    std::size_t unmasked = 0;
    for (const auto& seg : pc.segments) {
      REQUIRE(seg.targets.valence.size() == 100);
      for (bool m : seg.targets.frame_mask) unmasked += m ? 1 : 0;
    }
    CHECK(unmasked == 296);
    const auto& tail_mask = pc.segments.back().targets.frame_mask;
    CHECK(tail_mask[95]);
    CHECK_FALSE(tail_mask[96]);
  }

  auto untracked = corpus;
  untracked[0].tracks.clear();
  CHECK_THROWS_AS(prepare_conversations(untracked, 500, spec), ValidationError);
}

TEST_CASE("training only draws gradients from the training split") {
  const auto corpus = generate_synthetic_corpus(6, 30, 5);
  const CorpusSplit split = split_corpus(corpus, SplitSpec{4, 1, 1, 3});
  const TrainRunConfig cfg = micro_run_config();
  TempDir dir;

  TrainTrace trace;
  const RunResult res = train(split, cfg, dir.str("run"), &trace);

  const std::set<std::string> train_ids = ids_of(split.train);
  const std::set<std::string> dev_ids = ids_of(split.dev);
  const std::set<std::string> test_ids = ids_of(split.test);
  // 4 conversations x 3 segments, revisited once per epoch
  CHECK(trace.gradient_source_ids.size() == 12 * 5);
  std::set<std::string> sources;
  for (const auto& id : trace.gradient_source_ids) {
    sources.insert(id);
    REQUIRE(train_ids.count(id) == 1);
    REQUIRE(dev_ids.count(id) == 0);
    REQUIRE(test_ids.count(id) == 0);
  }
  CHECK(sources == train_ids);

  REQUIRE(trace.epoch_train_loss.size() == 5);
  CHECK(trace.epoch_dev_ccc_v.size() == 5);
  CHECK(trace.epoch_train_loss.back() < trace.epoch_train_loss.front());
  CHECK(res.best_epoch >= 1);
  CHECK(res.best_epoch <= 5);

  // the reported dev score belongs to the checkpointed (best) epoch
  const std::size_t best = static_cast<std::size_t>(res.best_epoch - 1);
  CHECK(res.dev_ccc_v == trace.epoch_dev_ccc_v[best]);
  CHECK(res.dev_ccc_a == trace.epoch_dev_ccc_a[best]);
}

TEST_CASE("a finished run restores its best checkpoint and reports its files") {
  const auto corpus = generate_synthetic_corpus(5, 30, 9);
  const CorpusSplit split = split_corpus(corpus, SplitSpec{3, 1, 1, 2});
  TrainRunConfig cfg = micro_run_config();
  cfg.epochs = 3;
  TempDir dir;

  const RunResult res = train(split, cfg, dir.str("a"));
  CHECK(slurp(res.checkpoint_path).size() > 0);
  CHECK(slurp(res.log_path).rfind("epoch,step,", 0) == 0);

  // the saved weights reproduce the recorded dev score exactly
  EmotionModel model(cfg.model, 0);
  load_checkpoint(res.checkpoint_path, model);
  SegmentBatchSpec spec;
  spec.segment_s = cfg.segment_s;
  spec.batch_size = cfg.batch_size;
  const auto dev_prep = prepare_conversations(split.dev, cfg.label_period_ms, spec);
  const EvalCcc dev = evaluate_global_ccc(model, dev_prep);
  CHECK(dev.ccc_v == res.dev_ccc_v);
  CHECK(dev.ccc_a == res.dev_ccc_a);

  // result.json round-trips through the reader
  const RunResult back = read_run_result(dir.str("a") + "/result.json", dir.str("a"));
  CHECK(back.best_epoch == res.best_epoch);
  CHECK(back.dev_ccc_v == res.dev_ccc_v);
  CHECK(back.test_ccc_v == res.test_ccc_v);
  CHECK(back.test_ccc_a == res.test_ccc_a);
  CHECK(back.checkpoint_path == res.checkpoint_path);

  CHECK_THROWS_AS(read_run_result(dir.str("missing.json"), dir.str("a")), ValidationError);
  write_text_file(dir.str("trunc.json"), "{\"best_epoch\": 2}");
  CHECK_THROWS_AS(read_run_result(dir.str("trunc.json"), dir.str("a")), FormatError);
  write_text_file(dir.str("garbled.json"), "not json");
  CHECK_THROWS_AS(read_run_result(dir.str("garbled.json"), dir.str("a")), FormatError);

  CHECK_THROWS_AS(train(CorpusSplit{}, cfg, dir.str("empty")), ValidationError);
}

TEST_CASE("identical configs reproduce a run bit for bit") {
  const auto corpus = generate_synthetic_corpus(5, 30, 13);
  const CorpusSplit split = split_corpus(corpus, SplitSpec{3, 1, 1, 4});
  TrainRunConfig cfg = micro_run_config();
  cfg.epochs = 3;
  TempDir dir;

  const RunResult a = train(split, cfg, dir.str("a"));
  const RunResult b = train(split, cfg, dir.str("b"));
  CHECK(a.best_epoch == b.best_epoch);
  CHECK(a.dev_ccc_v == b.dev_ccc_v);
  CHECK(a.dev_ccc_a == b.dev_ccc_a);
  CHECK(a.test_ccc_v == b.test_ccc_v);
  CHECK(a.test_ccc_a == b.test_ccc_a);
  CHECK(slurp(a.checkpoint_path) == slurp(b.checkpoint_path));
  CHECK(slurp(a.log_path) == slurp(b.log_path));

  TrainRunConfig other = cfg;
  other.seed = cfg.seed + 1;
  const RunResult c = train(split, other, dir.str("c"));
  CHECK(slurp(c.checkpoint_path) != slurp(a.checkpoint_path));
}
