#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include <json.hpp>

#include "cusemo/corpus.hpp"
#include "cusemo/experiments.hpp"
#include "cusemo/textio.hpp"
#include "cusemo/training.hpp"
#include "test_util.hpp"

using namespace cusemo;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code = -1;
  std::string out;  // stdout and stderr combined
};

CliResult run_cli(const std::string& args, const std::string& env_prefix = "") {
  const char* bin = std::getenv("CUSEMO_BIN");
  REQUIRE_MESSAGE(bin != nullptr, "CUSEMO_BIN must point at the pipeline binary");
  static TempDir capture_dir;
  static int counter = 0;
  const std::string cap = capture_dir.str("out" + std::to_string(counter++) + ".txt");
  const std::string cmd =
      env_prefix + "\"" + std::string(bin) + "\" " + args + " > " + cap + " 2>&1";
  const int raw = std::system(cmd.c_str());
  CliResult r;
  r.code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  std::ifstream in(cap, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  r.out = ss.str();
  return r;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE_MESSAGE(in.good(), "missing file: " << path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::map<std::string, std::string> snapshot_tree(const std::string& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    files[fs::relative(e.path(), root).string()] = slurp(e.path().string());
  }
  return files;
}

std::size_t count_lines(const std::string& s) {
  std::size_t n = 0;
  for (char c : s) n += c == '\n' ? 1 : 0;
  return n;
}

std::string micro_config_text(int epochs) {
  TrainRunConfig c;
  c.label_period_ms = 500;
  c.segment_s = 10;
  c.batch_size = 2;
  c.epochs = epochs;
  c.lr = 1e-3;
  c.seed = 11;
  c.model.conv_channels = {2, 3, 3};
  c.model.conv_kernels = {8, 6, 6};
  c.model.pool_kernels = {10, 5, 5};
  c.model.lstm_hidden = 4;
  c.model.lstm_layers = 2;
  c.model.mlp_hidden = {8, 4};
  return serialize_run_config(c);
}

}  // namespace

TEST_CASE("usage problems are exit 1, well-formed calls for info are exit 0") {
  CHECK(run_cli("--version").code == 0);
  CHECK(run_cli("--version").out.find("cusemo 1.0.0") != std::string::npos);
  const CliResult help = run_cli("--help");
  CHECK(help.code == 0);
  CHECK(help.out.find("synth") != std::string::npos);
  CHECK(help.out.find("ablate") != std::string::npos);

  CHECK(run_cli("").code == 1);           // a subcommand is required
  CHECK(run_cli("frobnicate").code == 1);  // unknown subcommand
  TempDir dir;
  CHECK(run_cli("synth --bogus --out-dir " + dir.str("x")).code == 1);
  CHECK(run_cli("synth --n 3").code == 1);  // no --out-dir and no CUSEMO_OUT
  // flag-level checks catch missing files before any work happens
  CHECK(run_cli("train --config " + dir.str("nope.cfg") + " --corpus " +
                dir.str("nope.csv") + " --out-dir " + dir.str("t"))
            .code == 1);
  CHECK(run_cli("ablate --grid table9 --corpus x --out-dir y").code == 1);
}

TEST_CASE("corpus synthesis is reproducible byte for byte") {
  TempDir dir;
  const std::string args = "synth --n 3 --duration-s 20 --seed 5 --out-dir " + dir.str("c");
  const CliResult first = run_cli(args);
  REQUIRE(first.code == 0);
  CHECK(first.out.find("synth: 3 conversations") != std::string::npos);

  const auto convs = load_manifest(dir.str("c") + "/manifest.csv");
  REQUIRE(convs.size() == 3);
  for (const auto& c : convs) {
    CHECK(c.audio.sample_rate_hz == 8000);
    CHECK(c.audio.samples.size() == 160000);
    REQUIRE(c.tracks.size() == 2);
    CHECK(c.tracks[0].second.period_ms == 500);
    CHECK(c.tracks[0].second.size() == 40);
    CHECK(c.metadata.conversation_id == c.id);
  }

  const auto before = snapshot_tree(dir.str("c"));
  REQUIRE(run_cli(args).code == 0);
  CHECK(snapshot_tree(dir.str("c")) == before);

  // --out-dir falls back to the environment
  const CliResult via_env =
      run_cli("synth --n 3 --duration-s 20 --seed 5", "CUSEMO_OUT=" + dir.str("env") + " ");
  REQUIRE(via_env.code == 0);
  CHECK(slurp(dir.str("env") + "/manifest.csv") == slurp(dir.str("c") + "/manifest.csv"));
}

TEST_CASE("a malformed corpus is reported as bad data, exit 2") {
  TempDir dir;
  write_text_file(dir.str("junk.csv"), "id,audio\nnot,a,real,manifest,row\n");
  const CliResult r = run_cli("rank --manifest " + dir.str("junk.csv") + " --out-dir " +
                              dir.str("out"));
  CHECK(r.code == 2);
  CHECK(r.out.find("error:") != std::string::npos);
}

TEST_CASE("the audio and label tooling runs end to end on a synthetic corpus") {
  TempDir dir;
  REQUIRE(run_cli("synth --n 3 --duration-s 20 --seed 5 --out-dir " + dir.str("c")).code == 0);
  const std::string manifest = dir.str("c") + "/manifest.csv";

  // the synthetic corpus has a noise floor, so nothing clears the gate
  const CliResult prep = run_cli("preprocess --manifest " + manifest + " --out-dir " +
                                 dir.str("prep"));
  REQUIRE(prep.code == 0);
  CHECK(prep.out.find("0 silences compressed") != std::string::npos);
  CHECK(count_lines(slurp(dir.str("prep") + "/silence_report.csv")) == 4);
  CHECK(load_manifest(dir.str("prep") + "/manifest.csv").size() == 3);

  const CliResult rank = run_cli("rank --manifest " + manifest + " --out-dir " + dir.str("rank"));
  REQUIRE(rank.code == 0);
  CHECK(count_lines(slurp(dir.str("rank") + "/ranking.csv")) == 4);
  CHECK(count_lines(slurp(dir.str("rank") + "/excluded.csv")) == 1);  // header only

  const CliResult rs = run_cli("resample --manifest " + manifest +
                               " --target-ms 100 --median-window-ms 1500 --out-dir " +
                               dir.str("rs"));
  REQUIRE(rs.code == 0);
  const auto resampled = load_manifest(dir.str("rs") + "/manifest.csv");
  REQUIRE(resampled.size() == 3);
  for (const auto& c : resampled) {
    for (const auto& [_, t] : c.tracks) {
      CHECK(t.period_ms == 100);
      CHECK(t.size() == 196);  // grid 0..19500 ms
    }
    CHECK(c.audio.samples.size() == 156800);  // trimmed to the label span
  }

  const CliResult agree = run_cli("agreement --manifest " + manifest + " --out-dir " +
                                  dir.str("agree"));
  REQUIRE(agree.code == 0);
  const std::string csv = slurp(dir.str("agree") + "/agreement.csv");
  CHECK(count_lines(csv) == 4);
  const std::size_t row_start = csv.find('\n') + 1;
  const std::string row = csv.substr(row_start, csv.find('\n', row_start) - row_start);
  CHECK(std::count(row.begin(), row.end(), ',') == 6);
  CHECK(run_cli("agreement --manifest " + manifest + " --absolute --out-dir " +
                dir.str("agree_abs"))
            .code == 0);

  const CliResult sel = run_cli("select --manifest " + manifest +
                                " --dimension arousal --icc-threshold -1 --out-dir " +
                                dir.str("sel"));
  REQUIRE(sel.code == 0);
  const std::string report = slurp(dir.str("sel") + "/selection_report.csv");
  // the filtered manifest holds exactly the rows marked kept=true
  std::size_t kept_rows = 0;
  std::istringstream rows(report);
  std::string line;
  std::getline(rows, line);  // header
  while (std::getline(rows, line)) {
    if (line.find(",true,") != std::string::npos) ++kept_rows;
  }
  CHECK(kept_rows >= 1);
  CHECK(load_manifest(dir.str("sel") + "/manifest.csv").size() == kept_rows);
}

TEST_CASE("training through the binary caches its run and evaluation agrees") {
  TempDir dir;
  REQUIRE(run_cli("synth --n 5 --duration-s 30 --seed 9 --out-dir " + dir.str("c")).code == 0);
  const std::string manifest = dir.str("c") + "/manifest.csv";
  write_text_file(dir.str("run.cfg"), micro_config_text(2));

  const std::string train_args = "train --config " + dir.str("run.cfg") + " --corpus " +
                                 manifest + " --split 3,1,1 --out-dir " + dir.str("t");
  const CliResult first = run_cli(train_args);
  REQUIRE(first.code == 0);
  CHECK(first.out.find("train: trained") != std::string::npos);

  const auto before = snapshot_tree(dir.str("t") + "/runs");
  const CliResult again = run_cli(train_args);
  REQUIRE(again.code == 0);
  CHECK(again.out.find("train: cached") != std::string::npos);
  CHECK(snapshot_tree(dir.str("t") + "/runs") == before);

  // the default split does not fit this tiny corpus: bad data, not usage
  CHECK(run_cli("train --config " + dir.str("run.cfg") + " --corpus " + manifest +
                " --out-dir " + dir.str("t2"))
            .code == 2);

  std::string run_dir;
  for (const auto& e : fs::directory_iterator(dir.str("t") + "/runs")) {
    run_dir = e.path().string();
  }
  REQUIRE_FALSE(run_dir.empty());

  const CliResult eval = run_cli("evaluate --config " + dir.str("run.cfg") +
                                 " --checkpoint " + run_dir + "/best.ckpt --corpus " +
                                 manifest + " --split 3,1,1 --split-name test --out-dir " +
                                 dir.str("e"));
  REQUIRE(eval.code == 0);
  const auto eval_json = nlohmann::json::parse(slurp(dir.str("e") + "/eval.json"));
  const auto result_json = nlohmann::json::parse(slurp(run_dir + "/result.json"));
  // scoring the restored checkpoint reproduces the run's own test numbers
  CHECK(eval_json.at("ccc_v").get<double>() == result_json.at("test_ccc_v").get<double>());
  CHECK(eval_json.at("ccc_a").get<double>() == result_json.at("test_ccc_a").get<double>());
  CHECK(eval_json.at("ccc_empathy").is_number());

  CHECK(run_cli("evaluate --config " + dir.str("run.cfg") + " --checkpoint " + run_dir +
                "/best.ckpt --corpus " + manifest +
                " --split 3,1,1 --split-name dev --per-conversation --out-dir " +
                dir.str("e2"))
            .code == 0);
}

TEST_CASE("an ablation grid reruns from cache and feeds the report command") {
  TempDir dir;
  REQUIRE(run_cli("synth --n 5 --duration-s 30 --seed 9 --out-dir " + dir.str("c")).code == 0);
  const std::string manifest = dir.str("c") + "/manifest.csv";
  write_text_file(dir.str("run.cfg"), micro_config_text(1));

  const std::string ablate_args = "ablate --grid table2 --corpus " + manifest +
                                  " --seeds 42 --config " + dir.str("run.cfg") +
                                  " --split 3,1,1 --out-dir " + dir.str("g");
  const CliResult first = run_cli(ablate_args);
  REQUIRE(first.code == 0);
  CHECK(first.out.find("4 cells x 1 seeds, 4 trained, 0 cached") != std::string::npos);
  CHECK(count_lines(slurp(dir.str("g") + "/report.csv")) == 5);

  const auto before = snapshot_tree(dir.str("g"));
  const CliResult again = run_cli(ablate_args);
  REQUIRE(again.code == 0);
  CHECK(again.out.find("0 trained, 4 cached") != std::string::npos);
  // a fully cached rerun leaves every file byte-identical
  CHECK(snapshot_tree(dir.str("g")) == before);

  const CliResult rep = run_cli("report --grid table2 --seeds 42 --config " + dir.str("run.cfg") +
                                " --out-dir " + dir.str("g"));
  REQUIRE(rep.code == 0);
  CHECK(rep.out.find("4 of 4 cells") != std::string::npos);

  const CliResult missing = run_cli("report --grid table2 --seeds 42,99 --config " +
                                    dir.str("run.cfg") + " --out-dir " + dir.str("g"));
  CHECK(missing.code == 2);
  CHECK(missing.out.find("missing:") != std::string::npos);
}

TEST_CASE("cell comparison consumes cached runs and emits the paired test") {
  TempDir dir;
  REQUIRE(run_cli("synth --n 5 --duration-s 30 --seed 9 --out-dir " + dir.str("c")).code == 0);
  const std::string manifest = dir.str("c") + "/manifest.csv";
  write_text_file(dir.str("run.cfg"), micro_config_text(1));

  // plant one finished run per (cell, seed) so the comparison never trains
  const TrainRunConfig base = parse_run_config(micro_config_text(1));
  const auto cells = context_weight_grid(base);
  const CellSpec* plain = nullptr;
  const CellSpec* empathy = nullptr;
  for (const auto& c : cells) {
    if (c.config.weights.alpha == 0.0 && c.config.weights.beta == 0.0) plain = &c;
    if (c.config.weights.alpha == 0.1 && c.config.weights.beta == 0.0) empathy = &c;
  }
  REQUIRE(plain != nullptr);
  REQUIRE(empathy != nullptr);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    for (const CellSpec* cell : {plain, empathy}) {
      TrainRunConfig cfg = cell->config;
      cfg.seed = seed;
      const std::string rd = run_dir_for(dir.str("g"), cfg);
      fs::create_directories(rd);
      RunResult r;
      r.best_epoch = 1;
      r.test_ccc_a = 0.5 + 0.01 * static_cast<double>(seed) + (cell == empathy ? 0.05 : 0.0);
      r.test_ccc_v = r.test_ccc_a / 2.0;
      r.checkpoint_path = rd + "/best.ckpt";
      r.log_path = rd + "/train_log.csv";
      write_run_result(rd + "/result.json", r);
    }
  }

  const CliResult cmp = run_cli("compare --grid table4 --cell-a " + plain->name +
                                " --cell-b " + empathy->name + " --dimension arousal --corpus " +
                                manifest + " --seeds 1,2,3,4,5 --config " + dir.str("run.cfg") +
                                " --split 3,1,1 --out-dir " + dir.str("g"));
  REQUIRE(cmp.code == 0);
  const std::string csv = slurp(dir.str("g") + "/comparison.csv");
  CHECK(csv.rfind("cell_a,cell_b,dimension,statistic,p_one_sided,p_two_sided\n", 0) == 0);
  // the second cell wins every seed: statistic 0, one-sided p = 1/32
  std::istringstream rows(csv);
  std::string header, row;
  std::getline(rows, header);
  std::getline(rows, row);
  const auto fields = split(row, ',');
  REQUIRE(fields.size() == 6);
  CHECK(std::stod(fields[3]) == 0.0);
  CHECK(std::stod(fields[4]) == doctest::Approx(1.0 / 32.0).epsilon(1e-12));
  CHECK(std::stod(fields[5]) == doctest::Approx(2.0 / 32.0).epsilon(1e-12));

  const CliResult bad = run_cli("compare --grid table4 --cell-a nope --cell-b " +
                                empathy->name + " --corpus " + manifest +
                                " --seeds 1,2,3,4,5 --config " + dir.str("run.cfg") +
                                " --split 3,1,1 --out-dir " + dir.str("g"));
  CHECK(bad.code == 2);
  CHECK(bad.out.find("not in grid") != std::string::npos);
}
