// cusemo: one binary tying the pipeline together, from synthetic corpus
// generation through preprocessing, agreement analysis, training and the
// ablation grids. Exit codes: 0 ok, 1 usage, 2 bad data, 3 runtime failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "cusemo/agreement.hpp"
#include "cusemo/common.hpp"
#include "cusemo/corpus.hpp"
#include "cusemo/dsp.hpp"
#include "cusemo/experiments.hpp"
#include "cusemo/labels.hpp"
#include "cusemo/model.hpp"
#include "cusemo/textio.hpp"
#include "cusemo/training.hpp"

namespace fs = std::filesystem;
using namespace cusemo;

namespace {

constexpr const char* kVersion = "1.0.0";

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Resolved configuration of the invocation, without timestamps, so reruns
// with identical flags leave byte-identical files behind.
void write_run_manifest(const std::string& out_dir, const std::string& command,
                        const std::vector<std::pair<std::string, std::string>>& flags) {
  std::string text = std::string("tool = cusemo ") + kVersion + "\n";
  text += "command = " + command + "\n";
  for (const auto& [k, v] : flags) text += k + " = " + v + "\n";
  fs::create_directories(out_dir);
  write_text_file((fs::path(out_dir) / "run_manifest.txt").string(), text);
}

std::vector<std::uint64_t> parse_seed_list(const std::string& s) {
  std::vector<std::uint64_t> out;
  for (const std::string& tok : split(s, ',')) {
    const long long v = parse_int(trim(tok), "seed list");
    if (v < 0) throw ValidationError("seed must be non-negative, got '" + tok + "'");
    out.push_back(static_cast<std::uint64_t>(v));
  }
  if (out.empty()) throw ValidationError("seed list is empty");
  return out;
}

SplitSpec parse_split_spec(const std::string& s, std::uint64_t seed) {
  const auto parts = split(s, ',');
  if (parts.size() != 3) {
    throw ValidationError("--split wants train,dev,test sizes, got '" + s + "'");
  }
  long long n[3];
  for (int i = 0; i < 3; ++i) {
    n[i] = parse_int(trim(parts[i]), "--split");
    if (n[i] <= 0) throw ValidationError("split sizes must be positive, got '" + s + "'");
  }
  SplitSpec sp;
  sp.n_train = static_cast<std::size_t>(n[0]);
  sp.n_dev = static_cast<std::size_t>(n[1]);
  sp.n_test = static_cast<std::size_t>(n[2]);
  sp.seed = seed;
  return sp;
}

// Flag-level validators so malformed values are usage errors (exit 1), not
// data errors.
const CLI::Validator kSeedListCheck(
    [](std::string& s) -> std::string {
      try {
        parse_seed_list(s);
      } catch (const std::exception& e) {
        return std::string(e.what());
      }
      return {};
    },
    "SEEDS");

const CLI::Validator kSplitCheck(
    [](std::string& s) -> std::string {
      try {
        parse_split_spec(s, 0);
      } catch (const std::exception& e) {
        return std::string(e.what());
      }
      return {};
    },
    "SPLIT");

CLI::Option* add_out_dir(CLI::App* sub, std::string& target) {
  return sub->add_option("--out-dir", target, "output directory ($CUSEMO_OUT if unset)")
      ->envname("CUSEMO_OUT")
      ->required();
}

std::vector<CellSpec> grid_cells(const std::string& name, const TrainRunConfig& base) {
  if (name == "table2") return sampling_rate_grid(base);
  if (name == "table3") return segment_size_grid(base);
  if (name == "table4") return context_weight_grid(base);
  throw ValidationError("unknown grid '" + name + "'");
}

TrainRunConfig load_base_config(const std::string& path) {
  if (path.empty()) return TrainRunConfig{};
  return parse_run_config(read_file(path));
}

// ---- subcommands -----------------------------------------------------------

struct SynthOpts {
  int n = 10;
  int duration_s = 30;
  std::uint64_t seed = 7;
  std::string out_dir;
};

int cmd_synth(const SynthOpts& o) {
  write_run_manifest(o.out_dir, "synth",
                     {{"n", std::to_string(o.n)},
                      {"duration_s", std::to_string(o.duration_s)},
                      {"seed", std::to_string(o.seed)},
                      {"out_dir", o.out_dir}});
  const auto convs = generate_synthetic_corpus(o.n, o.duration_s, o.seed);
  const std::string manifest = write_corpus(convs, o.out_dir);
  std::cout << "synth: " << convs.size() << " conversations, " << o.duration_s
            << " s each -> " << manifest << "\n";
  return 0;
}

struct PreprocessOpts {
  std::string manifest;
  double threshold_db = -45.0;
  double min_s = 3.0;
  double replace_s = 1.0;
  int window_ms = 100;
  int hop_ms = 50;
  std::string out_dir;
};

int cmd_preprocess(const PreprocessOpts& o) {
  write_run_manifest(o.out_dir, "preprocess",
                     {{"manifest", o.manifest},
                      {"silence_threshold_db", format_double(o.threshold_db)},
                      {"silence_min_s", format_double(o.min_s)},
                      {"silence_replace_s", format_double(o.replace_s)},
                      {"window_ms", std::to_string(o.window_ms)},
                      {"hop_ms", std::to_string(o.hop_ms)},
                      {"out_dir", o.out_dir}});
  auto convs = load_manifest(o.manifest);
  const FrameSpec spec{o.window_ms, o.hop_ms};
  std::string report = "id,n_compressed,input_s,output_s\n";
  int total = 0;
  for (auto& c : convs) {
    const auto segments = detect_silence(c.audio, o.threshold_db, spec);
    int n_over = 0;
    for (const auto& s : segments) {
      const double dur = static_cast<double>(s.end_sample - s.start_sample) /
                         c.audio.sample_rate_hz;
      if (dur > o.min_s) ++n_over;
    }
    const double input_s = c.audio.duration_s();
    c.audio = compress_silence(c.audio, segments, o.min_s, o.replace_s);
    report += c.id + "," + std::to_string(n_over) + "," + format_double(input_s) + "," +
              format_double(c.audio.duration_s()) + "\n";
    total += n_over;
  }
  const std::string manifest = write_corpus(convs, o.out_dir);
  write_text_file((fs::path(o.out_dir) / "silence_report.csv").string(), report);
  std::cout << "preprocess: " << convs.size() << " conversations, " << total
            << " silences compressed -> " << manifest << "\n";
  return 0;
}

struct RankOpts {
  std::string manifest;
  int window_ms = 40;
  int hop_ms = 10;
  std::string out_dir;
};

int cmd_rank(const RankOpts& o) {
  write_run_manifest(o.out_dir, "rank",
                     {{"manifest", o.manifest},
                      {"window_ms", std::to_string(o.window_ms)},
                      {"hop_ms", std::to_string(o.hop_ms)},
                      {"out_dir", o.out_dir}});
  const auto convs = load_manifest(o.manifest);
  const F0Ranking ranking = rank_by_f0_std(convs, FrameSpec{o.window_ms, o.hop_ms});
  std::string csv = "id,f0_std\n";
  for (const auto& [id, f0_std] : ranking.ranked) {
    csv += id + "," + format_double(f0_std) + "\n";
  }
  write_text_file((fs::path(o.out_dir) / "ranking.csv").string(), csv);
  std::string excluded = "id,reason\n";
  for (const auto& [id, reason] : ranking.excluded) excluded += id + "," + reason + "\n";
  write_text_file((fs::path(o.out_dir) / "excluded.csv").string(), excluded);
  std::cout << "rank: " << ranking.ranked.size() << " ranked, " << ranking.excluded.size()
            << " excluded -> ranking.csv\n";
  return 0;
}

struct ResampleOpts {
  std::string manifest;
  int target_ms = 0;
  int median_window_ms = 0;
  std::string out_dir;
};

int cmd_resample(const ResampleOpts& o) {
  write_run_manifest(o.out_dir, "resample",
                     {{"manifest", o.manifest},
                      {"target_ms", std::to_string(o.target_ms)},
                      {"median_window_ms", std::to_string(o.median_window_ms)},
                      {"out_dir", o.out_dir}});
  auto convs = load_manifest(o.manifest);
  for (auto& c : convs) {
    std::size_t span_samples = c.audio.samples.size();
    for (auto& [annotator, track] : c.tracks) {
      AnnotationTrack t = track;
      if (o.median_window_ms > 0) t = median_filter_track(t, o.median_window_ms);
      track = resample_track(t, o.target_ms);
      const std::size_t span = track.size() * static_cast<std::size_t>(track.period_ms) *
                               static_cast<std::size_t>(c.audio.sample_rate_hz) / 1000;
      span_samples = std::min(span_samples, span);
    }
    // The resampled grid stops at the last original timestamp, so trailing
    // audio past the label span is dropped to keep the pair aligned.
    if (c.audio.samples.size() > span_samples) c.audio.samples.resize(span_samples);
  }
  const std::string manifest = write_corpus(convs, o.out_dir);
  std::cout << "resample: " << convs.size() << " conversations to " << o.target_ms
            << " ms labels -> " << manifest << "\n";
  return 0;
}

struct AgreementOpts {
  std::string manifest;
  bool absolute = false;
  std::string out_dir;
};

int cmd_agreement(const AgreementOpts& o) {
  write_run_manifest(o.out_dir, "agreement",
                     {{"manifest", o.manifest},
                      {"absolute", o.absolute ? "true" : "false"},
                      {"out_dir", o.out_dir}});
  const auto convs = load_manifest(o.manifest);
  auto cell = [](auto&& f) -> std::string {
    try {
      return format_double(f());
    } catch (const DegenerateInputError&) {
      return "";  // statistic undefined on this conversation
    }
  };
  std::string csv = "id,icc_valence,icc_arousal,pearson_v,pearson_a,alpha_v,alpha_a\n";
  for (const auto& c : convs) {
    if (c.tracks.size() != 2) {
      throw ValidationError("conversation '" + c.id + "' has " +
                            std::to_string(c.tracks.size()) +
                            " annotation tracks; agreement needs exactly 2");
    }
    const AnnotationTrack& t1 = c.tracks[0].second;
    const AnnotationTrack& t2 = c.tracks[1].second;
    const RatingMatrix mv = RatingMatrix::from_columns({t1.valence, t2.valence});
    const RatingMatrix ma = RatingMatrix::from_columns({t1.arousal, t2.arousal});
    csv += c.id;
    csv += "," + cell([&] { return icc_single(mv, o.absolute); });
    csv += "," + cell([&] { return icc_single(ma, o.absolute); });
    csv += "," + cell([&] { return pearson(t1.valence, t2.valence).statistic; });
    csv += "," + cell([&] { return pearson(t1.arousal, t2.arousal).statistic; });
    csv += "," + cell([&] { return krippendorff_alpha_interval(mv); });
    csv += "," + cell([&] { return krippendorff_alpha_interval(ma); });
    csv += "\n";
  }
  write_text_file((fs::path(o.out_dir) / "agreement.csv").string(), csv);
  std::cout << "agreement: " << convs.size() << " conversations -> agreement.csv\n";
  return 0;
}

struct SelectOpts {
  std::string manifest;
  std::string dimension = "valence";
  double threshold = 0.7;
  std::string out_dir;
};

int cmd_select(const SelectOpts& o) {
  write_run_manifest(o.out_dir, "select",
                     {{"manifest", o.manifest},
                      {"dimension", o.dimension},
                      {"icc_threshold", format_double(o.threshold)},
                      {"out_dir", o.out_dir}});
  const auto convs = load_manifest(o.manifest);
  const auto entries = read_manifest(o.manifest);
  const EmotionDim dim = emotion_dim_from_string(o.dimension);
  const ReliabilitySelection sel = select_reliable(convs, dim, o.threshold);

  std::string report = "id,icc,kept,reason\n";
  for (const auto& r : sel.report) {
    std::string reason = r.exclusion_reason;
    for (char& ch : reason) {
      if (ch == ',') ch = ';';
    }
    report += r.id + "," + (r.icc ? format_double(*r.icc) : "") + "," +
              (r.kept ? "true" : "false") + "," + reason + "\n";
  }
  write_text_file((fs::path(o.out_dir) / "selection_report.csv").string(), report);

  // Filtered manifest keeps pointing at the source corpus via absolute paths;
  // nothing is copied. read_manifest already resolved entries against the
  // manifest directory, so only the working directory is left to apply.
  std::set<std::string> kept_ids;
  for (const auto& c : sel.kept) kept_ids.insert(c.id);
  auto absolute = [](const std::string& p) {
    return fs::absolute(p).lexically_normal().string();
  };
  std::string manifest = "id,audio,labels_a1,labels_a2,metadata\n";
  for (const auto& e : entries) {
    if (kept_ids.count(e.id) == 0) continue;
    manifest += e.id + "," + absolute(e.audio_path) + "," + absolute(e.label_paths[0]) + ",";
    if (e.label_paths.size() > 1) manifest += absolute(e.label_paths[1]);
    manifest += "," + absolute(e.metadata_path) + "\n";
  }
  const std::string manifest_path = (fs::path(o.out_dir) / "manifest.csv").string();
  write_text_file(manifest_path, manifest);
  std::cout << "select: kept " << sel.kept.size() << " of " << convs.size()
            << " conversations (icc > " << format_double(o.threshold) << " on "
            << o.dimension << ") -> " << manifest_path << "\n";
  return 0;
}

struct TrainOpts {
  std::string config;
  std::string corpus;
  std::string split = "130,45,40";
  std::uint64_t split_seed = 1;
  std::string out_dir;
};

int cmd_train(const TrainOpts& o) {
  write_run_manifest(o.out_dir, "train",
                     {{"config", o.config},
                      {"corpus", o.corpus},
                      {"split", o.split},
                      {"split_seed", std::to_string(o.split_seed)},
                      {"out_dir", o.out_dir}});
  const TrainRunConfig cfg = parse_run_config(read_file(o.config));
  auto convs = load_manifest(o.corpus);
  const CorpusSplit cs = split_corpus(std::move(convs), parse_split_spec(o.split, o.split_seed));
  bool cached = false;
  const RunResult r = run_cached(cs, cfg, o.out_dir, &cached);
  std::cout << "train: " << (cached ? "cached" : "trained") << " "
            << run_dir_for(o.out_dir, cfg) << " best_epoch=" << r.best_epoch
            << " dev_ccc_v=" << format_double(r.dev_ccc_v)
            << " dev_ccc_a=" << format_double(r.dev_ccc_a)
            << " test_ccc_v=" << format_double(r.test_ccc_v)
            << " test_ccc_a=" << format_double(r.test_ccc_a) << "\n";
  return 0;
}

struct EvaluateOpts {
  std::string config;
  std::string checkpoint;
  std::string corpus;
  std::string split = "130,45,40";
  std::uint64_t split_seed = 1;
  std::string split_name = "test";
  bool per_conversation = false;
  std::string out_dir;
};

int cmd_evaluate(const EvaluateOpts& o) {
  write_run_manifest(o.out_dir, "evaluate",
                     {{"config", o.config},
                      {"checkpoint", o.checkpoint},
                      {"corpus", o.corpus},
                      {"split", o.split},
                      {"split_seed", std::to_string(o.split_seed)},
                      {"split_name", o.split_name},
                      {"per_conversation", o.per_conversation ? "true" : "false"},
                      {"out_dir", o.out_dir}});
  const TrainRunConfig cfg = parse_run_config(read_file(o.config));
  auto convs = load_manifest(o.corpus);
  const CorpusSplit cs = split_corpus(std::move(convs), parse_split_spec(o.split, o.split_seed));
  const std::vector<Conversation>& subset =
      o.split_name == "train" ? cs.train : (o.split_name == "dev" ? cs.dev : cs.test);
  const auto prepared = prepare_conversations(subset, cfg.label_period_ms,
                                              SegmentBatchSpec{cfg.segment_s, cfg.batch_size});
  EmotionModel model(cfg.model, cfg.seed);
  load_checkpoint(o.checkpoint, model);
  const EvalCcc scores = evaluate_global_ccc(model, prepared, o.per_conversation);
  const std::optional<double> empathy = evaluate_empathy_ccc(model, prepared);

  nlohmann::ordered_json j;
  j["split"] = o.split_name;
  j["per_conversation"] = o.per_conversation;
  j["ccc_v"] = scores.ccc_v;
  j["ccc_a"] = scores.ccc_a;
  if (empathy) j["ccc_empathy"] = *empathy;
  write_text_file((fs::path(o.out_dir) / "eval.json").string(), j.dump(2) + "\n");

  std::cout << "evaluate: " << o.split_name << " ccc_v=" << format_double(scores.ccc_v)
            << " ccc_a=" << format_double(scores.ccc_a);
  if (empathy) std::cout << " ccc_empathy=" << format_double(*empathy);
  std::cout << " -> eval.json\n";
  return 0;
}

struct AblateOpts {
  std::string grid;
  std::string corpus;
  std::string seeds = "42,24,12,10,100,125";
  std::string config;
  std::string split = "130,45,40";
  std::uint64_t split_seed = 1;
  int jobs = 1;
  std::string out_dir;
};

int cmd_ablate(const AblateOpts& o) {
  write_run_manifest(o.out_dir, "ablate",
                     {{"grid", o.grid},
                      {"corpus", o.corpus},
                      {"seeds", o.seeds},
                      {"config", o.config},
                      {"split", o.split},
                      {"split_seed", std::to_string(o.split_seed)},
                      {"jobs", std::to_string(o.jobs)},
                      {"out_dir", o.out_dir}});
  const auto cells = grid_cells(o.grid, load_base_config(o.config));
  const auto seeds = parse_seed_list(o.seeds);
  auto convs = load_manifest(o.corpus);
  const CorpusSplit cs = split_corpus(std::move(convs), parse_split_spec(o.split, o.split_seed));
  const GridOutcome outcome = run_cells(cells, cs, seeds, o.out_dir, o.jobs);
  write_text_file((fs::path(o.out_dir) / "report.csv").string(),
                  render_report_csv(outcome.report));
  // Cache counters go to stdout only; files must stay rerun-stable.
  std::cout << "ablate: " << cells.size() << " cells x " << seeds.size() << " seeds, "
            << outcome.runs_executed << " trained, " << outcome.cache_hits
            << " cached -> report.csv\n";
  if (!outcome.failures.empty()) {
    for (const auto& f : outcome.failures) std::cerr << "failure: " << f << "\n";
    return 3;
  }
  return 0;
}

struct CompareOpts {
  std::string corpus;
  std::string grid;
  std::string cell_a;
  std::string cell_b;
  std::string dimension = "arousal";
  std::string seeds = "42,24,12,10,100,125";
  std::string config;
  std::string split = "130,45,40";
  std::uint64_t split_seed = 1;
  std::string out_dir;
};

int cmd_compare(const CompareOpts& o) {
  write_run_manifest(o.out_dir, "compare",
                     {{"corpus", o.corpus},
                      {"grid", o.grid},
                      {"cell_a", o.cell_a},
                      {"cell_b", o.cell_b},
                      {"dimension", o.dimension},
                      {"seeds", o.seeds},
                      {"config", o.config},
                      {"split", o.split},
                      {"split_seed", std::to_string(o.split_seed)},
                      {"out_dir", o.out_dir}});
  const auto cells = grid_cells(o.grid, load_base_config(o.config));
  auto find_cell = [&](const std::string& want) -> CellSpec {
    for (const auto& c : cells) {
      if (c.name == want) return c;
    }
    std::string names;
    for (const auto& c : cells) {
      if (!names.empty()) names += ", ";
      names += c.name;
    }
    throw ValidationError("cell '" + want + "' is not in grid " + o.grid +
                          " (cells: " + names + ")");
  };
  const std::vector<CellSpec> pair{find_cell(o.cell_a), find_cell(o.cell_b)};
  const auto seeds = parse_seed_list(o.seeds);
  auto convs = load_manifest(o.corpus);
  const CorpusSplit cs = split_corpus(std::move(convs), parse_split_spec(o.split, o.split_seed));
  const GridOutcome outcome = run_cells(pair, cs, seeds, o.out_dir, 1);
  if (!outcome.failures.empty()) {
    for (const auto& f : outcome.failures) std::cerr << "failure: " << f << "\n";
    return 3;
  }
  const EmotionDim dim = emotion_dim_from_string(o.dimension);
  const TestResult t = compare_cells(outcome.cells[0], outcome.cells[1], dim);
  write_text_file((fs::path(o.out_dir) / "comparison.csv").string(),
                  render_comparison_csv(o.cell_a, o.cell_b, dim, t));
  std::cout << "compare: " << o.cell_a << " vs " << o.cell_b << " on " << to_string(dim)
            << " statistic=" << format_double(t.statistic)
            << " p_one=" << format_double(t.p_one_sided)
            << " p_two=" << format_double(t.p_value) << " -> comparison.csv\n";
  return 0;
}

struct ReportOpts {
  std::string grid;
  std::string seeds = "42,24,12,10,100,125";
  std::string config;
  std::string out_dir;
};

int cmd_report(const ReportOpts& o) {
  write_run_manifest(o.out_dir, "report",
                     {{"grid", o.grid},
                      {"seeds", o.seeds},
                      {"config", o.config},
                      {"out_dir", o.out_dir}});
  const auto cells = grid_cells(o.grid, load_base_config(o.config));
  const GridOutcome outcome = collect_cells(cells, parse_seed_list(o.seeds), o.out_dir);
  write_text_file((fs::path(o.out_dir) / "report.csv").string(),
                  render_report_csv(outcome.report));
  std::cout << "report: " << outcome.report.size() << " of " << cells.size()
            << " cells aggregated from " << outcome.cache_hits << " runs -> report.csv\n";
  if (!outcome.failures.empty()) {
    for (const auto& f : outcome.failures) std::cerr << "missing: " << f << "\n";
    return 2;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"continuous speech emotion pipeline"};
  app.set_version_flag("--version", std::string("cusemo ") + kVersion);
  app.require_subcommand(1);

  SynthOpts synth;
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic labeled corpus");
  synth_cmd->add_option("--n", synth.n, "number of conversations")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  synth_cmd->add_option("--duration-s", synth.duration_s, "conversation length in seconds")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  synth_cmd->add_option("--seed", synth.seed, "generator seed")->capture_default_str();
  add_out_dir(synth_cmd, synth.out_dir);

  PreprocessOpts prep;
  auto* prep_cmd = app.add_subcommand("preprocess", "compress long silences in a corpus");
  prep_cmd->add_option("--manifest", prep.manifest, "corpus manifest CSV")
      ->required()
      ->check(CLI::ExistingFile);
  prep_cmd->add_option("--silence-threshold-db", prep.threshold_db, "silence RMS threshold, dBFS")
      ->capture_default_str();
  prep_cmd->add_option("--silence-min-s", prep.min_s, "only compress silences longer than this")
      ->capture_default_str();
  prep_cmd->add_option("--silence-replace-s", prep.replace_s, "replacement silence length")
      ->capture_default_str();
  prep_cmd->add_option("--window-ms", prep.window_ms, "RMS window")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  prep_cmd->add_option("--hop-ms", prep.hop_ms, "RMS hop")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  add_out_dir(prep_cmd, prep.out_dir);

  RankOpts rank;
  auto* rank_cmd = app.add_subcommand("rank", "rank conversations by F0 standard deviation");
  rank_cmd->add_option("--manifest", rank.manifest, "corpus manifest CSV")
      ->required()
      ->check(CLI::ExistingFile);
  rank_cmd->add_option("--window-ms", rank.window_ms, "F0 analysis window")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  rank_cmd->add_option("--hop-ms", rank.hop_ms, "F0 analysis hop")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  add_out_dir(rank_cmd, rank.out_dir);

  ResampleOpts resample;
  auto* resample_cmd =
      app.add_subcommand("resample", "median-filter and respace annotation tracks");
  resample_cmd->add_option("--manifest", resample.manifest, "corpus manifest CSV")
      ->required()
      ->check(CLI::ExistingFile);
  resample_cmd->add_option("--target-ms", resample.target_ms, "output label period")
      ->required()
      ->check(CLI::PositiveNumber);
  resample_cmd
      ->add_option("--median-window-ms", resample.median_window_ms,
                   "median filter window at the native rate, 0 = off")
      ->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  add_out_dir(resample_cmd, resample.out_dir);

  AgreementOpts agree;
  auto* agree_cmd =
      app.add_subcommand("agreement", "per-conversation inter-annotator agreement");
  agree_cmd->add_option("--manifest", agree.manifest, "corpus manifest CSV")
      ->required()
      ->check(CLI::ExistingFile);
  agree_cmd->add_flag("--absolute", agree.absolute,
                      "absolute-agreement ICC instead of consistency");
  add_out_dir(agree_cmd, agree.out_dir);

  SelectOpts select;
  auto* select_cmd =
      app.add_subcommand("select", "keep conversations whose annotators agree");
  select_cmd->add_option("--manifest", select.manifest, "corpus manifest CSV")
      ->required()
      ->check(CLI::ExistingFile);
  select_cmd->add_option("--dimension", select.dimension, "dimension the ICC gate uses")
      ->capture_default_str()
      ->check(CLI::IsMember({"valence", "arousal"}));
  select_cmd->add_option("--icc-threshold", select.threshold, "keep if ICC strictly above")
      ->capture_default_str();
  add_out_dir(select_cmd, select.out_dir);

  TrainOpts train;
  auto* train_cmd = app.add_subcommand("train", "train one model from a config file");
  train_cmd->add_option("--config", train.config, "run config file")
      ->required()
      ->check(CLI::ExistingFile);
  train_cmd->add_option("--corpus", train.corpus, "corpus manifest CSV")
      ->required()
      ->check(CLI::ExistingFile);
  train_cmd->add_option("--split", train.split, "train,dev,test conversation counts")
      ->capture_default_str()
      ->check(kSplitCheck);
  train_cmd->add_option("--split-seed", train.split_seed, "corpus shuffle seed")
      ->capture_default_str();
  add_out_dir(train_cmd, train.out_dir);

  EvaluateOpts eval;
  auto* eval_cmd = app.add_subcommand("evaluate", "score a checkpoint on a split");
  eval_cmd->add_option("--config", eval.config, "run config file")
      ->required()
      ->check(CLI::ExistingFile);
  eval_cmd->add_option("--checkpoint", eval.checkpoint, "model checkpoint")
      ->required()
      ->check(CLI::ExistingFile);
  eval_cmd->add_option("--corpus", eval.corpus, "corpus manifest CSV")
      ->required()
      ->check(CLI::ExistingFile);
  eval_cmd->add_option("--split", eval.split, "train,dev,test conversation counts")
      ->capture_default_str()
      ->check(kSplitCheck);
  eval_cmd->add_option("--split-seed", eval.split_seed, "corpus shuffle seed")
      ->capture_default_str();
  eval_cmd->add_option("--split-name", eval.split_name, "which split to score")
      ->capture_default_str()
      ->check(CLI::IsMember({"train", "dev", "test"}));
  eval_cmd->add_flag("--per-conversation", eval.per_conversation,
                     "average per-conversation concordances instead of global");
  add_out_dir(eval_cmd, eval.out_dir);

  AblateOpts ablate;
  auto* ablate_cmd = app.add_subcommand("ablate", "run an ablation grid across seeds");
  ablate_cmd->add_option("--grid", ablate.grid, "which grid to run")
      ->required()
      ->check(CLI::IsMember({"table2", "table3", "table4"}));
  ablate_cmd->add_option("--corpus", ablate.corpus, "corpus manifest CSV")
      ->required()
      ->check(CLI::ExistingFile);
  ablate_cmd->add_option("--seeds", ablate.seeds, "comma-separated training seeds")
      ->capture_default_str()
      ->check(kSeedListCheck);
  ablate_cmd->add_option("--config", ablate.config, "base run config the grid varies")
      ->check(CLI::ExistingFile);
  ablate_cmd->add_option("--split", ablate.split, "train,dev,test conversation counts")
      ->capture_default_str()
      ->check(kSplitCheck);
  ablate_cmd->add_option("--split-seed", ablate.split_seed, "corpus shuffle seed")
      ->capture_default_str();
  ablate_cmd->add_option("--jobs", ablate.jobs, "parallel training processes")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  add_out_dir(ablate_cmd, ablate.out_dir);

  CompareOpts compare;
  auto* compare_cmd =
      app.add_subcommand("compare", "paired signed-rank test between two grid cells");
  compare_cmd->add_option("--corpus", compare.corpus, "corpus manifest CSV")
      ->required()
      ->check(CLI::ExistingFile);
  compare_cmd->add_option("--grid", compare.grid, "grid both cells belong to")
      ->required()
      ->check(CLI::IsMember({"table2", "table3", "table4"}));
  compare_cmd->add_option("--cell-a", compare.cell_a, "first cell name")->required();
  compare_cmd->add_option("--cell-b", compare.cell_b, "second cell name")->required();
  compare_cmd->add_option("--dimension", compare.dimension, "dimension to compare")
      ->capture_default_str()
      ->check(CLI::IsMember({"valence", "arousal"}));
  compare_cmd->add_option("--seeds", compare.seeds, "comma-separated training seeds")
      ->capture_default_str()
      ->check(kSeedListCheck);
  compare_cmd->add_option("--config", compare.config, "base run config the grid varies")
      ->check(CLI::ExistingFile);
  compare_cmd->add_option("--split", compare.split, "train,dev,test conversation counts")
      ->capture_default_str()
      ->check(kSplitCheck);
  compare_cmd->add_option("--split-seed", compare.split_seed, "corpus shuffle seed")
      ->capture_default_str();
  add_out_dir(compare_cmd, compare.out_dir);

  ReportOpts report;
  auto* report_cmd =
      app.add_subcommand("report", "aggregate cached grid runs without training");
  report_cmd->add_option("--grid", report.grid, "which grid to aggregate")
      ->required()
      ->check(CLI::IsMember({"table2", "table3", "table4"}));
  report_cmd->add_option("--seeds", report.seeds, "comma-separated training seeds")
      ->capture_default_str()
      ->check(kSeedListCheck);
  report_cmd->add_option("--config", report.config, "base run config the grid varies")
      ->check(CLI::ExistingFile);
  add_out_dir(report_cmd, report.out_dir);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (synth_cmd->parsed()) return cmd_synth(synth);
    if (prep_cmd->parsed()) return cmd_preprocess(prep);
    if (rank_cmd->parsed()) return cmd_rank(rank);
    if (resample_cmd->parsed()) return cmd_resample(resample);
    if (agree_cmd->parsed()) return cmd_agreement(agree);
    if (select_cmd->parsed()) return cmd_select(select);
    if (train_cmd->parsed()) return cmd_train(train);
    if (eval_cmd->parsed()) return cmd_evaluate(eval);
    if (ablate_cmd->parsed()) return cmd_ablate(ablate);
    if (compare_cmd->parsed()) return cmd_compare(compare);
    if (report_cmd->parsed()) return cmd_report(report);
    std::cerr << "error: no subcommand\n";
    return 1;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
