#include "cusemo/experiments.hpp"

#include <sys/wait.h>
#include <unistd.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "cusemo/common.hpp"
#include "cusemo/objectives.hpp"
#include "cusemo/textio.hpp"

namespace fs = std::filesystem;

namespace cusemo {
namespace {

struct FramePairs {
  std::vector<double> pred_v, tgt_v, pred_a, tgt_a;
};

FramePairs collect_frames(const EmotionModel& model, const PreparedConversation& conv) {
  FramePairs fp;
  for (const Segment& seg : conv.segments) {
    const ModelOutput out = model.forward_eval(seg.audio, seg.targets.valence.size());
    for (std::size_t i = 0; i < seg.targets.frame_mask.size(); ++i) {
      if (!seg.targets.frame_mask[i]) continue;
      fp.pred_v.push_back(out.valence[i]);
      fp.tgt_v.push_back(seg.targets.valence[i]);
      fp.pred_a.push_back(out.arousal[i]);
      fp.tgt_a.push_back(seg.targets.arousal[i]);
    }
  }
  return fp;
}

struct PendingRun {
  std::size_t cell_idx;
  std::uint64_t seed;
  TrainRunConfig cfg;
  std::string dir;
};

void run_child(const CorpusSplit& split, const PendingRun& p) {
  try {
    fs::create_directories(p.dir);
    write_text_file(p.dir + "/config.cfg", serialize_run_config(p.cfg));
    train(split, p.cfg, p.dir);
    _exit(0);
  } catch (const std::exception& e) {
    try {
      write_text_file(p.dir + "/error.txt", std::string(e.what()) + "\n");
    } catch (...) {
    }
    _exit(1);
  } catch (...) {
    _exit(1);
  }
}

double population_std(const std::vector<double>& v, double mean) {
  double acc = 0.0;
  for (double x : v) acc += (x - mean) * (x - mean);
  return std::sqrt(acc / static_cast<double>(v.size()));
}

}  // namespace

std::string run_dir_for(const std::string& out_dir, const TrainRunConfig& config) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(config_hash(config)));
  return out_dir + "/runs/" + buf;
}

RunResult run_cached(const CorpusSplit& split, const TrainRunConfig& config,
                     const std::string& out_dir, bool* cache_hit) {
  const std::string dir = run_dir_for(out_dir, config);
  const std::string result_path = dir + "/result.json";
  if (fs::exists(result_path)) {
    if (cache_hit) *cache_hit = true;
    return read_run_result(result_path, dir);
  }
  if (cache_hit) *cache_hit = false;
  fs::create_directories(dir);
  write_text_file(dir + "/config.cfg", serialize_run_config(config));
  return train(split, config, dir);
}

EvalCcc evaluate_global_ccc(const EmotionModel& model,
                            const std::vector<PreparedConversation>& split,
                            bool per_conversation) {
  if (split.empty()) throw ValidationError("evaluation split is empty");
  EvalCcc out;
  if (!per_conversation) {
    FramePairs all;
    for (const auto& conv : split) {
      FramePairs fp = collect_frames(model, conv);
      all.pred_v.insert(all.pred_v.end(), fp.pred_v.begin(), fp.pred_v.end());
      all.tgt_v.insert(all.tgt_v.end(), fp.tgt_v.begin(), fp.tgt_v.end());
      all.pred_a.insert(all.pred_a.end(), fp.pred_a.begin(), fp.pred_a.end());
      all.tgt_a.insert(all.tgt_a.end(), fp.tgt_a.begin(), fp.tgt_a.end());
    }
    out.ccc_v = ccc(all.pred_v, all.tgt_v);
    out.ccc_a = ccc(all.pred_a, all.tgt_a);
    return out;
  }
  double sum_v = 0.0, sum_a = 0.0;
  for (const auto& conv : split) {
    const FramePairs fp = collect_frames(model, conv);
    sum_v += ccc(fp.pred_v, fp.tgt_v);
    sum_a += ccc(fp.pred_a, fp.tgt_a);
  }
  out.ccc_v = sum_v / static_cast<double>(split.size());
  out.ccc_a = sum_a / static_cast<double>(split.size());
  return out;
}

std::optional<double> evaluate_empathy_ccc(const EmotionModel& model,
                                           const std::vector<PreparedConversation>& split) {
  if (split.empty()) throw ValidationError("evaluation split is empty");
  std::vector<double> preds, targets;
  for (const auto& conv : split) {
    for (const Segment& seg : conv.segments) {
      const ModelOutput out = model.forward_eval(seg.audio, seg.targets.valence.size());
      if (!out.empathy) return std::nullopt;
      preds.push_back(*out.empathy);
      targets.push_back(seg.targets.empathy);
    }
  }
  return ccc(preds, targets);
}

std::vector<CellSpec> sampling_rate_grid(const TrainRunConfig& base) {
  std::vector<CellSpec> cells;
  for (int rate : {500, 200, 100, 40}) {
    CellSpec c;
    c.name = "sr" + std::to_string(rate);
    c.config = base;
    c.config.label_period_ms = rate;
    cells.push_back(std::move(c));
  }
  return cells;
}

std::vector<CellSpec> segment_size_grid(const TrainRunConfig& base) {
  std::vector<CellSpec> cells;
  for (const auto& [seg_s, batch] : std::vector<std::pair<int, int>>{
           {300, 5}, {150, 10}, {100, 15}, {75, 20}, {50, 30}}) {
    CellSpec c;
    c.name = "seg" + std::to_string(seg_s) + "_b" + std::to_string(batch);
    c.config = base;
    c.config.segment_s = seg_s;
    c.config.batch_size = batch;
    cells.push_back(std::move(c));
  }
  return cells;
}

std::vector<CellSpec> context_weight_grid(const TrainRunConfig& base) {
  std::vector<CellSpec> cells;
  for (const auto& [alpha, beta] : std::vector<std::pair<double, double>>{
           {0, 0}, {0, 1}, {1, 0}, {0.1, 0}, {0.01, 0}, {0.001, 0},
           {0, 0.1}, {0, 0.01}, {0, 0.001}}) {
    CellSpec c;
    c.name = "a" + format_double(alpha) + "_b" + format_double(beta);
    c.config = base;
    c.config.weights.alpha = alpha;
    c.config.weights.beta = beta;
    cells.push_back(std::move(c));
  }
  return cells;
}

GridOutcome run_cells(const std::vector<CellSpec>& cells, const CorpusSplit& split,
                      const std::vector<std::uint64_t>& seeds,
                      const std::string& out_dir, int jobs) {
  if (cells.empty()) throw ValidationError("no cells to run");
  if (seeds.empty()) throw ValidationError("no seeds given");
  if (jobs < 1) throw ValidationError("jobs must be >= 1");

  GridOutcome outcome;
  outcome.cells.resize(cells.size());
  for (std::size_t i = 0; i < cells.size(); ++i) {
    outcome.cells[i].name = cells[i].name;
    outcome.cells[i].config = cells[i].config;
  }

  // Figure out what is already cached, then execute the rest.
  std::vector<PendingRun> pending;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    for (std::uint64_t seed : seeds) {
      TrainRunConfig cfg = cells[i].config;
      cfg.seed = seed;
      const std::string dir = run_dir_for(out_dir, cfg);
      if (fs::exists(dir + "/result.json")) {
        ++outcome.cache_hits;
      } else {
        pending.push_back({i, seed, cfg, dir});
      }
    }
  }

  auto record_failure = [&](const PendingRun& p, const std::string& what) {
    outcome.failures.push_back("cell " + cells[p.cell_idx].name + " seed " +
                               std::to_string(p.seed) + ": " + what);
  };

  if (jobs == 1) {
    for (const PendingRun& p : pending) {
      try {
        fs::create_directories(p.dir);
        write_text_file(p.dir + "/config.cfg", serialize_run_config(p.cfg));
        train(split, p.cfg, p.dir);
        ++outcome.runs_executed;
      } catch (const std::exception& e) {
        record_failure(p, e.what());
      }
    }
  } else {
    std::size_t next = 0;
    std::vector<std::pair<pid_t, std::size_t>> active;  // pid -> pending index
    while (next < pending.size() || !active.empty()) {
      while (next < pending.size() && active.size() < static_cast<std::size_t>(jobs)) {
        const pid_t pid = fork();
        if (pid < 0) throw RuntimeFailure("fork failed");
        if (pid == 0) run_child(split, pending[next]);  // never returns
        active.emplace_back(pid, next);
        ++next;
      }
      int status = 0;
      const pid_t done = waitpid(-1, &status, 0);
      if (done < 0) throw RuntimeFailure("waitpid failed");
      for (std::size_t k = 0; k < active.size(); ++k) {
        if (active[k].first != done) continue;
        const PendingRun& p = pending[active[k].second];
        if (WIFEXITED(status) && WEXITSTATUS(status) == 0) {
          ++outcome.runs_executed;
        } else {
          std::string what = "training process failed";
          std::ifstream err(p.dir + "/error.txt");
          if (err) {
            std::string line;
            std::getline(err, line);
            if (!line.empty()) what = line;
          }
          record_failure(p, what);
        }
        active.erase(active.begin() + static_cast<std::ptrdiff_t>(k));
        break;
      }
    }
  }

  // Collect everything that has a result on disk.
  for (std::size_t i = 0; i < cells.size(); ++i) {
    for (std::uint64_t seed : seeds) {
      TrainRunConfig cfg = cells[i].config;
      cfg.seed = seed;
      const std::string dir = run_dir_for(out_dir, cfg);
      const std::string result_path = dir + "/result.json";
      if (!fs::exists(result_path)) continue;
      SeedRun run;
      run.seed = seed;
      run.result = read_run_result(result_path, dir);
      outcome.cells[i].runs.push_back(std::move(run));
    }
    if (!outcome.cells[i].runs.empty()) {
      outcome.report.push_back(aggregate_cell(outcome.cells[i]));
    }
  }
  return outcome;
}

GridOutcome collect_cells(const std::vector<CellSpec>& cells,
                          const std::vector<std::uint64_t>& seeds,
                          const std::string& out_dir) {
  if (cells.empty()) throw ValidationError("no cells to collect");
  if (seeds.empty()) throw ValidationError("no seeds given");
  GridOutcome outcome;
  outcome.cells.resize(cells.size());
  for (std::size_t i = 0; i < cells.size(); ++i) {
    outcome.cells[i].name = cells[i].name;
    outcome.cells[i].config = cells[i].config;
    for (std::uint64_t seed : seeds) {
      TrainRunConfig cfg = cells[i].config;
      cfg.seed = seed;
      const std::string dir = run_dir_for(out_dir, cfg);
      const std::string result_path = dir + "/result.json";
      if (!fs::exists(result_path)) {
        outcome.failures.push_back("cell " + cells[i].name + " seed " +
                                   std::to_string(seed) + ": no cached run in " + dir);
        continue;
      }
      SeedRun run;
      run.seed = seed;
      run.result = read_run_result(result_path, dir);
      outcome.cells[i].runs.push_back(std::move(run));
      ++outcome.cache_hits;
    }
    if (!outcome.cells[i].runs.empty()) {
      outcome.report.push_back(aggregate_cell(outcome.cells[i]));
    }
  }
  return outcome;
}

ReportRow aggregate_cell(const CellResult& cell) {
  if (cell.runs.empty()) throw ValidationError("cell '" + cell.name + "' has no runs");
  ReportRow row;
  row.cell = cell.name;
  row.n_seeds = cell.runs.size();
  std::vector<double> v, a;
  for (const SeedRun& r : cell.runs) {
    v.push_back(r.result.test_ccc_v);
    a.push_back(r.result.test_ccc_a);
  }
  for (double x : v) row.mean_ccc_v += x;
  for (double x : a) row.mean_ccc_a += x;
  row.mean_ccc_v /= static_cast<double>(v.size());
  row.mean_ccc_a /= static_cast<double>(a.size());
  row.std_ccc_v = population_std(v, row.mean_ccc_v);
  row.std_ccc_a = population_std(a, row.mean_ccc_a);
  return row;
}

TestResult compare_cells(const CellResult& a, const CellResult& b, EmotionDim dimension) {
  if (a.runs.size() != b.runs.size() || a.runs.empty()) {
    throw ValidationError("cells have different seed counts");
  }
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < a.runs.size(); ++i) {
    if (a.runs[i].seed != b.runs[i].seed) {
      throw ValidationError("cells were run with different seed lists");
    }
    const RunResult& ra = a.runs[i].result;
    const RunResult& rb = b.runs[i].result;
    xs.push_back(dimension == EmotionDim::kValence ? ra.test_ccc_v : ra.test_ccc_a);
    ys.push_back(dimension == EmotionDim::kValence ? rb.test_ccc_v : rb.test_ccc_a);
  }
  try {
    return wilcoxon_signed_rank(xs, ys);
  } catch (const DegenerateInputError&) {
    throw DegenerateInputError("cells '" + a.name + "' and '" + b.name +
                               "' are indistinguishable on " + to_string(dimension) +
                               " (all per-seed differences are zero)");
  }
}

AlphaSearchResult grid_search_alpha(const CorpusSplit& split, const TrainRunConfig& base,
                                    const std::vector<double>& alpha_values,
                                    const std::string& out_dir) {
  if (alpha_values.empty()) throw ValidationError("no alpha candidates given");
  AlphaSearchResult best;
  bool first = true;
  for (double alpha : alpha_values) {
    TrainRunConfig cfg = base;
    cfg.weights.alpha = alpha;
    const RunResult r = run_cached(split, cfg, out_dir, nullptr);
    const double score = (r.dev_ccc_v + r.dev_ccc_a) / 2.0;
    if (first || score > best.dev_score) {
      best.alpha = alpha;
      best.dev_score = score;
      first = false;
    }
  }
  return best;
}

std::string render_report_csv(const std::vector<ReportRow>& rows) {
  std::string out = "cell,mean_ccc_v,std_ccc_v,mean_ccc_a,std_ccc_a,n_seeds\n";
  for (const ReportRow& r : rows) {
    out += r.cell + "," + format_double(r.mean_ccc_v) + "," + format_double(r.std_ccc_v) +
           "," + format_double(r.mean_ccc_a) + "," + format_double(r.std_ccc_a) + "," +
           std::to_string(r.n_seeds) + "\n";
  }
  return out;
}

std::string render_comparison_csv(const std::string& cell_a, const std::string& cell_b,
                                  EmotionDim dimension, const TestResult& t) {
  std::string out = "cell_a,cell_b,dimension,statistic,p_one_sided,p_two_sided\n";
  out += cell_a + "," + cell_b + "," + to_string(dimension) + "," +
         format_double(t.statistic) + "," + format_double(t.p_one_sided) + "," +
         format_double(t.p_value) + "\n";
  return out;
}

}  // namespace cusemo
