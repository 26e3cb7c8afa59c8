#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cusemo/agreement.hpp"
#include "cusemo/training.hpp"

namespace cusemo {

struct EvalCcc {
  double ccc_v = 0.0;
  double ccc_a = 0.0;
};

/// Eval-mode forward over every segment of the split; all unmasked predicted
/// and target frames are concatenated and one concordance per dimension is
/// computed on the concatenation. per_conversation switches to averaging
/// per-conversation concordances instead.
EvalCcc evaluate_global_ccc(const EmotionModel& model,
                            const std::vector<PreparedConversation>& split,
                            bool per_conversation = false);

/// Concordance of per-segment empathy predictions against per-conversation
/// targets across the split; absent when the model has no empathy head.
std::optional<double> evaluate_empathy_ccc(const EmotionModel& model,
                                           const std::vector<PreparedConversation>& split);

struct CellSpec {
  std::string name;
  TrainRunConfig config;  // seed field is overwritten per run
};

// The three ablation grids, in their reporting order.
std::vector<CellSpec> sampling_rate_grid(const TrainRunConfig& base);   // 500/200/100/40 ms
std::vector<CellSpec> segment_size_grid(const TrainRunConfig& base);    // 1500 s-cap pairs
std::vector<CellSpec> context_weight_grid(const TrainRunConfig& base);  // alpha/beta points

struct SeedRun {
  std::uint64_t seed = 0;
  RunResult result;
};

struct CellResult {
  std::string name;
  TrainRunConfig config;
  std::vector<SeedRun> runs;
};

struct ReportRow {
  std::string cell;
  double mean_ccc_v = 0.0;
  double std_ccc_v = 0.0;  // population std over seeds
  double mean_ccc_a = 0.0;
  double std_ccc_a = 0.0;
  std::size_t n_seeds = 0;
};

struct GridOutcome {
  std::vector<CellResult> cells;
  std::vector<ReportRow> report;
  std::vector<std::string> failures;  // per-run errors; the grid continues
  int cache_hits = 0;
  int runs_executed = 0;
};

/// Directory a run with this config lands in: out_dir/runs/<config-hash>.
std::string run_dir_for(const std::string& out_dir, const TrainRunConfig& config);

/// One training run, skipped when its result is already on disk.
RunResult run_cached(const CorpusSplit& split, const TrainRunConfig& config,
                     const std::string& out_dir, bool* cache_hit = nullptr);

/// Train every (cell, seed) pair. Completed runs are cached in
/// out_dir/runs/<config-hash>/ and never retrained; jobs > 1 executes fresh
/// runs in forked child processes.
GridOutcome run_cells(const std::vector<CellSpec>& cells, const CorpusSplit& split,
                      const std::vector<std::uint64_t>& seeds,
                      const std::string& out_dir, int jobs = 1);

/// Cache-only collection: assembles a GridOutcome from runs already on disk,
/// never training. Missing (cell, seed) results are listed as failures.
GridOutcome collect_cells(const std::vector<CellSpec>& cells,
                          const std::vector<std::uint64_t>& seeds,
                          const std::string& out_dir);

ReportRow aggregate_cell(const CellResult& cell);

/// Paired per-seed comparison of test concordances via the signed-rank test.
TestResult compare_cells(const CellResult& a, const CellResult& b, EmotionDim dimension);

struct AlphaSearchResult {
  double alpha = 0.0;
  double dev_score = 0.0;  // dev (ccc_v + ccc_a)/2 of the winning run
};

/// One run per candidate on the base seed; argmax of dev score (first wins
/// ties). Shares the run cache with the ablation grids.
AlphaSearchResult grid_search_alpha(const CorpusSplit& split, const TrainRunConfig& base,
                                    const std::vector<double>& alpha_values,
                                    const std::string& out_dir);

std::string render_report_csv(const std::vector<ReportRow>& rows);
std::string render_comparison_csv(const std::string& cell_a, const std::string& cell_b,
                                  EmotionDim dimension, const TestResult& t);

}  // namespace cusemo
