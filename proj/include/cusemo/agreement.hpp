#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "cusemo/corpus.hpp"

namespace cusemo {

/// n_subjects x k_raters grid; absent cells are allowed only where the
/// consuming statistic tolerates them (Krippendorff does, ICC/Pearson don't).
struct RatingMatrix {
  std::size_t n_subjects = 0;
  std::size_t k_raters = 0;
  std::vector<std::optional<double>> cells;  // row-major

  std::optional<double>& at(std::size_t subject, std::size_t rater) {
    return cells[subject * k_raters + rater];
  }
  const std::optional<double>& at(std::size_t subject, std::size_t rater) const {
    return cells[subject * k_raters + rater];
  }
  void validate(bool require_complete) const;

  static RatingMatrix from_columns(const std::vector<std::vector<double>>& columns);
};

struct TestResult {
  double statistic = 0.0;
  double p_value = 1.0;  // two-sided
  double p_one_sided = 1.0;
  int n = 0;
};

/// Regularized incomplete beta I_x(a, b), continued-fraction evaluation.
double regularized_incomplete_beta(double a, double b, double x);

/// Two-sided tail probability of Student's t with nu degrees of freedom.
double student_t_two_sided_p(double t, double nu);

/// Sample Pearson r with a two-sided p-value from the exact t reference
/// distribution on n-2 degrees of freedom.
TestResult pearson(const std::vector<double>& x, const std::vector<double>& y);

/// Single-measure intraclass correlation from a two-way ANOVA decomposition.
/// Default is the consistency form ICC(3,1); absolute_agreement switches to
/// ICC(A,1), which charges rater mean offsets against agreement.
double icc_single(const RatingMatrix& matrix, bool absolute_agreement = false);

/// Krippendorff's alpha with the squared-difference (interval) metric.
double krippendorff_alpha_interval(const RatingMatrix& matrix);

enum class WilcoxonMode { kAuto, kExact, kApprox };

/// Paired signed-rank test with midrank ties. Exact enumeration of all 2^n
/// sign patterns up to n = 12, then a tie-corrected normal approximation with
/// continuity correction. statistic = min(W+, W-).
TestResult wilcoxon_signed_rank(const std::vector<double>& x,
                                const std::vector<double>& y,
                                WilcoxonMode mode = WilcoxonMode::kAuto);

enum class EmotionDim { kValence, kArousal };

std::string to_string(EmotionDim dim);
EmotionDim emotion_dim_from_string(const std::string& s);

struct ReliabilityRow {
  std::string id;
  std::optional<double> icc;
  bool kept = false;
  std::string exclusion_reason;  // empty when kept
};

struct ReliabilitySelection {
  std::vector<Conversation> kept;
  std::vector<ReliabilityRow> report;
};

/// Keep conversations whose two annotator tracks agree with ICC strictly
/// above the threshold on the chosen dimension. Degenerate conversations
/// (constant ratings) are excluded with a reason instead of failing the run.
ReliabilitySelection select_reliable(const std::vector<Conversation>& conversations,
                                     EmotionDim dimension, double threshold);

}  // namespace cusemo
