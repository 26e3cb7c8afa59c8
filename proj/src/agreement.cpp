#include "cusemo/agreement.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cusemo/common.hpp"

namespace cusemo {
namespace {

constexpr double kTiny = 1e-12;

double phi(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

// Continued fraction for the incomplete beta, modified Lentz iteration.
double beta_cf(double a, double b, double x) {
  constexpr int kMaxIter = 300;
  constexpr double kEps = 1e-15;
  constexpr double kFpMin = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kFpMin) d = kFpMin;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::abs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::abs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) return h;
  }
  throw RuntimeFailure("incomplete beta continued fraction did not converge");
}

struct Moments {
  double mean = 0.0;
  double var = 0.0;  // population
};

Moments moments(const std::vector<double>& v) {
  Moments m;
  for (double x : v) m.mean += x;
  m.mean /= static_cast<double>(v.size());
  for (double x : v) m.var += (x - m.mean) * (x - m.mean);
  m.var /= static_cast<double>(v.size());
  return m;
}

// Midranks of |values|.
std::vector<double> midranks(const std::vector<double>& mags) {
  const std::size_t n = mags.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return mags[a] < mags[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && mags[order[j + 1]] == mags[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

void RatingMatrix::validate(bool require_complete) const {
  if (n_subjects < 2 || k_raters < 2) {
    throw ValidationError("rating matrix needs at least 2 subjects and 2 raters");
  }
  if (cells.size() != n_subjects * k_raters) {
    throw ValidationError("rating matrix cell count does not match its shape");
  }
  if (require_complete) {
    for (const auto& c : cells) {
      if (!c) throw ValidationError("statistic requires a complete rating matrix");
    }
  }
}

RatingMatrix RatingMatrix::from_columns(const std::vector<std::vector<double>>& columns) {
  if (columns.empty() || columns.front().empty()) {
    throw ValidationError("rating matrix needs at least one nonempty column");
  }
  RatingMatrix m;
  m.k_raters = columns.size();
  m.n_subjects = columns.front().size();
  for (const auto& col : columns) {
    if (col.size() != m.n_subjects) {
      throw ValidationError("rater columns have mismatched lengths");
    }
  }
  m.cells.resize(m.n_subjects * m.k_raters);
  for (std::size_t r = 0; r < m.k_raters; ++r) {
    for (std::size_t s = 0; s < m.n_subjects; ++s) m.at(s, r) = columns[r][s];
  }
  return m;
}

double regularized_incomplete_beta(double a, double b, double x) {
  if (a <= 0.0 || b <= 0.0) throw ValidationError("beta parameters must be positive");
  if (x < 0.0 || x > 1.0) throw ValidationError("beta argument outside [0, 1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                          a * std::log(x) + b * std::log1p(-x);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return std::exp(ln_front) * beta_cf(a, b, x) / a;
  }
  return 1.0 - std::exp(ln_front) * beta_cf(b, a, 1.0 - x) / b;
}

double student_t_two_sided_p(double t, double nu) {
  if (nu <= 0.0) throw ValidationError("degrees of freedom must be positive");
  if (std::isinf(t)) return 0.0;
  return regularized_incomplete_beta(nu / 2.0, 0.5, nu / (nu + t * t));
}

TestResult pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw ValidationError("paired series have different lengths");
  const std::size_t n = x.size();
  if (n < 3) throw ValidationError("correlation needs at least 3 pairs");
  const Moments mx = moments(x), my = moments(y);
  if (mx.var < kTiny || my.var < kTiny) {
    throw DegenerateInputError("correlation undefined for constant input");
  }
  double cov = 0.0;
  for (std::size_t i = 0; i < n; ++i) cov += (x[i] - mx.mean) * (y[i] - my.mean);
  cov /= static_cast<double>(n);
  double r = cov / std::sqrt(mx.var * my.var);
  r = std::clamp(r, -1.0, 1.0);

  TestResult result;
  result.statistic = r;
  result.n = static_cast<int>(n);
  const double nu = static_cast<double>(n - 2);
  if (std::abs(r) >= 1.0) {
    result.p_value = 0.0;
    result.p_one_sided = 0.0;
  } else {
    const double t = r * std::sqrt(nu / (1.0 - r * r));
    result.p_value = student_t_two_sided_p(t, nu);
    result.p_one_sided = result.p_value / 2.0;
  }
  return result;
}

double icc_single(const RatingMatrix& matrix, bool absolute_agreement) {
  matrix.validate(true);
  const double n = static_cast<double>(matrix.n_subjects);
  const double k = static_cast<double>(matrix.k_raters);

  double grand = 0.0;
  for (const auto& c : matrix.cells) grand += *c;
  grand /= n * k;

  std::vector<double> row_mean(matrix.n_subjects, 0.0);
  std::vector<double> col_mean(matrix.k_raters, 0.0);
  double ss_total = 0.0;
  for (std::size_t s = 0; s < matrix.n_subjects; ++s) {
    for (std::size_t r = 0; r < matrix.k_raters; ++r) {
      const double v = *matrix.at(s, r);
      row_mean[s] += v / k;
      col_mean[r] += v / n;
      ss_total += (v - grand) * (v - grand);
    }
  }
  if (ss_total < kTiny) {
    throw DegenerateInputError("ratings have zero total variance");
  }
  double ss_rows = 0.0, ss_cols = 0.0;
  for (double m : row_mean) ss_rows += k * (m - grand) * (m - grand);
  for (double m : col_mean) ss_cols += n * (m - grand) * (m - grand);
  const double ss_error = std::max(0.0, ss_total - ss_rows - ss_cols);

  const double ms_rows = ss_rows / (n - 1.0);
  const double ms_cols = ss_cols / (k - 1.0);
  const double ms_error = ss_error / ((n - 1.0) * (k - 1.0));

  double denom = ms_rows + (k - 1.0) * ms_error;
  if (absolute_agreement) denom += (k / n) * (ms_cols - ms_error);
  if (std::abs(denom) < kTiny) {
    throw DegenerateInputError("ratings have no between-subject or residual variance");
  }
  return (ms_rows - ms_error) / denom;
}

double krippendorff_alpha_interval(const RatingMatrix& matrix) {
  matrix.validate(false);

  // Pairable values live in units with >= 2 ratings.
  std::vector<double> pooled;
  double observed = 0.0;  // sum over units of 2 * m_u * s_u^2 (sample variance)
  std::size_t used_units = 0;
  for (std::size_t s = 0; s < matrix.n_subjects; ++s) {
    std::vector<double> unit;
    for (std::size_t r = 0; r < matrix.k_raters; ++r) {
      if (matrix.at(s, r)) unit.push_back(*matrix.at(s, r));
    }
    if (unit.size() < 2) continue;
    ++used_units;
    const double m_u = static_cast<double>(unit.size());
    const Moments mo = moments(unit);
    observed += 2.0 * m_u * mo.var * m_u / (m_u - 1.0);
    pooled.insert(pooled.end(), unit.begin(), unit.end());
  }
  if (used_units < 2) {
    throw ValidationError("alpha needs at least 2 units with 2 or more ratings");
  }
  const double n = static_cast<double>(pooled.size());
  const Moments pm = moments(pooled);
  const double d_e = 2.0 * pm.var * n / (n - 1.0);
  if (d_e < kTiny) {
    throw DegenerateInputError("all pairable ratings are identical");
  }
  const double d_o = observed / n;
  return 1.0 - d_o / d_e;
}

TestResult wilcoxon_signed_rank(const std::vector<double>& x,
                                const std::vector<double>& y, WilcoxonMode mode) {
  if (x.size() != y.size()) throw ValidationError("paired series have different lengths");
  std::vector<double> diffs;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - y[i];
    if (d != 0.0) diffs.push_back(d);
  }
  if (diffs.empty()) throw DegenerateInputError("all paired differences are zero");
  const std::size_t n = diffs.size();
  if (n < 5) throw ValidationError("signed-rank test needs >= 5 nonzero differences");

  std::vector<double> mags(n);
  for (std::size_t i = 0; i < n; ++i) mags[i] = std::abs(diffs[i]);
  const std::vector<double> ranks = midranks(mags);

  double w_pos = 0.0, w_neg = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    (diffs[i] > 0.0 ? w_pos : w_neg) += ranks[i];
  }

  TestResult result;
  result.statistic = std::min(w_pos, w_neg);
  result.n = static_cast<int>(n);

  const bool exact = mode == WilcoxonMode::kExact ||
                     (mode == WilcoxonMode::kAuto && n <= 12);
  if (exact) {
    if (n > 25) throw ValidationError("exact enumeration limited to n <= 25");
    // All 2^n sign assignments are equally likely under the null.
    std::size_t count_ge = 0, count_le = 0;
    const std::uint64_t total = std::uint64_t{1} << n;
    for (std::uint64_t bits = 0; bits < total; ++bits) {
      double w = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (bits & (std::uint64_t{1} << i)) w += ranks[i];
      }
      if (w >= w_pos - 1e-9) ++count_ge;
      if (w <= w_pos + 1e-9) ++count_le;
    }
    const double p_ge = static_cast<double>(count_ge) / static_cast<double>(total);
    const double p_le = static_cast<double>(count_le) / static_cast<double>(total);
    result.p_one_sided = w_pos >= w_neg ? p_ge : p_le;
    result.p_value = std::min(1.0, 2.0 * std::min(p_ge, p_le));
  } else {
    const double nd = static_cast<double>(n);
    const double mu = nd * (nd + 1.0) / 4.0;
    double tie_term = 0.0;
    std::size_t i = 0;
    std::vector<double> sorted = mags;
    std::sort(sorted.begin(), sorted.end());
    while (i < n) {
      std::size_t j = i;
      while (j + 1 < n && sorted[j + 1] == sorted[i]) ++j;
      const double t = static_cast<double>(j - i + 1);
      tie_term += (t * t * t - t) / 48.0;
      i = j + 1;
    }
    const double sigma = std::sqrt(nd * (nd + 1.0) * (2.0 * nd + 1.0) / 24.0 - tie_term);
    if (sigma < kTiny) throw DegenerateInputError("rank variance is zero");
    const double p_ge = 1.0 - phi((w_pos - 0.5 - mu) / sigma);
    const double p_le = phi((w_pos + 0.5 - mu) / sigma);
    result.p_one_sided = w_pos >= w_neg ? p_ge : p_le;
    result.p_value = std::min(1.0, 2.0 * std::min(p_ge, p_le));
  }
  return result;
}

std::string to_string(EmotionDim dim) {
  return dim == EmotionDim::kValence ? "valence" : "arousal";
}

EmotionDim emotion_dim_from_string(const std::string& s) {
  if (s == "valence") return EmotionDim::kValence;
  if (s == "arousal") return EmotionDim::kArousal;
  throw ValidationError("unknown dimension '" + s + "' (expected valence or arousal)");
}

ReliabilitySelection select_reliable(const std::vector<Conversation>& conversations,
                                     EmotionDim dimension, double threshold) {
  ReliabilitySelection out;
  for (const auto& conv : conversations) {
    if (conv.tracks.size() != 2) {
      throw ValidationError("conversation '" + conv.id +
                            "' does not have exactly 2 annotation tracks");
    }
    const AnnotationTrack& a = conv.tracks[0].second;
    const AnnotationTrack& b = conv.tracks[1].second;
    if (a.size() != b.size()) {
      throw ValidationError("conversation '" + conv.id +
                            "' has annotation tracks of different lengths");
    }
    const auto& col_a = dimension == EmotionDim::kValence ? a.valence : a.arousal;
    const auto& col_b = dimension == EmotionDim::kValence ? b.valence : b.arousal;

    ReliabilityRow row;
    row.id = conv.id;
    try {
      const double icc = icc_single(RatingMatrix::from_columns({col_a, col_b}));
      row.icc = icc;
      row.kept = icc > threshold;
      if (!row.kept) row.exclusion_reason = "icc below threshold";
    } catch (const DegenerateInputError& e) {
      row.kept = false;
      row.exclusion_reason = std::string("degenerate: ") + e.what();
    }
    if (row.kept) out.kept.push_back(conv);
    out.report.push_back(std::move(row));
  }
  return out;
}

}  // namespace cusemo
