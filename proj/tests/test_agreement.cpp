#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "cusemo/agreement.hpp"

using namespace cusemo;

namespace {

// ---- reference implementations, kept deliberately naive ---------------------

// Two-way ANOVA where the error sum of squares comes straight from the
// residuals v - row_mean - col_mean + grand instead of by subtraction.
struct IccOracle {
  double consistency = 0.0;
  double absolute = 0.0;

  explicit IccOracle(const RatingMatrix& m) {
    const double n = static_cast<double>(m.n_subjects);
    const double k = static_cast<double>(m.k_raters);
    double grand = 0.0;
    for (const auto& c : m.cells) grand += *c;
    grand /= n * k;
    std::vector<double> rm(m.n_subjects, 0.0), cm(m.k_raters, 0.0);
    for (std::size_t s = 0; s < m.n_subjects; ++s) {
      for (std::size_t r = 0; r < m.k_raters; ++r) {
        rm[s] += *m.at(s, r) / k;
        cm[r] += *m.at(s, r) / n;
      }
    }
    double ss_r = 0.0, ss_c = 0.0, ss_e = 0.0;
    for (double v : rm) ss_r += k * (v - grand) * (v - grand);
    for (double v : cm) ss_c += n * (v - grand) * (v - grand);
    for (std::size_t s = 0; s < m.n_subjects; ++s) {
      for (std::size_t r = 0; r < m.k_raters; ++r) {
        const double res = *m.at(s, r) - rm[s] - cm[r] + grand;
        ss_e += res * res;
      }
    }
    const double ms_r = ss_r / (n - 1.0);
    const double ms_c = ss_c / (k - 1.0);
    const double ms_e = ss_e / ((n - 1.0) * (k - 1.0));
    consistency = (ms_r - ms_e) / (ms_r + (k - 1.0) * ms_e);
    absolute = (ms_r - ms_e) / (ms_r + (k - 1.0) * ms_e + (k / n) * (ms_c - ms_e));
  }
};

// Alpha by enumerating every ordered pair, nothing clever.
double alpha_oracle(const RatingMatrix& m) {
  std::vector<double> pooled;
  double d_obs_sum = 0.0;
  for (std::size_t s = 0; s < m.n_subjects; ++s) {
    std::vector<double> unit;
    for (std::size_t r = 0; r < m.k_raters; ++r) {
      if (m.at(s, r)) unit.push_back(*m.at(s, r));
    }
    if (unit.size() < 2) continue;
    double pair_sum = 0.0;
    for (std::size_t i = 0; i < unit.size(); ++i) {
      for (std::size_t j = 0; j < unit.size(); ++j) {
        if (i != j) pair_sum += (unit[i] - unit[j]) * (unit[i] - unit[j]);
      }
    }
    d_obs_sum += pair_sum / (static_cast<double>(unit.size()) - 1.0);
    pooled.insert(pooled.end(), unit.begin(), unit.end());
  }
  const double n = static_cast<double>(pooled.size());
  double exp_sum = 0.0;
  for (std::size_t i = 0; i < pooled.size(); ++i) {
    for (std::size_t j = 0; j < pooled.size(); ++j) {
      if (i != j) exp_sum += (pooled[i] - pooled[j]) * (pooled[i] - pooled[j]);
    }
  }
  const double d_o = d_obs_sum / n;
  const double d_e = exp_sum / (n * (n - 1.0));
  return 1.0 - d_o / d_e;
}

// Exhaustive signed-rank null: every one of the 2^n sign assignments.
struct WilcoxonOracle {
  double statistic;
  double p_one_sided;
  double p_two_sided;

  WilcoxonOracle(const std::vector<double>& x, const std::vector<double>& y) {
    std::vector<double> d;
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (x[i] != y[i]) d.push_back(x[i] - y[i]);
    }
    const std::size_t n = d.size();
    std::vector<double> mags(n), ranks(n);
    for (std::size_t i = 0; i < n; ++i) mags[i] = std::abs(d[i]);
    for (std::size_t i = 0; i < n; ++i) {
      double below = 0.0, equal = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        if (mags[j] < mags[i]) below += 1.0;
        if (mags[j] == mags[i]) equal += 1.0;
      }
      ranks[i] = below + (equal + 1.0) / 2.0;  // midrank
    }
    double w_pos = 0.0, w_neg = 0.0;
    for (std::size_t i = 0; i < n; ++i) (d[i] > 0.0 ? w_pos : w_neg) += ranks[i];
    statistic = std::min(w_pos, w_neg);

    std::uint64_t ge = 0, le = 0;
    const std::uint64_t total = std::uint64_t{1} << n;
    for (std::uint64_t bits = 0; bits < total; ++bits) {
      double w = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (bits >> i & 1) w += ranks[i];
      }
      if (w >= w_pos - 1e-9) ++ge;
      if (w <= w_pos + 1e-9) ++le;
    }
    const double p_ge = static_cast<double>(ge) / static_cast<double>(total);
    const double p_le = static_cast<double>(le) / static_cast<double>(total);
    p_one_sided = w_pos >= w_neg ? p_ge : p_le;
    p_two_sided = std::min(1.0, 2.0 * std::min(p_ge, p_le));
  }
};

RatingMatrix random_complete(std::mt19937_64& rng, std::size_t n, std::size_t k) {
  std::uniform_real_distribution<double> val(0.0, 10.0);
  std::vector<std::vector<double>> cols(k, std::vector<double>(n));
  for (auto& col : cols) {
    for (auto& v : col) v = val(rng);
  }
  return RatingMatrix::from_columns(cols);
}

}  // namespace

TEST_CASE("incomplete beta matches closed-form polynomials") {
  for (double x : {0.05, 0.3, 0.5, 0.77, 0.99}) {
    CHECK(regularized_incomplete_beta(1.0, 1.0, x) == doctest::Approx(x).epsilon(1e-12));
    CHECK(regularized_incomplete_beta(2.0, 2.0, x) ==
          doctest::Approx(3.0 * x * x - 2.0 * x * x * x).epsilon(1e-12));
    CHECK(regularized_incomplete_beta(3.0, 2.0, x) ==
          doctest::Approx(4.0 * std::pow(x, 3) - 3.0 * std::pow(x, 4)).epsilon(1e-12));
    // symmetry I_x(a,b) = 1 - I_{1-x}(b,a)
    CHECK(regularized_incomplete_beta(2.5, 4.0, x) ==
          doctest::Approx(1.0 - regularized_incomplete_beta(4.0, 2.5, 1.0 - x)).epsilon(1e-12));
  }
  for (double a : {0.5, 1.5, 7.0}) {
    CHECK(regularized_incomplete_beta(a, a, 0.5) == doctest::Approx(0.5).epsilon(1e-12));
  }
  CHECK(regularized_incomplete_beta(2.0, 3.0, 0.0) == 0.0);
  CHECK(regularized_incomplete_beta(2.0, 3.0, 1.0) == 1.0);
  CHECK_THROWS_AS(regularized_incomplete_beta(0.0, 1.0, 0.5), ValidationError);
  CHECK_THROWS_AS(regularized_incomplete_beta(1.0, 1.0, 1.5), ValidationError);
}

TEST_CASE("student t tail probabilities match closed forms and tables") {
  // nu = 1 is a Cauchy: P(|T| > t) = 1 - (2/pi) atan(t)
  for (double t : {0.5, 1.0, 3.0}) {
    CHECK(student_t_two_sided_p(t, 1.0) ==
          doctest::Approx(1.0 - 2.0 / std::numbers::pi * std::atan(t)).epsilon(1e-10));
  }
  // nu = 2 has the closed form P(|T| > t) = 1 - t / sqrt(2 + t^2)
  for (double t : {0.8, 1.5, 4.0}) {
    CHECK(student_t_two_sided_p(t, 2.0) ==
          doctest::Approx(1.0 - t / std::sqrt(2.0 + t * t)).epsilon(1e-10));
  }
  // textbook critical values
  CHECK(student_t_two_sided_p(2.228139, 10.0) == doctest::Approx(0.05).epsilon(1e-5));
  CHECK(student_t_two_sided_p(2.570582, 5.0) == doctest::Approx(0.05).epsilon(1e-5));
  CHECK(student_t_two_sided_p(0.0, 7.0) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("pearson reproduces a hand-computed correlation") {
  const auto res = pearson({1.0, 2.0, 3.0, 4.0}, {1.0, 3.0, 2.0, 4.0});
  CHECK(res.statistic == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(res.n == 4);
  CHECK(res.p_one_sided == doctest::Approx(res.p_value / 2.0).epsilon(1e-12));
}

TEST_CASE("pearson matches a sum-form oracle on random data") {
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> val(-5.0, 5.0);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 3 + rng() % 40;
    std::vector<double> x(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = val(rng);
      y[i] = val(rng);
    }
    double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
      sx += x[i];
      sy += y[i];
      sxx += x[i] * x[i];
      syy += y[i] * y[i];
      sxy += x[i] * y[i];
    }
    const double nd = static_cast<double>(n);
    const double r = (nd * sxy - sx * sy) /
                     std::sqrt((nd * sxx - sx * sx) * (nd * syy - sy * sy));
    const auto res = pearson(x, y);
    REQUIRE(std::abs(res.statistic - r) < 1e-9);
    REQUIRE(std::abs(res.statistic) <= 1.0);
  }
}

TEST_CASE("pearson is symmetric, affine invariant, and exact on linear data") {
  const std::vector<double> x = {0.4, -1.2, 3.3, 2.0, -0.7, 1.1};
  const std::vector<double> y = {1.0, 0.2, 2.8, 1.9, 0.4, 1.5};
  CHECK(pearson(x, y).statistic == doctest::Approx(pearson(y, x).statistic).epsilon(1e-12));

  std::vector<double> scaled(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) scaled[i] = 2.5 * x[i] - 7.0;
  CHECK(pearson(scaled, y).statistic == doctest::Approx(pearson(x, y).statistic).epsilon(1e-12));

  std::vector<double> inv(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) inv[i] = -x[i];
  CHECK(pearson(inv, y).statistic == doctest::Approx(-pearson(x, y).statistic).epsilon(1e-12));

  std::vector<double> lin(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) lin[i] = 3.0 * x[i] - 1.0;
  const auto perfect = pearson(x, lin);
  CHECK(perfect.statistic == 1.0);
  CHECK(perfect.p_value == 0.0);
}

TEST_CASE("pearson rejects degenerate input") {
  CHECK_THROWS_AS(pearson({1.0, 1.0, 1.0}, {1.0, 2.0, 3.0}), DegenerateInputError);
  CHECK_THROWS_AS(pearson({1.0, 2.0}, {1.0, 2.0}), ValidationError);
  CHECK_THROWS_AS(pearson({1.0, 2.0, 3.0}, {1.0, 2.0}), ValidationError);
}

TEST_CASE("icc agrees with the residual-form oracle on random matrices") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng() % 11;
    const std::size_t k = 2 + rng() % 5;
    const RatingMatrix m = random_complete(rng, n, k);
    const IccOracle oracle(m);
    REQUIRE(std::abs(icc_single(m) - oracle.consistency) < 1e-9);
    REQUIRE(std::abs(icc_single(m, true) - oracle.absolute) < 1e-9);
  }
}

TEST_CASE("icc reproduces the classic six-subject four-judge example") {
  const RatingMatrix m = RatingMatrix::from_columns({{9, 6, 8, 7, 10, 6},
                                                     {2, 1, 4, 1, 5, 2},
                                                     {5, 3, 6, 2, 6, 4},
                                                     {8, 2, 8, 6, 9, 7}});
  CHECK(icc_single(m) == doctest::Approx(0.714841).epsilon(1e-4));
  CHECK(icc_single(m, true) == doctest::Approx(0.289764).epsilon(1e-4));
}

TEST_CASE("consistency icc forgives a constant rater offset, absolute does not") {
  const std::vector<double> base = {3.1, 5.7, 1.2, 8.8, 4.4, 6.0};
  std::vector<double> shifted(base.size());
  for (std::size_t i = 0; i < base.size(); ++i) shifted[i] = base[i] + 2.0;
  const RatingMatrix m = RatingMatrix::from_columns({base, shifted});
  CHECK(icc_single(m) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(icc_single(m, true) < 1.0);

  const RatingMatrix same = RatingMatrix::from_columns({base, base});
  CHECK(icc_single(same) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(icc_single(same, true) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("icc validates shape and rejects constant ratings") {
  RatingMatrix m = RatingMatrix::from_columns({{1.0, 1.0}, {1.0, 1.0}});
  CHECK_THROWS_AS(icc_single(m), DegenerateInputError);

  RatingMatrix incomplete = RatingMatrix::from_columns({{1.0, 2.0}, {3.0, 4.0}});
  incomplete.at(0, 1).reset();
  CHECK_THROWS_AS(icc_single(incomplete), ValidationError);

  RatingMatrix tiny;
  tiny.n_subjects = 1;
  tiny.k_raters = 2;
  tiny.cells = {1.0, 2.0};
  CHECK_THROWS_AS(icc_single(tiny), ValidationError);
  CHECK_THROWS_AS(RatingMatrix::from_columns({{1.0, 2.0}, {1.0}}), ValidationError);
}

TEST_CASE("alpha matches the pair-enumeration oracle with and without gaps") {
  std::mt19937_64 rng(29);
  std::uniform_real_distribution<double> val(0.0, 10.0);
  int done = 0;
  while (done < 100) {
    const std::size_t n = 3 + rng() % 10;
    const std::size_t k = 2 + rng() % 4;
    RatingMatrix m;
    m.n_subjects = n;
    m.k_raters = k;
    m.cells.resize(n * k);
    std::size_t usable = 0;
    for (std::size_t s = 0; s < n; ++s) {
      std::size_t filled = 0;
      for (std::size_t r = 0; r < k; ++r) {
        if (rng() % 10 < 8) {
          m.at(s, r) = val(rng);
          ++filled;
        }
      }
      if (filled >= 2) ++usable;
    }
    if (usable < 2) continue;
    ++done;
    REQUIRE(std::abs(krippendorff_alpha_interval(m) - alpha_oracle(m)) < 1e-9);
  }
}

TEST_CASE("alpha reproduces a tiny hand-worked case") {
  // units {1,2} and {3,4}: observed distance 1, expected 10/3, alpha = 7/10
  const RatingMatrix m = RatingMatrix::from_columns({{1.0, 3.0}, {2.0, 4.0}});
  CHECK(krippendorff_alpha_interval(m) == doctest::Approx(0.7).epsilon(1e-12));
}

TEST_CASE("alpha is affine invariant and one for perfect agreement") {
  std::mt19937_64 rng(57);
  const RatingMatrix m = random_complete(rng, 8, 3);
  RatingMatrix scaled = m;
  for (auto& c : scaled.cells) c = 3.0 * *c - 20.0;
  CHECK(krippendorff_alpha_interval(scaled) ==
        doctest::Approx(krippendorff_alpha_interval(m)).epsilon(1e-10));

  const std::vector<double> col = {1.0, 5.0, 2.0, 9.0};
  CHECK(krippendorff_alpha_interval(RatingMatrix::from_columns({col, col})) ==
        doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("alpha rejects unusable matrices") {
  RatingMatrix m = RatingMatrix::from_columns({{1.0, 2.0, 3.0}, {2.0, 3.0, 4.0}});
  m.at(0, 1).reset();
  m.at(1, 0).reset();  // only one unit keeps two ratings
  CHECK_THROWS_AS(krippendorff_alpha_interval(m), ValidationError);

  const RatingMatrix constant = RatingMatrix::from_columns({{2.0, 2.0}, {2.0, 2.0}});
  CHECK_THROWS_AS(krippendorff_alpha_interval(constant), DegenerateInputError);
}

TEST_CASE("signed rank test equals full enumeration for small n") {
  std::mt19937_64 rng(71);
  std::uniform_real_distribution<double> val(-3.0, 3.0);
  for (std::size_t n = 5; n <= 10; ++n) {
    for (int trial = 0; trial < 8; ++trial) {
      std::vector<double> x(n), y(n);
      for (std::size_t i = 0; i < n; ++i) {
        x[i] = val(rng);
        // half the trials use quantized values to force rank ties
        y[i] = trial % 2 == 0 ? val(rng) : x[i] + std::round(val(rng));
      }
      bool all_zero = true;
      std::size_t nonzero = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (x[i] != y[i]) ++nonzero;
      }
      all_zero = nonzero == 0;
      if (all_zero || nonzero < 5) continue;
      const WilcoxonOracle oracle(x, y);
      const TestResult res = wilcoxon_signed_rank(x, y);
      REQUIRE(std::abs(res.statistic - oracle.statistic) < 1e-12);
      REQUIRE(std::abs(res.p_one_sided - oracle.p_one_sided) < 1e-12);
      REQUIRE(std::abs(res.p_value - oracle.p_two_sided) < 1e-12);
    }
  }
}

TEST_CASE("six uniformly positive differences give the minimal exact p") {
  const std::vector<double> x = {2.0, 3.0, 4.0, 5.0, 6.0, 7.0};
  const std::vector<double> y = {1.0, 1.5, 1.0, 2.0, 2.5, 1.0};
  const TestResult res = wilcoxon_signed_rank(x, y);
  CHECK(res.statistic == 0.0);
  CHECK(res.n == 6);
  CHECK(res.p_one_sided == doctest::Approx(1.0 / 64.0).epsilon(1e-12));
  CHECK(res.p_value == doctest::Approx(2.0 / 64.0).epsilon(1e-12));
}

TEST_CASE("normal approximation stays close to the exact tail") {
  std::mt19937_64 rng(83);
  std::uniform_real_distribution<double> val(-2.0, 2.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> x(14), y(14);
    for (std::size_t i = 0; i < x.size(); ++i) {
      x[i] = val(rng);
      y[i] = val(rng) + 0.4;
    }
    const TestResult exact = wilcoxon_signed_rank(x, y, WilcoxonMode::kExact);
    const TestResult approx = wilcoxon_signed_rank(x, y, WilcoxonMode::kApprox);
    CHECK(exact.statistic == approx.statistic);
    REQUIRE(std::abs(exact.p_value - approx.p_value) < 0.02);
    REQUIRE(std::abs(exact.p_one_sided - approx.p_one_sided) < 0.02);
  }
}

TEST_CASE("signed rank test drops zero differences and validates input") {
  // 8 pairs, 3 of them tied: n counts only nonzero differences
  const std::vector<double> x = {1, 2, 3, 4, 5, 6, 7, 8};
  const std::vector<double> y = {1, 2, 3, 5, 3, 8, 5, 6};
  CHECK(wilcoxon_signed_rank(x, y).n == 5);

  CHECK_THROWS_AS(wilcoxon_signed_rank({1, 2, 3}, {1, 2}), ValidationError);
  CHECK_THROWS_AS(wilcoxon_signed_rank({1, 2, 3}, {1, 2, 3}), DegenerateInputError);
  CHECK_THROWS_AS(wilcoxon_signed_rank({1, 2, 3, 4, 5}, {1, 2, 3, 4, 0}), ValidationError);
  const std::vector<double> big_x(30, 1.0), big_y(30, 0.0);
  CHECK_THROWS_AS(wilcoxon_signed_rank(big_x, big_y, WilcoxonMode::kExact), ValidationError);
}

TEST_CASE("dimension names round trip and reject junk") {
  CHECK(to_string(EmotionDim::kValence) == "valence");
  CHECK(to_string(EmotionDim::kArousal) == "arousal");
  CHECK(emotion_dim_from_string("valence") == EmotionDim::kValence);
  CHECK(emotion_dim_from_string("arousal") == EmotionDim::kArousal);
  CHECK_THROWS_AS(emotion_dim_from_string("Valence"), ValidationError);
}

TEST_CASE("reliability selection keeps agreeing pairs and reports the rest") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> val(-800.0, 800.0);
  auto make_conv = [&](const std::string& id, double noise, bool constant) {
    Conversation c;
    c.id = id;
    AnnotationTrack a, b;
    a.period_ms = b.period_ms = 500;
    for (int i = 0; i < 30; ++i) {
      const double v = constant ? 100.0 : val(rng);
      const double w = constant ? 100.0 : val(rng);
      a.valence.push_back(v);
      a.arousal.push_back(w);
      b.valence.push_back(std::clamp(v + noise * val(rng) / 800.0, -1000.0, 1000.0));
      b.arousal.push_back(std::clamp(w + noise * val(rng) / 800.0, -1000.0, 1000.0));
    }
    c.tracks = {{"a1", a}, {"a2", b}};
    return c;
  };

  const Conversation good = make_conv("good", 10.0, false);
  const Conversation bad = make_conv("bad", 2000.0, false);
  const Conversation flat = make_conv("flat", 0.0, true);

  const auto sel = select_reliable({good, bad, flat}, EmotionDim::kValence, 0.7);
  REQUIRE(sel.kept.size() == 1);
  CHECK(sel.kept[0].id == "good");
  REQUIRE(sel.report.size() == 3);
  CHECK(sel.report[0].kept);
  CHECK(sel.report[0].exclusion_reason.empty());
  CHECK(*sel.report[0].icc > 0.99);
  CHECK_FALSE(sel.report[1].kept);
  CHECK(sel.report[1].exclusion_reason == "icc below threshold");
  CHECK_FALSE(sel.report[2].kept);
  CHECK(sel.report[2].exclusion_reason.substr(0, 11) == "degenerate:");
  CHECK_FALSE(sel.report[2].icc.has_value());

  // the threshold is strict: a conversation sitting exactly on it is dropped
  const double exact_icc = *sel.report[0].icc;
  const auto strict = select_reliable({good}, EmotionDim::kValence, exact_icc);
  CHECK(strict.kept.empty());

  Conversation lopsided = good;
  lopsided.tracks.pop_back();
  CHECK_THROWS_AS(select_reliable({lopsided}, EmotionDim::kValence, 0.7), ValidationError);
}
