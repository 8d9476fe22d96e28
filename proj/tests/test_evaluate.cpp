#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include "blindsweep/evaluate.hpp"
#include "oracles.hpp"

using namespace blindsweep;
using namespace blindsweep::evaluate;

TEST(ErrorStats, Zeros) {
  const auto s = error_stats({0, 0, 0});
  EXPECT_EQ(s.mae, 0.0);
  EXPECT_EQ(s.me, 0.0);
}

TEST(ErrorStats, HandComputed) {
  const auto s = error_stats({1, -2, 3});
  EXPECT_DOUBLE_EQ(s.mae, 2.0);
  EXPECT_NEAR(s.me, 0.6667, 1e-4);
  EXPECT_NEAR(s.me_sd, std::sqrt(((1 - 2.0 / 3) * (1 - 2.0 / 3) + (-2 - 2.0 / 3) * (-2 - 2.0 / 3) +
                                  (3 - 2.0 / 3) * (3 - 2.0 / 3)) / 2.0),
              1e-12);
  EXPECT_DOUBLE_EQ(s.mae_sd, 1.0);
}

TEST(ErrorStats, SignFlipSymmetry) {
  const auto a = error_stats({1.5, -2, 3, 0.25}), b = error_stats({-1.5, 2, -3, -0.25});
  EXPECT_EQ(a.mae, b.mae);
  EXPECT_EQ(a.me, -b.me);
}

TEST(ErrorStats, EmptyIsArgumentError) { EXPECT_THROW(error_stats({}), ArgumentError); }

TEST(PairedDifference, IdenticalMethods) {
  const std::vector<double> e{1, -3, 2.5, 4};
  const auto d = paired_mae_difference_ci(e, e);
  EXPECT_EQ(d.mean, 0.0);
  EXPECT_LE(d.ci.lo, 0.0);
  EXPECT_GE(d.ci.hi, 0.0);
  EXPECT_EQ(d.ci.lo, -d.ci.hi);
}

TEST(PairedDifference, ConstantDifferenceDegenerate) {
  const auto d = paired_mae_difference_ci({1.0, 2.0, 3.0}, {2.4, 3.4, 4.4});
  EXPECT_NEAR(d.mean, -1.4, 1e-12);
  EXPECT_NEAR(d.ci.lo, -1.4, 1e-12);
  EXPECT_NEAR(d.ci.hi, -1.4, 1e-12);
}

TEST(PairedDifference, UsesAbsoluteErrorsAndTQuantile) {
  const auto d = paired_mae_difference_ci({-3, 1, 2, -5}, {1, 1, 1, 1});
  EXPECT_DOUBLE_EQ(d.mean, (2 + 0 + 1 + 4) / 4.0);
  const double sd = std::sqrt(((2 - 1.75) * (2 - 1.75) + 1.75 * 1.75 + 0.75 * 0.75 + 2.25 * 2.25) / 3.0);
  EXPECT_NEAR(d.sd, sd, 1e-12);
  EXPECT_NEAR(d.ci.hi - d.mean, 3.182446305284263 * sd / 2.0, 1e-9);
}

TEST(PairedDifference, TooFewPairs) {
  EXPECT_THROW(paired_mae_difference_ci({1}, {2}), ArgumentError);
  EXPECT_THROW(paired_mae_difference_ci({1, 2}, {2}), ArgumentError);
}

TEST(PairedDifference, CoverageNearNominal) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> a(0.0, 4.0), b(0.0, 5.0);
  // |N(0, s)| has mean s * sqrt(2 / pi).
  const double truth = (4.0 - 5.0) * std::sqrt(2.0 / std::numbers::pi);
  int covered = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> ea(40), eb(40);
    for (int i = 0; i < 40; ++i) {
      ea[i] = a(rng);
      eb[i] = b(rng);
    }
    const auto d = paired_mae_difference_ci(ea, eb);
    covered += d.ci.lo <= truth && truth <= d.ci.hi;
  }
  EXPECT_GE(covered, 930);
  EXPECT_LE(covered, 970);
}

TEST(NonInferiority, PublishedIntervals) {
  EXPECT_EQ(non_inferiority_verdict({-1.8, -0.9}), Verdict::non_inferior);
  EXPECT_EQ(non_inferiority_verdict({-1.0, 1.7}), Verdict::not_established);
  EXPECT_EQ(non_inferiority_verdict({-1.19, 0.67}), Verdict::non_inferior);
  EXPECT_EQ(non_inferiority_verdict({-1.0, 1.0}), Verdict::not_established);
}

TEST(NonInferiority, ShrinkingUpperBoundNeverFlipsBack) {
  for (double hi = 3.0; hi > -3.0; hi -= 0.01) {
    const auto v = non_inferiority_verdict({-5.0, hi});
    if (v == Verdict::non_inferior) {
      EXPECT_EQ(non_inferiority_verdict({-5.0, hi - 0.5}), Verdict::non_inferior);
    }
  }
}

TEST(Auc, PerfectSeparation) {
  const auto r = roc_auc_delong({0.9, 0.8, 0.3, 0.1}, {1, 1, 0, 0});
  EXPECT_EQ(r.auc, 1.0);
  EXPECT_EQ(r.variance, 0.0);
  EXPECT_EQ(r.ci.lo, 1.0);
  EXPECT_EQ(r.ci.hi, 1.0);
}

TEST(Auc, HandCountedPairs) {
  EXPECT_DOUBLE_EQ(roc_auc_delong({0.9, 0.4, 0.6, 0.2}, {1, 1, 0, 0}).auc, 0.75);
}

TEST(Auc, MatchesPairCountingOnAllSmallDatasets) {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> level(0, 4);
  for (int n = 2; n <= 8; ++n)
    for (int mask = 1; mask < (1 << n) - 1; ++mask) {
      std::vector<int> labels(n);
      std::vector<double> scores(n);
      for (int i = 0; i < n; ++i) {
        labels[i] = (mask >> i) & 1;
        scores[i] = level(rng) / 4.0;
      }
      ASSERT_EQ(roc_auc_delong(scores, labels).auc, oracle::auc_pairs(scores, labels));
    }
}

TEST(Auc, InvariantUnderMonotoneTransform) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> z(0, 1);
  std::vector<double> s(60), t(60);
  std::vector<int> l(60);
  for (int i = 0; i < 60; ++i) {
    l[i] = i % 3 == 0;
    s[i] = z(rng) + l[i];
    t[i] = std::exp(3 * s[i]) + 7;
  }
  const auto a = roc_auc_delong(s, l), b = roc_auc_delong(t, l);
  EXPECT_EQ(a.auc, b.auc);
  EXPECT_NEAR(a.variance, b.variance, 1e-15);
}

TEST(Auc, SingleClassIsArgumentError) {
  EXPECT_THROW(roc_auc_delong({0.1, 0.2}, {1, 1}), ArgumentError);
  EXPECT_THROW(roc_auc_delong({0.1, 0.2}, {0, 0}), ArgumentError);
}

TEST(Auc, DelongAgreesWithBootstrap) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> z(0, 1);
  std::vector<double> scores, pos, neg;
  std::vector<int> labels;
  for (int i = 0; i < 150; ++i) {
    pos.push_back(z(rng) + 1.0);
    neg.push_back(z(rng));
  }
  for (double v : pos) {
    scores.push_back(v);
    labels.push_back(1);
  }
  for (double v : neg) {
    scores.push_back(v);
    labels.push_back(0);
  }
  const auto r = roc_auc_delong(scores, labels);
  const auto [lo, hi] = oracle::bootstrap_auc_ci(pos, neg, 10000, 5);
  EXPECT_NEAR(r.ci.lo, lo, 0.01);
  EXPECT_NEAR(r.ci.hi, hi, 0.01);
}

TEST(ClopperPearson, AllSuccessesOfTwentyOne) {
  const auto ci = clopper_pearson(21, 21);
  EXPECT_NEAR(ci.lo, 0.839, 1e-3);
  EXPECT_EQ(ci.hi, 1.0);
}

TEST(ClopperPearson, ZeroSuccessesClosedForm) {
  const auto ci = clopper_pearson(0, 10);
  EXPECT_EQ(ci.lo, 0.0);
  EXPECT_NEAR(ci.hi, 1.0 - std::pow(0.025, 0.1), 1e-12);
  EXPECT_NEAR(ci.hi, 0.3085, 1e-4);
}

TEST(ClopperPearson, PublishedIntervals) {
  const auto spec = clopper_pearson(160, 168);
  EXPECT_NEAR(spec.lo, 0.908, 1e-3);
  EXPECT_NEAR(spec.hi, 0.979, 1e-3);
  const auto low_cost = clopper_pearson(27, 29);
  EXPECT_NEAR(low_cost.lo, 0.772, 1e-3);
  EXPECT_NEAR(low_cost.hi, 0.992, 1e-3);
  const auto sonographer = clopper_pearson(39, 43);
  EXPECT_NEAR(sonographer.lo, 0.779, 1e-3);
  EXPECT_NEAR(sonographer.hi, 0.974, 1e-3);
}

TEST(ClopperPearson, NestingAcrossLevels) {
  for (long n : {1L, 5L, 30L, 200L})
    for (long k = 0; k <= n; k += std::max(1L, n / 7)) {
      const auto a = clopper_pearson(k, n, 0.95), b = clopper_pearson(k, n, 0.99);
      EXPECT_LE(b.lo, a.lo);
      EXPECT_GE(b.hi, a.hi);
      EXPECT_LE(a.lo, static_cast<double>(k) / n);
      EXPECT_GE(a.hi, static_cast<double>(k) / n);
    }
}

TEST(ClopperPearson, RejectsOutOfRange) {
  EXPECT_THROW(clopper_pearson(-1, 5), ArgumentError);
  EXPECT_THROW(clopper_pearson(6, 5), ArgumentError);
  EXPECT_THROW(clopper_pearson(0, 0), ArgumentError);
}

TEST(SensSpec, HandCount) {
  const auto r = sensitivity_specificity({0.9, 0.2, 0.8, 0.1}, {1, 1, 0, 0}, 0.5);
  EXPECT_DOUBLE_EQ(*r.sensitivity, 0.5);
  EXPECT_DOUBLE_EQ(*r.specificity, 0.5);
}

TEST(SensSpec, AllCorrect) {
  const auto r = sensitivity_specificity({0.9, 0.7, 0.3, 0.1}, {1, 1, 0, 0}, 0.5);
  EXPECT_EQ(*r.sensitivity, 1.0);
  EXPECT_EQ(*r.specificity, 1.0);
}

TEST(SensSpec, ThresholdNearZeroPredictsAllPositive) {
  const auto r = sensitivity_specificity({0.9, 0.2, 0.8, 0.1}, {1, 1, 0, 0}, 1e-9);
  EXPECT_EQ(*r.sensitivity, 1.0);
  EXPECT_EQ(*r.specificity, 0.0);
}

TEST(SensSpec, ThresholdIsInclusive) {
  EXPECT_EQ(sensitivity_specificity({0.5}, {1}, 0.5).tp, 1);
}

TEST(SensSpec, NoPositivesIsUndefinedNotZero) {
  const auto r = sensitivity_specificity({0.3, 0.6}, {0, 0}, 0.5);
  EXPECT_FALSE(r.sensitivity.has_value());
  EXPECT_DOUBLE_EQ(*r.specificity, 0.5);
  EXPECT_EQ(format_optional(r.sensitivity), "undefined");
}

TEST(OperatingPoint, SeparableReturnsGapMidpoint) {
  const auto op = pick_operating_point({0.1, 0.2, 0.7, 0.9}, {0, 0, 1, 1});
  EXPECT_DOUBLE_EQ(op.threshold, 0.45);
  EXPECT_EQ(op.sensitivity, 1.0);
  EXPECT_EQ(op.specificity, 1.0);
}

TEST(OperatingPoint, AllEqualScoresIsDegenerate) {
  EXPECT_THROW(pick_operating_point({0.4, 0.4, 0.4}, {0, 1, 0}), ArgumentError);
}

TEST(OperatingPoint, SingleClassIsArgumentError) {
  EXPECT_THROW(pick_operating_point({0.1, 0.4}, {1, 1}), ArgumentError);
}

TEST(OperatingPoint, BeatsEveryCandidateThreshold) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> s(25);
    std::vector<int> l(25);
    for (int i = 0; i < 25; ++i) {
      l[i] = i < 8;
      s[i] = std::round(u(rng) * 20) / 20;
    }
    const auto op = pick_operating_point(s, l);
    const double best = std::abs(op.sensitivity - op.specificity);
    std::set<double> uniq(s.begin(), s.end());
    std::vector<double> sorted(uniq.begin(), uniq.end());
    for (std::size_t i = 0; i + 1 < sorted.size(); ++i) {
      const auto r = sensitivity_specificity(s, l, 0.5 * (sorted[i] + sorted[i + 1]));
      const double gap = std::abs(*r.sensitivity - *r.specificity);
      EXPECT_LE(best, gap + 1e-15);
      if (gap == best) EXPECT_GE(op.sensitivity, *r.sensitivity);
    }
  }
}

TEST(Calibration, ConstructedMonotoneCase) {
  std::vector<double> fb, err;
  for (int i = 1; i <= 100; ++i) {
    fb.push_back(i * 0.37);
    err.push_back(1.0 / (i * 0.37));
  }
  const auto bins = feedback_calibration_table(fb, err, 10);
  ASSERT_EQ(bins.size(), 10u);
  for (int b = 1; b < 10; ++b) {
    EXPECT_LT(bins[b].mae, bins[b - 1].mae);
    EXPECT_GT(bins[b].mean_feedback, bins[b - 1].mean_feedback);
  }
  EXPECT_NEAR(calibration_spearman(bins), -1.0, 1e-12);
}

TEST(Calibration, IndependentErrorsGiveFlatBins) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<double> fb(20000), err(20000);
  for (std::size_t i = 0; i < fb.size(); ++i) {
    fb[i] = u(rng);
    err[i] = u(rng);
  }
  for (const auto& b : feedback_calibration_table(fb, err, 10)) {
    EXPECT_EQ(b.n, 2000u);
    EXPECT_NEAR(b.mae, 0.5, 0.03);
  }
}

TEST(Calibration, TooFewPoints) {
  EXPECT_THROW(feedback_calibration_table({1, 2, 3}, {1, 2, 3}, 10), ArgumentError);
  EXPECT_THROW(feedback_calibration_table({1, 2, 3}, {1, 2}, 2), ArgumentError);
  EXPECT_THROW(feedback_calibration_table({1, 2, 3}, {1, 2, 3}, 1), ArgumentError);
}

TEST(Spearman, RanksWithTies) {
  EXPECT_NEAR(spearman({1, 2, 3, 4}, {10, 20, 30, 40}), 1.0, 1e-12);
  EXPECT_NEAR(spearman({1, 2, 3, 4}, {4, 3, 2, 1}), -1.0, 1e-12);
  EXPECT_EQ(average_ranks({5, 1, 5, 2}), (std::vector<double>{3.5, 1, 3.5, 2}));
  EXPECT_THROW(spearman({1, 1}, {1, 2}), ArgumentError);
}

TEST(VisitSampling, OneVisitPatient) {
  EXPECT_EQ(sample_one_visit_per_patient({{"A", "A1", 0}}, 3), (std::vector<std::size_t>{0}));
}

TEST(VisitSampling, OneVisitPerPatientDeterministic) {
  std::vector<VisitKey> v;
  for (int p = 0; p < 30; ++p)
    for (int k = 0; k <= p % 4; ++k) v.push_back({"P" + std::to_string(p), "V" + std::to_string(k), double(k)});
  const auto a = sample_one_visit_per_patient(v, 11);
  EXPECT_EQ(a.size(), 30u);
  std::set<std::string> seen;
  for (auto i : a) EXPECT_TRUE(seen.insert(v[i].patient_id).second);
  EXPECT_EQ(a, sample_one_visit_per_patient(v, 11));
  bool differs = false;
  for (std::uint64_t s = 12; s < 20 && !differs; ++s) differs = sample_one_visit_per_patient(v, s) != a;
  EXPECT_TRUE(differs);
}

TEST(VisitSampling, LatestMode) {
  std::vector<VisitKey> v{{"A", "A1", 100}, {"B", "B1", 50}, {"A", "A2", 180}, {"A", "A3", 120}};
  EXPECT_EQ(sample_one_visit_per_patient(v, 1, SampleMode::latest), (std::vector<std::size_t>{2, 1}));
}

TEST(Report, CsvHeaders) {
  std::ostringstream a, b, c;
  write_ga_table(a, {});
  write_presentation_table(b, {});
  write_calibration_table(c, {{0, 5, 1.5, 2.25}});
  EXPECT_EQ(a.str().substr(0, 35), "group,number,blind_sweep_mae,blind_");
  EXPECT_EQ(b.str().substr(0, 40), "subset,participants,malpresentations,auc");
  EXPECT_EQ(c.str(), "bin,mean_feedback,mae\n0,1.5,2.2500\n");
}
