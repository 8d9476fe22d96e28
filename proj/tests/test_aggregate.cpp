#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "blindsweep/aggregate.hpp"
#include "oracles.hpp"

using namespace blindsweep;
using namespace blindsweep::aggregate;

TEST(LognormalVariance, ZeroVarianceIsZero) { EXPECT_EQ(lognormal_variance(5.0, 0.0), 0.0); }

TEST(LognormalVariance, UnitCase) { EXPECT_NEAR(lognormal_variance(0.0, 1.0), (std::exp(1.0) - 1) * std::exp(1.0), 1e-12); }

TEST(LognormalVariance, UnitCaseValue) { EXPECT_NEAR(lognormal_variance(0.0, 1.0), 4.6708, 1e-4); }

TEST(LognormalVariance, MatchesIndependentFormulaOnGrid) {
  for (double f = -1.0; f <= 6.0; f += 0.25)
    for (double g = 0.01; g <= 1.5; g += 0.07) {
      const double want = oracle::lognormal_variance(f, g);
      ASSERT_NEAR(lognormal_variance(f, g), want, 1e-12 * std::max(1.0, want)) << f << " " << g;
    }
}

TEST(LognormalVariance, NegativeVarianceIsDomainError) { EXPECT_THROW(lognormal_variance(1.0, -0.1), DomainError); }

TEST(InverseVarianceMean, EqualSigmaIsArithmeticMean) {
  EXPECT_DOUBLE_EQ(inverse_variance_mean({2, 4}, {0.7, 0.7}), 3.0);
}

TEST(InverseVarianceMean, HandWeighted) {
  EXPECT_NEAR(inverse_variance_mean({2, 4}, {1.0, 1.0 / std::sqrt(3.0)}), 3.5, 1e-12);
}

TEST(InverseVarianceMean, ZeroSigmaDominates) {
  EXPECT_EQ(inverse_variance_mean({2, 4, 9}, {1.0, 0.0, 0.5}), 4.0);
  EXPECT_EQ(inverse_variance_mean({2, 4, 9}, {0.0, 0.0, 0.5}), 3.0);
  EXPECT_NEAR(inverse_variance_mean({2, 4}, {1.0, 1e-9}), 4.0, 1e-12);
}

TEST(InverseVarianceMean, EmptyIsEstimationError) {
  EXPECT_THROW(inverse_variance_mean({}, {}), EstimationError);
  EXPECT_THROW(inverse_variance_mean({1.0}, {}), ArgumentError);
}

TEST(InverseVarianceMean, MatchesDirectWeightedMean) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> x(3.5, 5.8), s(0.05, 40.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> xs(1 + trial % 30), ss(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
      xs[i] = x(rng);
      ss[i] = s(rng);
    }
    ASSERT_NEAR(inverse_variance_mean(xs, ss), oracle::weighted_mean(xs, ss), 1e-12);
  }
}

TEST(InverseVarianceMean, BoundedPermutationAndScaleInvariant) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> x(-3, 3), s(0.1, 5);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> xs(7), ss(7);
    for (int i = 0; i < 7; ++i) {
      xs[i] = x(rng);
      ss[i] = s(rng);
    }
    const double m = inverse_variance_mean(xs, ss);
    EXPECT_GE(m, *std::min_element(xs.begin(), xs.end()) - 1e-12);
    EXPECT_LE(m, *std::max_element(xs.begin(), xs.end()) + 1e-12);
    auto xs2 = xs, ss2 = ss;
    std::reverse(xs2.begin(), xs2.end());
    std::reverse(ss2.begin(), ss2.end());
    EXPECT_NEAR(inverse_variance_mean(xs2, ss2), m, 1e-12);
    for (auto& v : ss2) v *= 2.0;
    EXPECT_NEAR(inverse_variance_mean(xs2, ss2), m, 1e-12);
  }
}

TEST(FeedbackScore, Values) {
  EXPECT_EQ(feedback_score(1.0), 1.0);
  EXPECT_EQ(feedback_score(0.5), 2.0);
  EXPECT_THROW(feedback_score(0.0), DomainError);
  EXPECT_THROW(feedback_score(-1.0), DomainError);
}

TEST(FeedbackScore, OrderReversesVariance) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.001, 3.0);
  std::vector<double> g(50);
  for (auto& v : g) v = u(rng);
  for (std::size_t i = 0; i < g.size(); ++i)
    for (std::size_t j = 0; j < g.size(); ++j)
      if (g[i] < g[j]) ASSERT_GT(feedback_score(g[i]), feedback_score(g[j]));
}

TEST(FeedbackScore, RankingMatchesWeightsForEqualPredictions) {
  const double f = std::log(150.0);
  std::vector<double> g{0.3, 0.05, 0.9, 0.2};
  for (std::size_t i = 0; i < g.size(); ++i)
    for (std::size_t j = 0; j < g.size(); ++j) {
      const double wi = 1.0 / std::pow(lognormal_variance(f, g[i]), 2);
      const double wj = 1.0 / std::pow(lognormal_variance(f, g[j]), 2);
      EXPECT_EQ(feedback_score(g[i]) > feedback_score(g[j]), wi > wj);
    }
}

TEST(CaseEstimate, SingleClip) {
  const auto e = case_ga_estimate({{std::log(140.0), 0.2}});
  EXPECT_NEAR(e.ga_days, 140.0, 1e-9);
  EXPECT_EQ(e.n_clips, 1);
  ASSERT_EQ(e.feedback.size(), 1u);
  EXPECT_DOUBLE_EQ(e.feedback[0], 5.0);
}

TEST(CaseEstimate, EqualVarianceClips) {
  EXPECT_NEAR(case_ga_estimate({{std::log(100.0), 0.3}, {std::log(100.0), 0.3}}).ga_days, 100.0, 1e-9);
}

TEST(CaseEstimate, MatchesChainedOracle) {
  std::vector<GaClipOutput> clips{{std::log(120.0), 0.1}, {std::log(150.0), 0.4}, {std::log(133.0), 0.05}};
  std::vector<double> xs, ss;
  for (const auto& c : clips) {
    xs.push_back(c.log_age);
    ss.push_back(oracle::lognormal_variance(c.log_age, c.variance));
  }
  EXPECT_NEAR(case_ga_estimate(clips).ga_days, std::exp(oracle::weighted_mean(xs, ss)), 1e-9);
}

TEST(CaseEstimate, ZeroClipsIsEstimationError) { EXPECT_THROW(case_ga_estimate({}), EstimationError); }

TEST(CaseEstimate, ZeroVarianceClipDominates) {
  const auto e = case_ga_estimate({{std::log(90.0), 0.0}, {std::log(200.0), 0.1}});
  EXPECT_NEAR(e.ga_days, 90.0, 1e-9);
  EXPECT_TRUE(std::isinf(e.feedback[0]));
}

TEST(PresentationProbability, Mean) {
  EXPECT_NEAR(case_presentation_probability({0.9, 0.7}), 0.8, 1e-12);
  EXPECT_EQ(case_presentation_probability({0.3, 0.3, 0.3}), 0.3);
  std::vector<double> p{0.11, 0.52, 0.93, 0.04, 0.65, 0.37};
  EXPECT_NEAR(case_presentation_probability(p), (0.11 + 0.52 + 0.93 + 0.04 + 0.65 + 0.37) / 6.0, 1e-12);
  EXPECT_THROW(case_presentation_probability({}), EstimationError);
  EXPECT_THROW(case_presentation_probability({1.2}), DomainError);
}

TEST(EstimateRecord, Fields) {
  auto e = case_ga_estimate({{std::log(140.0), 0.5}, {std::log(140.0), 0.25}, {std::log(140.0), 0.2}});
  e.visit_id = "P0001-V1";
  e.p_noncephalic = 0.125;
  e.has_presentation = true;
  EXPECT_EQ(estimate_record(e), "P0001-V1,140.0000,3,0.125000,2,4,5");
  EXPECT_EQ(estimate_header(), "visit_id,ga_days,n_clips,p_noncephalic,min_feedback,median_feedback,max_feedback");
}
