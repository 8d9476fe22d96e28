#include <gtest/gtest.h>

#include "gradient_suite.hpp"

using namespace gradient_suite;

namespace {

void expect_pass(const SuiteResult& r) {
  EXPECT_LT(r.worst, kTolerance) << r.name << " " << r.where;
  EXPECT_TRUE(r.sampling_ok) << r.name;
}

}  // namespace

TEST(GradientSuite, Conv2d) { expect_pass(conv2d_suite()); }
TEST(GradientSuite, DepthwiseConv) { expect_pass(depthwise_suite()); }
TEST(GradientSuite, ElementwiseActivations) {
  for (const auto& r : activation_suites()) expect_pass(r);
}
TEST(GradientSuite, ArithmeticAndReshaping) { expect_pass(arithmetic_suite()); }
TEST(GradientSuite, BiasAndDense) { expect_pass(dense_suite()); }
TEST(GradientSuite, DropoutWithFixedMask) { expect_pass(dropout_suite()); }
TEST(GradientSuite, ConvLstmStep) { expect_pass(conv_lstm_suite()); }
TEST(GradientSuite, InvertedResidualBlock) { expect_pass(inverted_residual_suite()); }
TEST(GradientSuite, Losses) { expect_pass(loss_suite()); }
