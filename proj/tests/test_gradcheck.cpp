#include <gtest/gtest.h>

#include <random>

#include "blindsweep/nn/gradcheck.hpp"
#include "blindsweep/nn/layers.hpp"
#include "test_support.hpp"

using namespace blindsweep;
using namespace blindsweep::nn;
using testing_support::random_tensor;

namespace {

// Random linear functional of the output so every element contributes.
Var project(Graph<double>& g, Var y, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return dot_constant(g, y, random_tensor<double>(g.value(y).shape(), rng));
}

}  // namespace

TEST(GradCheck, QuadraticIsNearlyExact) {
  std::mt19937_64 rng(1);
  auto rep = finite_diff_check(
      [](Graph<double>& g, const std::vector<Var>& in) { return sum(g, square(g, in[0])); },
      {random_tensor<double>(Shape::vector(6), rng)});
  EXPECT_LT(rep.max_rel_error, 1e-9);
  EXPECT_EQ(rep.checked, 6u);
}

TEST(GradCheck, Conv2dRandomInstance) {
  std::mt19937_64 rng(2);
  auto rep = finite_diff_check(
      [](Graph<double>& g, const std::vector<Var>& in) {
        return project(g, conv2d(g, in[0], in[1], {2, Padding::same, 1}), 9);
      },
      {random_tensor<double>(Shape(1, 5, 4, 2), rng), random_tensor<double>(Shape(3, 3, 2, 3), rng)});
  EXPECT_LT(rep.max_rel_error, 1e-4) << rep.worst;
}

TEST(GradCheck, CorruptedGradientIsCaught) {
  std::mt19937_64 rng(3);
  // Gradient deliberately inflated by 10%.
  auto bad_square = [](Graph<double>& g, const std::vector<Var>& in) {
    const Tensor<double>& xv = g.value(in[0]);
    Tensor<double> y(xv.shape());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = xv[i] * xv[i];
    Var x = in[0];
    Var out = g.record(std::move(y), {x}, [x](Graph<double>& g, const Tensor<double>& gy) {
      const Tensor<double>& xv = g.value(x);
      Tensor<double>& gx = g.grad_buffer(x);
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += 1.1 * 2 * xv[i] * gy[i];
    });
    return sum(g, out);
  };
  auto rep = finite_diff_check(bad_square, {random_tensor<double>(Shape::vector(4), rng, 0.5, 1.0)});
  EXPECT_GT(rep.max_rel_error, 0.05);
  EXPECT_FALSE(rep.worst.empty());
}

TEST(GradCheck, ParameterCheckReportsWorstEntry) {
  ParameterSet<double> ps;
  ps.add("w", Tensor<double>(Shape::vector(3), 0.5));
  auto rep = finite_diff_check_params(ps, [&](Graph<double>& g) {
    return sum(g, square(g, g.param(ps.get("w"))));
  });
  EXPECT_LT(rep.max_rel_error, 1e-9);
  EXPECT_EQ(rep.checked, 3u);
  EXPECT_EQ(rep.worst.substr(0, 2), "w[");
}

TEST(GradCheck, RelativeErrorFloor) {
  EXPECT_EQ(gradient_rel_error(0.0, 0.0), 0.0);
  EXPECT_NEAR(gradient_rel_error(1.0, 1.1), 0.1 / 1.1, 1e-15);
  EXPECT_NEAR(gradient_rel_error(1e-9, 2e-9), 1e-9 / 1e-6, 1e-15);
}
