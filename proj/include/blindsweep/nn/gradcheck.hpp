#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "blindsweep/nn/graph.hpp"

namespace blindsweep::nn {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst;  // "<tensor>[<flat index>]"
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
  std::size_t checked = 0;
};

// Relative error with a floor on the denominator so near-zero gradients are
// compared in absolute terms.
inline double gradient_rel_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

namespace detail {
inline void note(GradCheckReport& rep, const std::string& name, std::size_t i, double a, double n,
                 double floor) {
  const double e = gradient_rel_error(a, n, floor);
  ++rep.checked;
  if (rep.worst.empty() || e > rep.max_rel_error) {
    rep.max_rel_error = e;
    rep.worst = name + "[" + std::to_string(i) + "]";
    rep.analytic_at_worst = a;
    rep.numeric_at_worst = n;
  }
}
}  // namespace detail

using ScalarOp = std::function<Var(Graph<double>&, const std::vector<Var>&)>;

// Central differences against recorded gradients for every element of every input.
inline GradCheckReport finite_diff_check(const ScalarOp& op, std::vector<Tensor<double>> inputs,
                                         double eps = 1e-5, double floor = 1e-6) {
  std::vector<Tensor<double>> analytic;
  {
    Graph<double> g;
    std::vector<Var> vars;
    for (const auto& t : inputs) vars.push_back(g.variable(t));
    Var out = op(g, vars);
    g.backward(out);
    for (Var v : vars) analytic.push_back(g.grad(v));
  }
  auto eval = [&]() {
    Graph<double> g(false);
    std::vector<Var> vars;
    for (const auto& t : inputs) vars.push_back(g.variable(t));
    return g.value(op(g, vars))[0];
  };
  GradCheckReport rep;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      const double orig = inputs[k][i];
      inputs[k][i] = orig + eps;
      const double up = eval();
      inputs[k][i] = orig - eps;
      const double down = eval();
      inputs[k][i] = orig;
      detail::note(rep, "input" + std::to_string(k), i, analytic[k][i], (up - down) / (2 * eps),
                   floor);
    }
  }
  return rep;
}

// Same check over every scalar of a parameter set; `loss` builds the graph and
// returns a scalar. It must be deterministic (fixed dropout masks etc.).
inline GradCheckReport finite_diff_check_params(ParameterSet<double>& params,
                                                const std::function<Var(Graph<double>&)>& loss,
                                                double eps = 1e-5, double floor = 1e-6) {
  params.zero_grad();
  {
    Graph<double> g;
    g.backward(loss(g));
  }
  std::vector<Tensor<double>> analytic;
  for (std::size_t k = 0; k < params.size(); ++k) analytic.push_back(params[k].grad);
  auto eval = [&]() {
    Graph<double> g(false);
    return g.value(loss(g))[0];
  };
  GradCheckReport rep;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& value = params[k].value;
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double orig = value[i];
      value[i] = orig + eps;
      const double up = eval();
      value[i] = orig - eps;
      const double down = eval();
      value[i] = orig;
      detail::note(rep, params[k].name, i, analytic[k][i], (up - down) / (2 * eps), floor);
    }
  }
  return rep;
}

}  // namespace blindsweep::nn
