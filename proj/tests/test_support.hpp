#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "blindsweep/nn/tensor.hpp"

namespace testing_support {

template <typename T>
blindsweep::nn::Tensor<T> random_tensor(blindsweep::nn::Shape s, std::mt19937_64& rng,
                                        double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  blindsweep::nn::Tensor<T> t(s);
  for (auto& v : t.values()) v = static_cast<T>(u(rng));
  return t;
}

template <typename T>
double max_abs_diff(const blindsweep::nn::Tensor<T>& a, const blindsweep::nn::Tensor<T>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  return m;
}

template <typename T>
std::vector<T> to_vector(const blindsweep::nn::Tensor<T>& t) {
  return {t.values().begin(), t.values().end()};
}

}  // namespace testing_support
