#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "blindsweep/nn/graph.hpp"

namespace blindsweep::nn {

// Linear learning-rate ramp from lr0 at step 0 to lr_end at total_steps, flat afterwards.
struct LinearRamp {
  double lr0 = 0.0;
  double lr_end = 0.0;
  long total_steps = 1;

  static LinearRamp gestational_age() { return {4.58e-4, 4.58e-7, 1'000'000}; }
  static LinearRamp presentation() { return {3.14e-5, 3.14e-7, 300'000}; }

  // Same endpoints over a shorter run.
  LinearRamp rescaled(long steps) const { return {lr0, lr_end, steps}; }
};

inline double lr_at(long step, const LinearRamp& r) {
  if (step < 0) throw ArgumentError("learning-rate step must be non-negative");
  if (r.total_steps <= 0) throw ArgumentError("learning-rate ramp needs total_steps > 0");
  if (step >= r.total_steps) return r.lr_end;
  return r.lr0 + (r.lr_end - r.lr0) * (static_cast<double>(step) / static_cast<double>(r.total_steps));
}

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

// One decoupled-weight-decay Adam update on flat buffers; `step` is 1-based.
template <typename T>
void adamw_update(std::span<T> param, std::span<const T> grad, std::span<T> m, std::span<T> v,
                  long step, double lr, const AdamWConfig& cfg) {
  if (grad.size() != param.size() || m.size() != param.size() || v.size() != param.size())
    throw ShapeError("adamw: parameter, gradient and moment sizes differ");
  if (step < 1) throw ArgumentError("adamw step counter is 1-based");
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double gi = grad[i];
    const double mi = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
    const double vi = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
    m[i] = static_cast<T>(mi);
    v[i] = static_cast<T>(vi);
    const double mhat = mi / bc1;
    const double vhat = vi / bc2;
    const double p = param[i];
    param[i] = static_cast<T>(p - lr * (mhat / (std::sqrt(vhat) + cfg.eps) + cfg.weight_decay * p));
  }
}

template <typename T>
class AdamW {
 public:
  AdamW(ParameterSet<T>& params, AdamWConfig cfg) : params_(params), cfg_(cfg) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_.emplace_back(params[i].value.shape());
      v_.emplace_back(params[i].value.shape());
    }
  }

  void step(double lr) {
    ++t_;
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& p = params_[i];
      adamw_update<T>(p.value.values(), p.grad.values(), m_[i].values(), v_[i].values(), t_, lr,
                      cfg_);
    }
  }

  long steps() const { return t_; }
  const AdamWConfig& config() const { return cfg_; }
  const Tensor<T>& first_moment(std::size_t i) const { return m_[i]; }
  const Tensor<T>& second_moment(std::size_t i) const { return v_[i]; }

 private:
  ParameterSet<T>& params_;
  AdamWConfig cfg_;
  std::vector<Tensor<T>> m_, v_;
  long t_ = 0;
};

}  // namespace blindsweep::nn
