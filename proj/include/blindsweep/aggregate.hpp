#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

#include "blindsweep/errors.hpp"

namespace blindsweep::aggregate {

// Variance in age space from a log-age prediction f and its variance output g:
// [exp(g^2) - 1] * exp(2 f + g^2).
inline double lognormal_variance(double f, double g) {
  if (g < 0.0 || std::isnan(g)) throw DomainError("lognormal_variance: g must be non-negative");
  const double g2 = g * g;
  return std::expm1(g2) * std::exp(2.0 * f + g2);
}

// Weighted mean with weights 1 / sigma^2. Zero-sigma entries dominate: if any
// are present the result is the plain mean of those entries.
inline double inverse_variance_mean(const std::vector<double>& xs, const std::vector<double>& sigmas) {
  if (xs.empty()) throw EstimationError("no usable clips");
  if (xs.size() != sigmas.size()) throw ArgumentError("inverse_variance_mean: length mismatch");
  double zero_sum = 0.0;
  int zero_n = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (sigmas[i] < 0.0 || std::isnan(sigmas[i])) throw DomainError("inverse_variance_mean: negative sigma");
    if (sigmas[i] == 0.0) {
      zero_sum += xs[i];
      ++zero_n;
    }
  }
  if (zero_n > 0) return zero_sum / zero_n;
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double w = 1.0 / (sigmas[i] * sigmas[i]);
    num += w * xs[i];
    den += w;
  }
  if (!(den > 0.0) || !std::isfinite(den)) {
    // Weights overflowed: fall back to the smallest sigma(s).
    const double m = *std::min_element(sigmas.begin(), sigmas.end());
    double s = 0.0;
    int n = 0;
    for (std::size_t i = 0; i < xs.size(); ++i)
      if (sigmas[i] == m) {
        s += xs[i];
        ++n;
      }
    return s / n;
  }
  return num / den;
}

inline double feedback_score(double g) {
  if (!(g > 0.0)) throw DomainError("feedback_score: variance must be positive");
  return 1.0 / g;
}

struct GaClipOutput {
  double log_age = 0.0;  // f
  double variance = 0.0;  // g
};

struct CaseEstimate {
  std::string visit_id;
  double mean_log_age = 0.0;
  double ga_days = 0.0;
  double p_noncephalic = 0.0;
  int n_clips = 0;
  int n_sweeps = 0;
  std::vector<double> feedback;  // per clip, in input order
  bool has_ga = false;
  bool has_presentation = false;
};

inline CaseEstimate case_ga_estimate(const std::vector<GaClipOutput>& clips) {
  if (clips.empty()) throw EstimationError("no usable clips");
  std::vector<double> xs, sigmas;
  CaseEstimate e;
  for (const auto& c : clips) {
    xs.push_back(c.log_age);
    sigmas.push_back(lognormal_variance(c.log_age, c.variance));
    e.feedback.push_back(c.variance == 0.0 ? std::numeric_limits<double>::infinity() : feedback_score(c.variance));
  }
  e.mean_log_age = inverse_variance_mean(xs, sigmas);
  e.ga_days = std::exp(e.mean_log_age);
  e.n_clips = static_cast<int>(clips.size());
  e.has_ga = true;
  return e;
}

inline double case_presentation_probability(const std::vector<double>& sweep_probs) {
  if (sweep_probs.empty()) throw EstimationError("no sweep probabilities");
  double s = 0.0;
  for (double p : sweep_probs) {
    if (!(p >= 0.0 && p <= 1.0)) throw DomainError("sweep probability outside [0, 1]");
    s += p;
  }
  return s / sweep_probs.size();
}

inline double median_of(std::vector<double> v) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline std::string estimate_header() {
  return "visit_id,ga_days,n_clips,p_noncephalic,min_feedback,median_feedback,max_feedback";
}

// visit_id, ga_days, n_clips, p_noncephalic, min/median/max feedback.
inline std::string estimate_record(const CaseEstimate& e) {
  char buf[256];
  auto num = [](double v, const char* fmt) {
    if (std::isnan(v)) return std::string("nan");
    char b[64];
    std::snprintf(b, sizeof b, fmt, v);
    return std::string(b);
  };
  const double fmin = e.feedback.empty() ? std::nan("") : *std::min_element(e.feedback.begin(), e.feedback.end());
  const double fmax = e.feedback.empty() ? std::nan("") : *std::max_element(e.feedback.begin(), e.feedback.end());
  std::snprintf(buf, sizeof buf, "%s,%s,%d,%s,%s,%s,%s", e.visit_id.c_str(),
                num(e.has_ga ? e.ga_days : std::nan(""), "%.4f").c_str(), e.n_clips,
                num(e.has_presentation ? e.p_noncephalic : std::nan(""), "%.6f").c_str(), num(fmin, "%.6g").c_str(),
                num(median_of(e.feedback), "%.6g").c_str(), num(fmax, "%.6g").c_str());
  return buf;
}

}  // namespace blindsweep::aggregate
