#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include <boost/math/distributions/beta.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "blindsweep/errors.hpp"

namespace blindsweep::evaluate {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

inline void check_level(double level) {
  if (!(level > 0.0 && level < 1.0)) throw ArgumentError("confidence level must lie in (0, 1)");
}

inline double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Sample standard deviation (n - 1); 0 for a single value.
inline double sample_sd(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

// ---------------------------------------------------------------------------
// Gestational-age errors
// ---------------------------------------------------------------------------

struct ErrorStats {
  std::size_t n = 0;
  double mae = 0.0;
  double mae_sd = 0.0;
  double me = 0.0;
  double me_sd = 0.0;
};

inline ErrorStats error_stats(const std::vector<double>& errors) {
  if (errors.empty()) throw ArgumentError("error_stats: no errors");
  std::vector<double> abs_err(errors.size());
  std::transform(errors.begin(), errors.end(), abs_err.begin(), [](double e) { return std::abs(e); });
  return {errors.size(), mean_of(abs_err), sample_sd(abs_err), mean_of(errors), sample_sd(errors)};
}

struct PairedDifference {
  std::size_t n = 0;
  double mean = 0.0;
  double sd = 0.0;
  Interval ci;
};

// d_i = |a_i| - |b_i|; t interval on the mean difference.
inline PairedDifference paired_mae_difference_ci(const std::vector<double>& errors_a,
                                                 const std::vector<double>& errors_b, double level = 0.95) {
  check_level(level);
  if (errors_a.size() != errors_b.size()) throw ArgumentError("paired errors differ in length");
  if (errors_a.size() < 2) throw ArgumentError("paired comparison needs at least 2 pairs");
  std::vector<double> d(errors_a.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = std::abs(errors_a[i]) - std::abs(errors_b[i]);
  PairedDifference r;
  r.n = d.size();
  r.mean = mean_of(d);
  r.sd = sample_sd(d);
  const boost::math::students_t t(static_cast<double>(r.n - 1));
  const double half = boost::math::quantile(t, 0.5 + level / 2.0) * r.sd / std::sqrt(static_cast<double>(r.n));
  r.ci = {r.mean - half, r.mean + half};
  return r;
}

enum class Verdict { non_inferior, not_established };

inline std::string to_string(Verdict v) { return v == Verdict::non_inferior ? "non_inferior" : "not_established"; }

inline Verdict non_inferiority_verdict(const Interval& diff_ci, double margin_days = 1.0) {
  return diff_ci.hi < margin_days ? Verdict::non_inferior : Verdict::not_established;
}

// ---------------------------------------------------------------------------
// Classification
// ---------------------------------------------------------------------------

struct RocResult {
  double auc = 0.0;
  double variance = 0.0;
  Interval ci;
  std::size_t positives = 0;
  std::size_t negatives = 0;
};

inline void split_by_label(const std::vector<double>& scores, const std::vector<int>& labels,
                           std::vector<double>& pos, std::vector<double>& neg) {
  if (scores.size() != labels.size()) throw ArgumentError("scores and labels differ in length");
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw ArgumentError("labels must be 0 or 1");
    (labels[i] ? pos : neg).push_back(scores[i]);
  }
}

inline double pair_kernel(double pos, double neg) { return pos > neg ? 1.0 : pos == neg ? 0.5 : 0.0; }

// Mann-Whitney AUC with DeLong structural-component variance and a normal interval.
inline RocResult roc_auc_delong(const std::vector<double>& scores, const std::vector<int>& labels,
                                double level = 0.95) {
  check_level(level);
  std::vector<double> pos, neg;
  split_by_label(scores, labels, pos, neg);
  if (pos.empty() || neg.empty()) throw ArgumentError("AUC needs both classes");
  const std::size_t m = pos.size(), n = neg.size();
  std::vector<double> v10(m, 0.0), v01(n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double k = pair_kernel(pos[i], neg[j]);
      v10[i] += k;
      v01[j] += k;
    }
  double total = 0.0;
  for (auto& v : v10) {
    total += v;
    v /= static_cast<double>(n);
  }
  for (auto& v : v01) v /= static_cast<double>(m);
  RocResult r;
  r.positives = m;
  r.negatives = n;
  r.auc = total / static_cast<double>(m * n);
  const double s10 = m > 1 ? sample_sd(v10) * sample_sd(v10) : 0.0;
  const double s01 = n > 1 ? sample_sd(v01) * sample_sd(v01) : 0.0;
  r.variance = s10 / static_cast<double>(m) + s01 / static_cast<double>(n);
  const double z = boost::math::quantile(boost::math::normal(), 0.5 + level / 2.0);
  const double half = z * std::sqrt(r.variance);
  r.ci = {std::clamp(r.auc - half, 0.0, 1.0), std::clamp(r.auc + half, 0.0, 1.0)};
  return r;
}

// Exact beta-quantile interval for a binomial proportion.
inline Interval clopper_pearson(long k, long n, double level = 0.95) {
  check_level(level);
  if (n < 1 || k < 0 || k > n) throw ArgumentError("clopper_pearson needs 0 <= k <= n and n >= 1");
  const double alpha = 1.0 - level;
  Interval r;
  r.lo = k == 0 ? 0.0
                : boost::math::quantile(boost::math::beta_distribution<>(static_cast<double>(k),
                                                                         static_cast<double>(n - k + 1)),
                                        alpha / 2.0);
  r.hi = k == n ? 1.0
                : boost::math::quantile(boost::math::beta_distribution<>(static_cast<double>(k + 1),
                                                                         static_cast<double>(n - k)),
                                        1.0 - alpha / 2.0);
  return r;
}

struct SensSpec {
  std::optional<double> sensitivity;  // empty when there are no positives
  std::optional<double> specificity;  // empty when there are no negatives
  long tp = 0, fn = 0, tn = 0, fp = 0;
};

inline SensSpec sensitivity_specificity(const std::vector<double>& scores, const std::vector<int>& labels,
                                        double threshold) {
  if (scores.size() != labels.size()) throw ArgumentError("scores and labels differ in length");
  SensSpec r;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted = scores[i] >= threshold;
    if (labels[i] == 1) (predicted ? r.tp : r.fn)++;
    else if (labels[i] == 0) (predicted ? r.fp : r.tn)++;
    else throw ArgumentError("labels must be 0 or 1");
  }
  if (r.tp + r.fn > 0) r.sensitivity = static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fn);
  if (r.tn + r.fp > 0) r.specificity = static_cast<double>(r.tn) / static_cast<double>(r.tn + r.fp);
  return r;
}

inline std::string format_optional(const std::optional<double>& v, const char* fmt = "%.3f") {
  if (!v) return "undefined";
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, *v);
  return buf;
}

struct OperatingPoint {
  double threshold = 0.5;
  double sensitivity = 0.0;
  double specificity = 0.0;
};

// Threshold among midpoints of sorted unique scores minimising |sens - spec|;
// ties go to the higher sensitivity.
inline OperatingPoint pick_operating_point(const std::vector<double>& scores, const std::vector<int>& labels) {
  std::vector<double> pos, neg;
  split_by_label(scores, labels, pos, neg);
  if (pos.empty() || neg.empty()) throw ArgumentError("operating point needs both classes in the tune set");
  std::vector<double> u = scores;
  std::sort(u.begin(), u.end());
  u.erase(std::unique(u.begin(), u.end()), u.end());
  if (u.size() < 2) throw ArgumentError("degenerate tune scores: all equal, no threshold separates them");
  bool have = false;
  OperatingPoint best;
  double best_gap = 0.0;
  for (std::size_t i = 0; i + 1 < u.size(); ++i) {
    const double tau = 0.5 * (u[i] + u[i + 1]);
    const auto ss = sensitivity_specificity(scores, labels, tau);
    const double gap = std::abs(*ss.sensitivity - *ss.specificity);
    if (!have || gap < best_gap || (gap == best_gap && *ss.sensitivity > best.sensitivity)) {
      have = true;
      best_gap = gap;
      best = {tau, *ss.sensitivity, *ss.specificity};
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Feedback calibration
// ---------------------------------------------------------------------------

struct CalibrationBin {
  int bin = 0;
  std::size_t n = 0;
  double mean_feedback = 0.0;
  double mae = 0.0;
};

// Quantile bins of equal count (ordered by feedback), MAE per bin.
inline std::vector<CalibrationBin> feedback_calibration_table(const std::vector<double>& feedback,
                                                              const std::vector<double>& abs_errors,
                                                              int n_bins = 10) {
  if (feedback.size() != abs_errors.size()) throw ArgumentError("feedback and errors differ in length");
  if (n_bins < 2) throw ArgumentError("calibration needs at least 2 bins");
  if (feedback.size() < static_cast<std::size_t>(n_bins)) throw ArgumentError("fewer points than bins");
  std::vector<std::size_t> order(feedback.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return feedback[a] < feedback[b]; });
  const std::size_t n = order.size();
  std::vector<CalibrationBin> out;
  for (int b = 0; b < n_bins; ++b) {
    const std::size_t lo = n * b / n_bins, hi = n * (b + 1) / n_bins;
    CalibrationBin cb;
    cb.bin = b;
    cb.n = hi - lo;
    for (std::size_t i = lo; i < hi; ++i) {
      cb.mean_feedback += feedback[order[i]];
      cb.mae += std::abs(abs_errors[order[i]]);
    }
    cb.mean_feedback /= static_cast<double>(cb.n);
    cb.mae /= static_cast<double>(cb.n);
    out.push_back(cb);
  }
  return out;
}

// Ranks starting at 1, ties get their average rank.
inline std::vector<double> average_ranks(const std::vector<double>& v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
    i = j + 1;
  }
  return r;
}

inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw ArgumentError("correlation needs two equal-length series of >= 2");
  const double mx = mean_of(x), my = mean_of(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw ArgumentError("correlation undefined for a constant series");
  return sxy / std::sqrt(sxx * syy);
}

inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  return pearson(average_ranks(x), average_ranks(y));
}

inline double calibration_spearman(const std::vector<CalibrationBin>& bins) {
  std::vector<double> idx, mae;
  for (const auto& b : bins) {
    idx.push_back(b.bin);
    mae.push_back(b.mae);
  }
  return spearman(idx, mae);
}

// ---------------------------------------------------------------------------
// Visit sampling
// ---------------------------------------------------------------------------

struct VisitKey {
  std::string patient_id;
  std::string visit_id;
  double date = 0.0;  // any monotone visit-time key
};

enum class SampleMode { random, latest };

// Indices of one visit per patient, in order of first appearance of each patient.
inline std::vector<std::size_t> sample_one_visit_per_patient(const std::vector<VisitKey>& visits, std::uint64_t seed,
                                                             SampleMode mode = SampleMode::random) {
  std::vector<std::string> patients;
  std::map<std::string, std::vector<std::size_t>> by_patient;
  for (std::size_t i = 0; i < visits.size(); ++i) {
    auto& list = by_patient[visits[i].patient_id];
    if (list.empty()) patients.push_back(visits[i].patient_id);
    list.push_back(i);
  }
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> out;
  for (const auto& p : patients) {
    const auto& list = by_patient[p];
    if (mode == SampleMode::latest) {
      std::size_t best = list.front();
      for (std::size_t i : list)
        if (visits[i].date >= visits[best].date) best = i;
      out.push_back(best);
    } else {
      std::uniform_int_distribution<std::size_t> pick(0, list.size() - 1);
      out.push_back(list[pick(rng)]);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Report tables
// ---------------------------------------------------------------------------

struct GaReportRow {
  std::string group;
  std::size_t n = 0;
  ErrorStats blind_sweep;
  std::optional<ErrorStats> biometry;
  std::optional<PairedDifference> difference;
  std::optional<ErrorStats> reduced_protocol;
};

struct PresentationReportRow {
  std::string subset;
  std::size_t participants = 0;
  std::size_t malpresentations = 0;
  std::optional<RocResult> roc;
  SensSpec sens_spec;
  std::optional<Interval> sensitivity_ci;
  std::optional<Interval> specificity_ci;
};

inline std::string fmt_num(double v, const char* f = "%.4f") {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

inline void write_ga_table(std::ostream& os, const std::vector<GaReportRow>& rows) {
  os << "group,number,blind_sweep_mae,blind_sweep_mae_sd,biometry_mae,biometry_mae_sd,mean_difference,"
        "mean_difference_sd,difference_ci_lo,difference_ci_hi,verdict,blind_sweep_me,blind_sweep_me_sd,"
        "biometry_me,biometry_me_sd,reduced_protocol_mae,reduced_protocol_mae_sd\n";
  const std::string na = "nan";
  for (const auto& r : rows) {
    os << r.group << ',' << r.n << ',' << fmt_num(r.blind_sweep.mae) << ',' << fmt_num(r.blind_sweep.mae_sd) << ','
       << (r.biometry ? fmt_num(r.biometry->mae) : na) << ',' << (r.biometry ? fmt_num(r.biometry->mae_sd) : na)
       << ',' << (r.difference ? fmt_num(r.difference->mean) : na) << ','
       << (r.difference ? fmt_num(r.difference->sd) : na) << ','
       << (r.difference ? fmt_num(r.difference->ci.lo) : na) << ','
       << (r.difference ? fmt_num(r.difference->ci.hi) : na) << ','
       << (r.difference ? to_string(non_inferiority_verdict(r.difference->ci)) : na) << ','
       << fmt_num(r.blind_sweep.me) << ',' << fmt_num(r.blind_sweep.me_sd) << ','
       << (r.biometry ? fmt_num(r.biometry->me) : na) << ',' << (r.biometry ? fmt_num(r.biometry->me_sd) : na)
       << ',' << (r.reduced_protocol ? fmt_num(r.reduced_protocol->mae) : na) << ','
       << (r.reduced_protocol ? fmt_num(r.reduced_protocol->mae_sd) : na) << '\n';
  }
}

inline void write_presentation_table(std::ostream& os, const std::vector<PresentationReportRow>& rows) {
  os << "subset,participants,malpresentations,auc,auc_ci_lo,auc_ci_hi,sensitivity,sensitivity_ci_lo,"
        "sensitivity_ci_hi,specificity,specificity_ci_lo,specificity_ci_hi\n";
  const std::string na = "undefined";
  for (const auto& r : rows) {
    os << r.subset << ',' << r.participants << ',' << r.malpresentations << ','
       << (r.roc ? fmt_num(r.roc->auc) : na) << ',' << (r.roc ? fmt_num(r.roc->ci.lo) : na) << ','
       << (r.roc ? fmt_num(r.roc->ci.hi) : na) << ',' << format_optional(r.sens_spec.sensitivity, "%.4f") << ','
       << (r.sensitivity_ci ? fmt_num(r.sensitivity_ci->lo) : na) << ','
       << (r.sensitivity_ci ? fmt_num(r.sensitivity_ci->hi) : na) << ','
       << format_optional(r.sens_spec.specificity, "%.4f") << ','
       << (r.specificity_ci ? fmt_num(r.specificity_ci->lo) : na) << ','
       << (r.specificity_ci ? fmt_num(r.specificity_ci->hi) : na) << '\n';
  }
}

inline void write_calibration_table(std::ostream& os, const std::vector<CalibrationBin>& bins) {
  os << "bin,mean_feedback,mae\n";
  for (const auto& b : bins) os << b.bin << ',' << fmt_num(b.mean_feedback, "%.6g") << ',' << fmt_num(b.mae) << '\n';
}

}  // namespace blindsweep::evaluate
