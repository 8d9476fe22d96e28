#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "blindsweep/dataset.hpp"
#include "blindsweep/models.hpp"
#include "blindsweep/nn/optim.hpp"

namespace blindsweep::models {

using dataset::CaseView;
using phantom::Split;
using phantom::SplitAssignment;

// Second and third trimester start at 14 weeks.
inline constexpr int kSecondTrimesterDays = 98;

// One training/evaluation unit: a GA clip, or a whole sweep for presentation.
struct ClipRef {
  int case_index = 0;
  int sweep = 0;
  int clip = 0;
};

struct UnitFilter {
  Split split = Split::train;
  bool exclude_novice = true;
  int min_ga_days = 0;
};

inline std::vector<ClipRef> enumerate_units(ModelKind kind, const ModelConfig& cfg,
                                            const std::vector<CaseView>& cases, const SplitAssignment& splits,
                                            const UnitFilter& filter) {
  std::vector<ClipRef> out;
  for (int i = 0; i < static_cast<int>(cases.size()); ++i) {
    const auto& c = cases[i];
    auto it = splits.find(c.patient_id());
    if (it == splits.end() || it->second != filter.split) continue;
    if (filter.exclude_novice && c.operator_() == phantom::Operator::novice) continue;
    if (c.ga_days() < filter.min_ga_days) continue;
    for (int s = 0; s < c.sweep_count(); ++s) {
      if (kind == ModelKind::presentation) {
        out.push_back({i, s, 0});
        continue;
      }
      const int n = preprocess::ga_clip_count(c.frame_count(s), cfg.clip);
      for (int k = 0; k < n; ++k) out.push_back({i, s, k});
    }
  }
  return out;
}

inline nn::Tensor<float> load_unit(const ModelConfig& cfg, const CaseView& c, const ClipRef& u) {
  return cfg.kind == ModelKind::gestational_age ? dataset::load_ga_clip(c, u.sweep, u.clip, cfg.scale, cfg.clip)
                                                : dataset::load_presentation_frames(c, u.sweep, cfg.scale, cfg.clip);
}

inline double unit_label(ModelKind kind, const CaseView& c) {
  return kind == ModelKind::gestational_age ? std::log(static_cast<double>(c.ga_days()))
                                            : (c.non_cephalic() ? 1.0 : 0.0);
}

// Infer-mode outputs for a list of units, evaluated in chunks of `chunk` clips:
// (log-age, variance) for GA, (logit, probability) for presentation.
inline std::vector<std::pair<double, double>> predict_units(const SweepModel<float>& model,
                                                            const std::vector<CaseView>& cases,
                                                            const std::vector<ClipRef>& units, int chunk = 8) {
  const auto& cfg = model.config();
  std::vector<std::pair<double, double>> out;
  out.reserve(units.size());
  for (std::size_t start = 0; start < units.size(); start += chunk) {
    const std::size_t end = std::min(units.size(), start + chunk);
    std::vector<nn::Tensor<float>> clips;
    for (std::size_t i = start; i < end; ++i) clips.push_back(load_unit(cfg, cases[units[i].case_index], units[i]));
    Graph<float> g(false);
    auto res = model.forward(g, batch_of<float>(clips, cfg.clip.clip_len), Mode::infer);
    for (std::size_t i = 0; i < end - start; ++i)
      out.emplace_back(g.value(res.primary)[i], g.value(res.secondary)[i]);
  }
  return out;
}

struct TrainConfig {
  long steps = 1000;
  int batch_size = 8;
  std::optional<nn::LinearRamp> ramp;  // default: the kind's ramp rescaled to `steps`
  nn::AdamWConfig adamw;
  std::uint64_t seed = 1;
  int log_every = 50;
  int tune_units = 64;
  bool augment = true;
};

inline nn::LinearRamp default_ramp(ModelKind kind, long steps) {
  return (kind == ModelKind::gestational_age ? nn::LinearRamp::gestational_age() : nn::LinearRamp::presentation())
      .rescaled(steps);
}

struct TrainResult {
  std::vector<std::string> log;  // "step,lr,loss,tune_metric"
  double last_loss = 0.0;
  std::size_t train_units = 0;
};

// Tune metric: clip MAE in days (GA) or mean binary cross-entropy (presentation).
inline double tune_metric(const SweepModel<float>& model, const std::vector<CaseView>& cases,
                          const std::vector<ClipRef>& units) {
  if (units.empty()) return std::nan("");
  const auto preds = predict_units(model, cases, units);
  double acc = 0.0;
  for (std::size_t i = 0; i < units.size(); ++i) {
    const auto& c = cases[units[i].case_index];
    if (model.kind() == ModelKind::gestational_age) {
      acc += std::abs(std::exp(preds[i].first) - c.ga_days());
    } else {
      const double p = std::clamp(preds[i].second, 1e-7, 1 - 1e-7);
      acc -= c.non_cephalic() ? std::log(p) : std::log1p(-p);
    }
  }
  return acc / units.size();
}

// AdamW on uniformly shuffled training units (novice cases never included);
// presentation models see only second- and third-trimester cases.
inline TrainResult train_model(SweepModel<float>& model, const std::vector<CaseView>& cases,
                               const SplitAssignment& splits, const TrainConfig& tc, std::ostream* log = nullptr) {
  const auto& cfg = model.config();
  const ModelKind kind = cfg.kind;
  UnitFilter train_filter{Split::train, true, kind == ModelKind::presentation ? kSecondTrimesterDays : 0};
  auto units = enumerate_units(kind, cfg, cases, splits, train_filter);
  if (units.empty()) throw ConfigError("training split has no usable " + to_string(kind) + " examples");
  if (tc.batch_size < 1 || tc.steps < 0) throw ConfigError("batch size must be >= 1 and steps >= 0");
  UnitFilter tune_filter = train_filter;
  tune_filter.split = Split::tune;
  tune_filter.exclude_novice = false;
  auto tune = enumerate_units(kind, cfg, cases, splits, tune_filter);
  std::mt19937_64 rng(tc.seed);
  std::shuffle(tune.begin(), tune.end(), rng);
  if (static_cast<int>(tune.size()) > tc.tune_units) tune.resize(tc.tune_units);

  const nn::LinearRamp ramp = tc.ramp.value_or(default_ramp(kind, std::max<long>(tc.steps, 1)));
  preprocess::AugmentConfig aug;
  aug.vertical_flip = kind == ModelKind::gestational_age;
  nn::AdamW<float> opt(model.params(), tc.adamw);
  TrainResult result;
  result.train_units = units.size();

  std::vector<std::size_t> order(units.size());
  std::size_t cursor = order.size();
  double running = 0.0;
  int running_n = 0;
  for (long step = 0; step < tc.steps; ++step) {
    std::vector<nn::Tensor<float>> clips;
    nn::Tensor<float> labels(nn::Shape::vector(tc.batch_size));
    for (int b = 0; b < tc.batch_size; ++b) {
      if (cursor == order.size()) {
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      const ClipRef& u = units[order[cursor++]];
      const auto& c = cases[u.case_index];
      auto frames = load_unit(cfg, c, u);
      if (tc.augment) preprocess::apply_augment(frames, preprocess::draw_augment(rng, aug));
      clips.push_back(std::move(frames));
      labels[b] = static_cast<float>(unit_label(kind, c));
    }
    const double lr = nn::lr_at(step, ramp);
    model.params().zero_grad();
    Graph<float> g;
    auto out = model.forward(g, batch_of<float>(clips, cfg.clip.clip_len), Mode::train, &rng);
    Var loss = kind == ModelKind::gestational_age ? mean_variance_loss(g, out.primary, out.secondary, labels)
                                                  : bce_with_logits(g, out.primary, labels);
    g.backward(loss);
    opt.step(lr);
    result.last_loss = g.value(loss)[0];
    running += result.last_loss;
    ++running_n;
    const bool last = step + 1 == tc.steps;
    if ((tc.log_every > 0 && (step + 1) % tc.log_every == 0) || last) {
      char line[160];
      std::snprintf(line, sizeof line, "%ld,%.6g,%.6f,%.6f", step + 1, lr, running / running_n,
                    tune_metric(model, cases, tune));
      result.log.emplace_back(line);
      if (log) *log << line << '\n' << std::flush;
      running = 0.0;
      running_n = 0;
    }
  }
  return result;
}

}  // namespace blindsweep::models
