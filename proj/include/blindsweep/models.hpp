#pragma once

#include <cmath>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "blindsweep/nn/checkpoint.hpp"
#include "blindsweep/nn/layers.hpp"
#include "blindsweep/preprocess.hpp"

namespace blindsweep::models {

using nn::Graph;
using nn::ParameterSet;
using nn::Shape;
using nn::Tensor;
using nn::Var;

enum class ModelKind { gestational_age = 0, presentation = 1 };
enum class Mode { train, infer };

inline std::string to_string(ModelKind k) {
  return k == ModelKind::gestational_age ? "ga" : "presentation";
}
inline ModelKind parse_model_kind(const std::string& s) {
  if (s == "ga") return ModelKind::gestational_age;
  if (s == "presentation") return ModelKind::presentation;
  throw ArgumentError("unknown model kind: " + s);
}

inline constexpr double kVarianceFloor = 1e-6;

struct ModelConfig {
  ModelKind kind = ModelKind::gestational_age;
  preprocess::ScaleSpec scale;
  preprocess::ClipSpec clip;
  nn::ExtractorSpec extractor;
  int lstm_hidden = 32;
  int lstm_groups = 4;
  int lstm_kernel = 3;
  double lstm_forget_bias = 1.0;  // initial forget-gate bias
  double dropout_keep = 0.863;
  double initial_log_age = std::log(170.0);
  double initial_variance = 0.2;

  static ModelConfig desk_gestational_age() {
    ModelConfig c;
    c.kind = ModelKind::gestational_age;
    c.scale = preprocess::ScaleSpec::desk_gestational_age();
    c.clip = preprocess::ClipSpec::gestational_age();
    c.extractor = {1, 16, 2, {{2, 2, 24}, {2, 2, 32}, {2, 1, 32}}};
    c.lstm_hidden = 32;
    c.lstm_groups = 4;
    c.dropout_keep = 0.863;
    return c;
  }

  static ModelConfig desk_presentation() {
    ModelConfig c;
    c.kind = ModelKind::presentation;
    c.scale = preprocess::ScaleSpec::desk_presentation();
    c.clip = preprocess::ClipSpec::presentation();
    c.extractor = {1, 8, 2, {{2, 2, 16}, {2, 2, 16}}};
    c.lstm_hidden = 16;
    c.lstm_groups = 4;
    c.lstm_forget_bias = 3.0;
    c.dropout_keep = 0.8;
    return c;
  }

  // MobileNetV2 layout (stem 32, stride 2) ending at its last 320-channel map.
  static ModelConfig full_scale_gestational_age() {
    ModelConfig c = desk_gestational_age();
    c.scale = preprocess::ScaleSpec::gestational_age();
    c.extractor = mobilenet_v2();
    c.lstm_hidden = 512;
    return c;
  }

  static ModelConfig full_scale_presentation() {
    ModelConfig c = desk_presentation();
    c.scale = preprocess::ScaleSpec::presentation();
    c.extractor = mobilenet_v2();
    c.lstm_hidden = 512;
    c.lstm_forget_bias = 1.0;
    return c;
  }

  // Small enough for exhaustive finite-difference checks in 64-bit mode.
  static ModelConfig tiny(ModelKind kind) {
    ModelConfig c;
    c.kind = kind;
    c.scale = {4.0, 10, 8};
    c.clip = {1, 3};
    c.extractor = {1, 4, 2, {{2, 2, 4}, {2, 1, 4}}};
    c.lstm_hidden = 4;
    c.lstm_groups = 2;
    c.dropout_keep = kind == ModelKind::gestational_age ? 0.863 : 0.8;
    return c;
  }

  static nn::ExtractorSpec mobilenet_v2() {
    nn::ExtractorSpec e{1, 32, 2, {}};
    const int table[7][4] = {{1, 16, 1, 1}, {6, 24, 2, 2}, {6, 32, 3, 2}, {6, 64, 4, 2},
                             {6, 96, 3, 1}, {6, 160, 3, 2}, {6, 320, 1, 1}};
    for (const auto& row : table)
      for (int i = 0; i < row[2]; ++i) e.blocks.push_back({row[0], i == 0 ? row[3] : 1, row[1]});
    return e;
  }

  bool same_preprocessing(const ModelConfig& o) const { return scale == o.scale && clip == o.clip; }
};

// Clips packed clip-major: clip b owns rows [offset_b, offset_b + length_b) of
// `frames`. Recurrence runs for `steps` steps; clip b re-reads its last distinct
// frame once t >= length_b, which is exactly edge-repeat padding.
template <typename T>
struct ClipBatch {
  Tensor<T> frames;  // [sum(lengths), H, W, 1]
  std::vector<int> lengths;
  int steps = 0;

  int size() const { return static_cast<int>(lengths.size()); }
};

template <typename T>
ClipBatch<T> batch_of(const std::vector<Tensor<float>>& clips, int steps,
                      const std::vector<int>& lengths = {}) {
  ClipBatch<T> b;
  b.steps = steps;
  std::size_t rows = 0;
  for (std::size_t i = 0; i < clips.size(); ++i) {
    const int len = lengths.empty() ? clips[i].shape().n() : lengths[i];
    if (len < 1 || len > clips[i].shape().n() || len > steps)
      throw ShapeError("clip length " + std::to_string(len) + " inconsistent with clip " +
                       clips[i].shape().str() + " and " + std::to_string(steps) + " steps");
    b.lengths.push_back(len);
    rows += len;
  }
  if (clips.empty()) throw ArgumentError("empty clip batch");
  const Shape s = clips[0].shape();
  const std::size_t fs = static_cast<std::size_t>(s.h()) * s.w() * s.c();
  b.frames = Tensor<T>(Shape(static_cast<int>(rows), s.h(), s.w(), s.c()));
  std::size_t r = 0;
  for (std::size_t i = 0; i < clips.size(); ++i) {
    if (clips[i].shape().h() != s.h() || clips[i].shape().w() != s.w() || clips[i].shape().c() != s.c())
      throw ShapeError("clip " + clips[i].shape().str() + " differs from " + s.str());
    for (std::size_t k = 0; k < b.lengths[i] * fs; ++k) b.frames[r * fs + k] = static_cast<T>(clips[i][k]);
    r += b.lengths[i];
  }
  return b;
}

struct ForwardOutput {
  Var primary;    // GA: log-age f; presentation: logit
  Var secondary;  // GA: variance g; presentation: probability
};

template <typename T>
class SweepModel {
 public:
  SweepModel(const ModelConfig& cfg, std::uint64_t init_seed) : cfg_(cfg) {
    if (cfg.extractor.in_channels != 1) throw ConfigError("models take single-channel frames");
    std::mt19937_64 rng(init_seed);
    extractor_.emplace(params_, "extractor", cfg.extractor, rng);
    lstm_.emplace(params_, "lstm", cfg.extractor.out_channels(), cfg.lstm_hidden, cfg.lstm_groups, rng,
                  cfg.lstm_kernel, static_cast<T>(cfg.lstm_forget_bias));
    const int feat = 2 * cfg.lstm_hidden;
    if (cfg.kind == ModelKind::gestational_age) {
      head_a_ = nn::DenseParams<T>::make(params_, "head.log_age", feat, 1, rng,
                                         static_cast<T>(cfg.initial_log_age), 0.1);
      const double inv_softplus = std::log(std::expm1(cfg.initial_variance));
      head_b_ = nn::DenseParams<T>::make(params_, "head.variance", feat, 1, rng,
                                         static_cast<T>(inv_softplus), 0.1);
    } else {
      head_a_ = nn::DenseParams<T>::make(params_, "head.logit", feat, 1, rng, T(0), 0.1);
    }
  }

  SweepModel(const SweepModel&) = delete;
  SweepModel& operator=(const SweepModel&) = delete;

  const ModelConfig& config() const { return cfg_; }
  ModelKind kind() const { return cfg_.kind; }
  ParameterSet<T>& params() { return params_; }
  const ParameterSet<T>& params() const { return params_; }

  std::pair<int, int> feature_size() const {
    return cfg_.extractor.output_size(cfg_.scale.target_height, cfg_.scale.target_width);
  }

  void check_frames(const Shape& s) const {
    if (s.h() != cfg_.scale.target_height || s.w() != cfg_.scale.target_width || s.c() != 1)
      throw ShapeError("model expects frames of " +
                       Shape(1, cfg_.scale.target_height, cfg_.scale.target_width, 1).str() + ", got " + s.str());
  }

  // Runs the extractor on every frame, the recurrence over `steps`, and the
  // heads on the final state.
  ForwardOutput forward(Graph<T>& g, const ClipBatch<T>& batch, Mode mode,
                        std::mt19937_64* dropout_rng = nullptr) const {
    check_frames(batch.frames.shape());
    if (mode == Mode::train && !dropout_rng) throw UsageError("train mode needs a dropout generator");
    Var emb = extractor_->forward(g, g.view(batch.frames));
    const Shape es = g.value(emb).shape();
    auto state = lstm_->zero_state(g, batch.size(), es.h(), es.w());
    std::vector<int> offsets(batch.size());
    for (int b = 1; b < batch.size(); ++b) offsets[b] = offsets[b - 1] + batch.lengths[b - 1];
    for (int t = 0; t < batch.steps; ++t) {
      std::vector<int> rows(batch.size());
      for (int b = 0; b < batch.size(); ++b) rows[b] = offsets[b] + std::min(t, batch.lengths[b] - 1);
      state = lstm_->step(g, state, nn::gather_batch(g, emb, rows)).first;
    }
    return heads(g, state, mode, dropout_rng);
  }

  ForwardOutput heads(Graph<T>& g, const nn::LstmState& state, Mode mode,
                      std::mt19937_64* dropout_rng) const {
    Var feat = nn::avg_pool(g, nn::concat_channels(g, state.cell, state.hidden));
    if (mode == Mode::train) feat = nn::dropout(g, feat, cfg_.dropout_keep, *dropout_rng);
    if (cfg_.kind == ModelKind::gestational_age) {
      Var f = head_a_.forward(g, feat);
      Var v = nn::add_constant(g, nn::softplus(g, head_b_.forward(g, feat)), static_cast<T>(kVarianceFloor));
      return {f, v};
    }
    Var logit = head_a_.forward(g, feat);
    return {logit, nn::sigmoid(g, logit)};
  }

  // Streaming: one frame at a time with the recurrent state carried in tensors.
  struct StreamState {
    Tensor<T> cell, hidden;
    int steps = 0;
  };

  StreamState stream_start() const {
    const auto [h, w] = feature_size();
    return {Tensor<T>(Shape(1, h, w, cfg_.lstm_hidden)), Tensor<T>(Shape(1, h, w, cfg_.lstm_hidden)), 0};
  }

  // Extractor output for one frame; feeding it to stream_step_embedded equals stream_step.
  Tensor<T> embed(const Tensor<T>& frame) const {
    check_frames(frame.shape());
    if (frame.shape().n() != 1) throw ShapeError("streaming takes one frame at a time, got " + frame.shape().str());
    Graph<T> g(false);
    Var emb = extractor_->forward(g, g.view(frame));
    Tensor<T> out = g.value(emb);
    return out;
  }

  void stream_step_embedded(StreamState& s, const Tensor<T>& embedding) const {
    Graph<T> g(false);
    nn::LstmState st{g.view(s.cell), g.view(s.hidden)};
    st = lstm_->step(g, st, g.view(embedding)).first;
    Tensor<T> c = g.value(st.cell), h = g.value(st.hidden);
    s.cell = std::move(c);
    s.hidden = std::move(h);
    ++s.steps;
  }

  void stream_step(StreamState& s, const Tensor<T>& frame) const { stream_step_embedded(s, embed(frame)); }

  // (log-age, variance) for GA models, (logit, probability) for presentation.
  std::pair<double, double> stream_read(const StreamState& s) const {
    Graph<T> g(false);
    auto out = heads(g, {g.view(s.cell), g.view(s.hidden)}, Mode::infer, nullptr);
    return {static_cast<double>(g.value(out.primary)[0]), static_cast<double>(g.value(out.secondary)[0])};
  }

 private:
  ModelConfig cfg_;
  ParameterSet<T> params_;
  std::optional<nn::FeatureExtractor<T>> extractor_;
  std::optional<nn::GroupedConvLstm<T>> lstm_;
  nn::DenseParams<T> head_a_, head_b_;
};

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

// Batch mean of (f - y)^2 / g + log g.
template <typename T>
Var mean_variance_loss(Graph<T>& g, Var f, Var var, const Tensor<T>& y) {
  const Tensor<T>& fv = g.value(f);
  const Tensor<T>& gv = g.value(var);
  if (fv.size() != gv.size() || fv.size() != y.size())
    throw ShapeError("mean_variance_loss: f, g and labels differ in size");
  const std::size_t n = fv.size();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!(gv[i] > T(0))) throw DomainError("mean_variance_loss: variance must be positive");
    const double r = static_cast<double>(fv[i]) - static_cast<double>(y[i]);
    total += r * r / gv[i] + std::log(static_cast<double>(gv[i]));
  }
  Tensor<T> out(Shape::scalar(), static_cast<T>(total / n));
  return g.record(std::move(out), {f, var}, [f, var, y, n](Graph<T>& g, const Tensor<T>& gy) {
    const Tensor<T>& fv = g.value(f);
    const Tensor<T>& gv = g.value(var);
    const T scale = gy[0] / static_cast<T>(n);
    Tensor<T>* gf = g.requires_grad(f) ? &g.grad_buffer(f) : nullptr;
    Tensor<T>* gg = g.requires_grad(var) ? &g.grad_buffer(var) : nullptr;
    for (std::size_t i = 0; i < n; ++i) {
      const T r = fv[i] - y[i];
      if (gf) (*gf)[i] += scale * T(2) * r / gv[i];
      if (gg) (*gg)[i] += scale * (T(1) / gv[i] - r * r / (gv[i] * gv[i]));
    }
  });
}

inline double mean_variance_loss(const std::vector<double>& f, const std::vector<double>& g,
                                 const std::vector<double>& y) {
  if (f.size() != g.size() || f.size() != y.size() || f.empty())
    throw ArgumentError("mean_variance_loss: inputs must be non-empty and equally long");
  double total = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (!(g[i] > 0.0)) throw DomainError("mean_variance_loss: variance must be positive");
    total += (f[i] - y[i]) * (f[i] - y[i]) / g[i] + std::log(g[i]);
  }
  return total / f.size();
}

// Batch mean of -[b log p + (1 - b) log(1 - p)].
template <typename T>
Var bce_loss(Graph<T>& g, Var p, const Tensor<T>& b) {
  const Tensor<T>& pv = g.value(p);
  if (pv.size() != b.size()) throw ShapeError("bce_loss: probabilities and labels differ in size");
  const std::size_t n = pv.size();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!(pv[i] > T(0) && pv[i] < T(1))) throw DomainError("bce_loss: probability must be in (0, 1)");
    total -= b[i] * std::log(static_cast<double>(pv[i])) + (1 - b[i]) * std::log1p(-static_cast<double>(pv[i]));
  }
  Tensor<T> out(Shape::scalar(), static_cast<T>(total / n));
  return g.record(std::move(out), {p}, [p, b, n](Graph<T>& g, const Tensor<T>& gy) {
    const Tensor<T>& pv = g.value(p);
    Tensor<T>& gp = g.grad_buffer(p);
    for (std::size_t i = 0; i < n; ++i)
      gp[i] += gy[0] / static_cast<T>(n) * ((T(1) - b[i]) / (T(1) - pv[i]) - b[i] / pv[i]);
  });
}

inline double bce_loss(const std::vector<double>& p, const std::vector<double>& b) {
  if (p.size() != b.size() || p.empty()) throw ArgumentError("bce_loss: inputs must be non-empty and equally long");
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!(p[i] > 0.0 && p[i] < 1.0)) throw DomainError("bce_loss: probability must be in (0, 1)");
    total -= b[i] * std::log(p[i]) + (1 - b[i]) * std::log1p(-p[i]);
  }
  return total / p.size();
}

// Same loss evaluated from logits; stable when the sigmoid saturates.
template <typename T>
Var bce_with_logits(Graph<T>& g, Var z, const Tensor<T>& b) {
  const Tensor<T>& zv = g.value(z);
  if (zv.size() != b.size()) throw ShapeError("bce_with_logits: logits and labels differ in size");
  const std::size_t n = zv.size();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = zv[i];
    total += std::max(x, 0.0) - x * b[i] + std::log1p(std::exp(-std::abs(x)));
  }
  Tensor<T> out(Shape::scalar(), static_cast<T>(total / n));
  return g.record(std::move(out), {z}, [z, b, n](Graph<T>& g, const Tensor<T>& gy) {
    const Tensor<T>& zv = g.value(z);
    Tensor<T>& gz = g.grad_buffer(z);
    for (std::size_t i = 0; i < n; ++i)
      gz[i] += gy[0] / static_cast<T>(n) * (nn::sigmoid_scalar(zv[i]) - b[i]);
  });
}

// ---------------------------------------------------------------------------
// Checkpoints: parameters plus "meta.*" tensors describing the architecture.
// ---------------------------------------------------------------------------

inline std::vector<nn::NamedTensor> config_tensors(const ModelConfig& c) {
  auto vec = [](std::vector<float> v) {
    const int n = static_cast<int>(v.size());
    return Tensor<float>(Shape::vector(n), std::move(v));
  };
  std::vector<float> arch{static_cast<float>(c.extractor.in_channels), static_cast<float>(c.extractor.stem_channels),
                          static_cast<float>(c.extractor.stem_stride),  static_cast<float>(c.lstm_hidden),
                          static_cast<float>(c.lstm_groups),            static_cast<float>(c.lstm_kernel)};
  for (const auto& b : c.extractor.blocks) {
    arch.push_back(static_cast<float>(b.expansion));
    arch.push_back(static_cast<float>(b.stride));
    arch.push_back(static_cast<float>(b.out_channels));
  }
  // The scale is split into three floats whose sum restores the double exactly.
  const double scale = c.scale.target_scale_cm_per_px;
  const float hi = static_cast<float>(scale);
  const float mid = static_cast<float>(scale - hi);
  const float lo = static_cast<float>(scale - hi - mid);
  return {{"meta.kind", vec({static_cast<float>(c.kind)})},
          {"meta.scale", vec({hi, static_cast<float>(c.scale.target_width), static_cast<float>(c.scale.target_height),
                              mid, lo})},
          {"meta.clip", vec({static_cast<float>(c.clip.stride), static_cast<float>(c.clip.clip_len)})},
          {"meta.dropout_keep", vec({static_cast<float>(c.dropout_keep)})},
          {"meta.arch", vec(std::move(arch))}};
}

inline ModelConfig config_from_tensors(const std::vector<nn::NamedTensor>& tensors) {
  auto find = [&](const std::string& name) -> const Tensor<float>& {
    for (const auto& t : tensors)
      if (t.name == name) return t.tensor;
    throw ConfigError("checkpoint lacks " + name);
  };
  ModelConfig c;
  const int kind = static_cast<int>(find("meta.kind")[0]);
  if (kind != 0 && kind != 1) throw ConfigError("checkpoint has unknown model kind");
  c.kind = static_cast<ModelKind>(kind);
  const auto& sc = find("meta.scale");
  if (sc.size() != 3 && sc.size() != 5) throw ConfigError("malformed meta.scale");
  double scale = sc[0];
  if (sc.size() == 5) scale = (scale + static_cast<double>(sc[3])) + static_cast<double>(sc[4]);
  c.scale = {scale, static_cast<int>(sc[1]), static_cast<int>(sc[2])};
  const auto& cl = find("meta.clip");
  c.clip = {static_cast<int>(cl[0]), static_cast<int>(cl[1])};
  c.dropout_keep = find("meta.dropout_keep")[0];
  const auto& a = find("meta.arch");
  if (a.size() < 6 || (a.size() - 6) % 3 != 0) throw ConfigError("malformed meta.arch");
  c.extractor.in_channels = static_cast<int>(a[0]);
  c.extractor.stem_channels = static_cast<int>(a[1]);
  c.extractor.stem_stride = static_cast<int>(a[2]);
  c.lstm_hidden = static_cast<int>(a[3]);
  c.lstm_groups = static_cast<int>(a[4]);
  c.lstm_kernel = static_cast<int>(a[5]);
  for (std::size_t i = 6; i < a.size(); i += 3)
    c.extractor.blocks.push_back({static_cast<int>(a[i]), static_cast<int>(a[i + 1]), static_cast<int>(a[i + 2])});
  return c;
}

inline std::vector<std::uint8_t> encode_model(const SweepModel<float>& m) {
  auto tensors = config_tensors(m.config());
  for (auto& t : nn::export_parameters(m.params())) tensors.push_back(std::move(t));
  return nn::encode_checkpoint(tensors);
}

inline std::unique_ptr<SweepModel<float>> decode_model(std::span<const std::uint8_t> bytes) {
  auto tensors = nn::decode_checkpoint(bytes);
  auto model = std::make_unique<SweepModel<float>>(config_from_tensors(tensors), 0);
  std::vector<nn::NamedTensor> params;
  for (auto& t : tensors)
    if (t.name.rfind("meta.", 0) != 0) params.push_back(std::move(t));
  nn::import_parameters(model->params(), params);
  return model;
}

}  // namespace blindsweep::models
