#pragma once

#include <cmath>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "blindsweep/nn/ops.hpp"

namespace blindsweep::nn {

template <typename T>
Tensor<T> he_normal(Shape shape, int fan_in, std::mt19937_64& rng, double gain = 1.0) {
  std::normal_distribution<double> dist(0.0, gain * std::sqrt(2.0 / std::max(fan_in, 1)));
  Tensor<T> t(shape);
  for (auto& v : t.values()) v = static_cast<T>(dist(rng));
  return t;
}

struct BlockSpec {
  int expansion;
  int stride;
  int out_channels;
};

// Stem convolution followed by a stack of inverted-residual blocks. One table
// describes both the desk-scale extractor and the full MobileNetV2 layout.
struct ExtractorSpec {
  int in_channels = 1;
  int stem_channels = 16;
  int stem_stride = 2;
  std::vector<BlockSpec> blocks;

  int out_channels() const { return blocks.empty() ? stem_channels : blocks.back().out_channels; }

  // Output spatial size for an input of (h, w) with "same" padding.
  std::pair<int, int> output_size(int h, int w) const {
    auto down = [](int v, int s) { return (v + s - 1) / s; };
    h = down(h, stem_stride);
    w = down(w, stem_stride);
    for (const auto& b : blocks) {
      h = down(h, b.stride);
      w = down(w, b.stride);
    }
    return {h, w};
  }
};

// Pointwise expand -> depthwise 3x3 -> linear pointwise projection, with a
// residual connection when the block preserves shape.
template <typename T>
class InvertedResidual {
 public:
  InvertedResidual(ParameterSet<T>& ps, const std::string& prefix, int in_channels,
                   BlockSpec spec, std::mt19937_64& rng)
      : in_(in_channels), hidden_(in_channels * spec.expansion), out_(spec.out_channels),
        stride_(spec.stride) {
    if (spec.stride != 1 && spec.stride != 2)
      throw ArgumentError("inverted residual stride must be 1 or 2");
    if (spec.expansion < 1) throw ArgumentError("expansion must be >= 1");
    expand_w_ = &ps.add(prefix + ".expand.w", he_normal<T>(Shape(1, 1, in_, hidden_), in_, rng));
    expand_b_ = &ps.add(prefix + ".expand.b", Tensor<T>(Shape::vector(hidden_)));
    dw_w_ = &ps.add(prefix + ".depthwise.w", he_normal<T>(Shape(3, 3, 1, hidden_), 9, rng));
    dw_b_ = &ps.add(prefix + ".depthwise.b", Tensor<T>(Shape::vector(hidden_)));
    proj_w_ = &ps.add(prefix + ".project.w",
                      he_normal<T>(Shape(1, 1, hidden_, out_), hidden_, rng, 0.5));
    proj_b_ = &ps.add(prefix + ".project.b", Tensor<T>(Shape::vector(out_)));
  }

  bool has_residual() const { return stride_ == 1 && in_ == out_; }

  Var forward(Graph<T>& g, Var x) const {
    Var h = relu6(g, bias_add(g, conv2d(g, x, g.param(*expand_w_)), g.param(*expand_b_)));
    h = conv2d(g, h, g.param(*dw_w_), ConvOptions{stride_, Padding::same, hidden_});
    h = relu6(g, bias_add(g, h, g.param(*dw_b_)));
    h = bias_add(g, conv2d(g, h, g.param(*proj_w_)), g.param(*proj_b_));
    return has_residual() ? add(g, h, x) : h;
  }

 private:
  int in_, hidden_, out_, stride_;
  Parameter<T>* expand_w_;
  Parameter<T>* expand_b_;
  Parameter<T>* dw_w_;
  Parameter<T>* dw_b_;
  Parameter<T>* proj_w_;
  Parameter<T>* proj_b_;
};

template <typename T>
class FeatureExtractor {
 public:
  FeatureExtractor(ParameterSet<T>& ps, const std::string& prefix, const ExtractorSpec& spec,
                   std::mt19937_64& rng)
      : spec_(spec) {
    stem_w_ = &ps.add(prefix + ".stem.w",
                      he_normal<T>(Shape(3, 3, spec.in_channels, spec.stem_channels),
                                   9 * spec.in_channels, rng));
    stem_b_ = &ps.add(prefix + ".stem.b", Tensor<T>(Shape::vector(spec.stem_channels)));
    int c = spec.stem_channels;
    for (std::size_t i = 0; i < spec.blocks.size(); ++i) {
      blocks_.emplace_back(ps, prefix + ".block" + std::to_string(i), c, spec.blocks[i], rng);
      c = spec.blocks[i].out_channels;
    }
  }

  const ExtractorSpec& spec() const { return spec_; }

  // [N, H, W, Cin] -> final spatial feature map (no global pooling).
  Var forward(Graph<T>& g, Var frames) const {
    Var h = conv2d(g, frames, g.param(*stem_w_), ConvOptions{spec_.stem_stride});
    h = relu6(g, bias_add(g, h, g.param(*stem_b_)));
    for (const auto& b : blocks_) h = b.forward(g, h);
    return h;
  }

 private:
  ExtractorSpec spec_;
  Parameter<T>* stem_w_;
  Parameter<T>* stem_b_;
  std::vector<InvertedResidual<T>> blocks_;
};

struct LstmState {
  Var cell;
  Var hidden;
};

// Convolutional LSTM whose input and recurrent convolutions are partitioned
// into `groups` independent channel groups.
template <typename T>
class GroupedConvLstm {
 public:
  GroupedConvLstm(ParameterSet<T>& ps, const std::string& prefix, int in_channels, int hidden,
                  int groups, std::mt19937_64& rng, int kernel = 3, T forget_bias = T(1))
      : in_(in_channels), hidden_(hidden), groups_(groups), kernel_(kernel) {
    if (groups < 1 || in_channels % groups != 0 || hidden % groups != 0)
      throw ArgumentError("grouped conv LSTM: channels (" + std::to_string(in_channels) + ", " +
                          std::to_string(hidden) + ") not divisible by groups " +
                          std::to_string(groups));
    const int in_g = in_ / groups_, h_g = hidden_ / groups_;
    wx_ = &ps.add(prefix + ".wx", he_normal<T>(Shape(kernel, kernel, in_g, 4 * hidden_),
                                               kernel * kernel * (in_g + h_g), rng, 0.5));
    wh_ = &ps.add(prefix + ".wh", he_normal<T>(Shape(kernel, kernel, h_g, 4 * hidden_),
                                               kernel * kernel * (in_g + h_g), rng, 0.5));
    Tensor<T> bias(Shape::vector(4 * hidden_));
    GateLayout layout{hidden_, groups_};
    for (int j = 0; j < hidden_; ++j) bias[layout.channel(1, j)] = forget_bias;
    b_ = &ps.add(prefix + ".b", std::move(bias));
  }

  int hidden() const { return hidden_; }
  int groups() const { return groups_; }

  LstmState zero_state(Graph<T>& g, int n, int h, int w) const {
    return {g.constant(Tensor<T>(Shape(n, h, w, hidden_))),
            g.constant(Tensor<T>(Shape(n, h, w, hidden_)))};
  }

  // One time step; returns the new state and the output map (the new hidden state).
  std::pair<LstmState, Var> step(Graph<T>& g, const LstmState& state, Var x) const {
    const ConvOptions opt{1, Padding::same, groups_};
    Var gates = add(g, conv2d(g, x, g.param(*wx_), opt), conv2d(g, state.hidden, g.param(*wh_), opt));
    gates = bias_add(g, gates, g.param(*b_));
    Var c = lstm_cell_state(g, gates, state.cell, groups_);
    Var h = lstm_cell_output(g, gates, c, groups_);
    return {LstmState{c, h}, h};
  }

 private:
  int in_, hidden_, groups_, kernel_;
  Parameter<T>* wx_;
  Parameter<T>* wh_;
  Parameter<T>* b_;
};

enum class HeadKind { linear, sigmoid, softplus };

template <typename T>
Var activate(Graph<T>& g, Var x, HeadKind kind) {
  switch (kind) {
    case HeadKind::sigmoid: return sigmoid(g, x);
    case HeadKind::softplus: return softplus(g, x);
    case HeadKind::linear: break;
  }
  return x;
}

// Spatial average pool -> dense -> activation; one value per batch element.
template <typename T>
Var head(Graph<T>& g, Var features, Var weight, Var bias, HeadKind kind) {
  return activate(g, dense(g, avg_pool(g, features), weight, bias), kind);
}

template <typename T>
struct DenseParams {
  Parameter<T>* weight = nullptr;
  Parameter<T>* bias = nullptr;

  static DenseParams make(ParameterSet<T>& ps, const std::string& prefix, int in, int out,
                          std::mt19937_64& rng, T bias_init = T(0), double gain = 0.5) {
    DenseParams d;
    d.weight = &ps.add(prefix + ".w", he_normal<T>(Shape::matrix(in, out), in, rng, gain));
    d.bias = &ps.add(prefix + ".b", Tensor<T>(Shape::vector(out), bias_init));
    return d;
  }

  Var forward(Graph<T>& g, Var x) const {
    return dense(g, x, g.param(*weight), g.param(*bias));
  }
};

}  // namespace blindsweep::nn
