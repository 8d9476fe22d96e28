#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "blindsweep/nn/graph.hpp"

namespace blindsweep::nn {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

template <typename T>
inline T sigmoid_scalar(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  T e = std::exp(x);
  return e / (T(1) + e);
}

template <typename T>
inline T softplus_scalar(T x) {
  if (x > T(0)) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

template <typename T, typename F, typename DF>
Var unary_op(Graph<T>& g, Var x, F f, DF dfdx) {
  const Tensor<T>& xv = g.value(x);
  Tensor<T> y(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) y[i] = f(xv[i]);
  return g.record(std::move(y), {x}, [x, dfdx](Graph<T>& g, const Tensor<T>& gy) {
    const Tensor<T>& xv = g.value(x);
    Tensor<T>& gx = g.grad_buffer(x);
    for (std::size_t i = 0; i < xv.size(); ++i) gx[i] += gy[i] * dfdx(xv[i]);
  });
}

template <typename T>
Var relu6(Graph<T>& g, Var x) {
  return unary_op(
      g, x, [](T v) { return std::min(std::max(v, T(0)), T(6)); },
      [](T v) { return (v > T(0) && v < T(6)) ? T(1) : T(0); });
}

template <typename T>
Var sigmoid(Graph<T>& g, Var x) {
  return unary_op(g, x, [](T v) { return sigmoid_scalar(v); },
                  [](T v) {
                    T s = sigmoid_scalar(v);
                    return s * (T(1) - s);
                  });
}

template <typename T>
Var tanh(Graph<T>& g, Var x) {
  return unary_op(g, x, [](T v) { return std::tanh(v); },
                  [](T v) {
                    T t = std::tanh(v);
                    return T(1) - t * t;
                  });
}

template <typename T>
Var softplus(Graph<T>& g, Var x) {
  return unary_op(g, x, [](T v) { return softplus_scalar(v); },
                  [](T v) { return sigmoid_scalar(v); });
}

template <typename T>
Var square(Graph<T>& g, Var x) {
  return unary_op(g, x, [](T v) { return v * v; }, [](T v) { return T(2) * v; });
}

template <typename T>
Var scale(Graph<T>& g, Var x, T s) {
  return unary_op(g, x, [s](T v) { return s * v; }, [s](T) { return s; });
}

template <typename T>
Var add_constant(Graph<T>& g, Var x, T c) {
  return unary_op(g, x, [c](T v) { return v + c; }, [](T) { return T(1); });
}

template <typename T>
Var add(Graph<T>& g, Var a, Var b) {
  const Tensor<T>& av = g.value(a);
  const Tensor<T>& bv = g.value(b);
  if (av.shape() != bv.shape())
    throw ShapeError("add: shape " + av.shape().str() + " vs " + bv.shape().str());
  Tensor<T> y(av.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] + bv[i];
  return g.record(std::move(y), {a, b}, [a, b](Graph<T>& g, const Tensor<T>& gy) {
    g.accumulate(a, gy);
    g.accumulate(b, gy);
  });
}

template <typename T>
Var mul(Graph<T>& g, Var a, Var b) {
  const Tensor<T>& av = g.value(a);
  const Tensor<T>& bv = g.value(b);
  if (av.shape() != bv.shape())
    throw ShapeError("mul: shape " + av.shape().str() + " vs " + bv.shape().str());
  Tensor<T> y(av.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] * bv[i];
  return g.record(std::move(y), {a, b}, [a, b](Graph<T>& g, const Tensor<T>& gy) {
    const Tensor<T>& av = g.value(a);
    const Tensor<T>& bv = g.value(b);
    if (g.requires_grad(a)) {
      Tensor<T>& ga = g.grad_buffer(a);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gy[i] * bv[i];
    }
    if (g.requires_grad(b)) {
      Tensor<T>& gb = g.grad_buffer(b);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += gy[i] * av[i];
    }
  });
}

template <typename T>
Var sum(Graph<T>& g, Var x) {
  const Tensor<T>& xv = g.value(x);
  T s = T(0);
  for (T v : xv.values()) s += v;
  return g.record(Tensor<T>(Shape::scalar(), s), {x}, [x](Graph<T>& g, const Tensor<T>& gy) {
    Tensor<T>& gx = g.grad_buffer(x);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[0];
  });
}

template <typename T>
Var mean(Graph<T>& g, Var x) {
  return scale(g, sum(g, x), T(1) / static_cast<T>(g.value(x).size()));
}

// Weighted sum against a fixed tensor; used to project outputs to a scalar in checks.
template <typename T>
Var dot_constant(Graph<T>& g, Var x, const Tensor<T>& weights) {
  const Tensor<T>& xv = g.value(x);
  if (xv.size() != weights.size())
    throw ShapeError("dot_constant: " + xv.shape().str() + " vs " + weights.shape().str());
  T s = T(0);
  for (std::size_t i = 0; i < xv.size(); ++i) s += xv[i] * weights[i];
  return g.record(Tensor<T>(Shape::scalar(), s), {x},
                  [x, weights](Graph<T>& g, const Tensor<T>& gy) {
                    Tensor<T>& gx = g.grad_buffer(x);
                    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[0] * weights[i];
                  });
}

// Adds a per-channel bias (the only broadcast the library performs).
template <typename T>
Var bias_add(Graph<T>& g, Var x, Var b) {
  const Tensor<T>& xv = g.value(x);
  const Tensor<T>& bv = g.value(b);
  const int c = xv.shape().c();
  if (static_cast<int>(bv.size()) != c)
    throw ShapeError("bias_add: bias " + bv.shape().str() + " vs input " + xv.shape().str());
  Tensor<T> y(xv.shape());
  const std::size_t rows = xv.size() / c;
  for (std::size_t r = 0; r < rows; ++r)
    for (int k = 0; k < c; ++k) y[r * c + k] = xv[r * c + k] + bv[k];
  return g.record(std::move(y), {x, b}, [x, b, c, rows](Graph<T>& g, const Tensor<T>& gy) {
    g.accumulate(x, gy);
    if (g.requires_grad(b)) {
      Tensor<T>& gb = g.grad_buffer(b);
      for (std::size_t r = 0; r < rows; ++r)
        for (int k = 0; k < c; ++k) gb[k] += gy[r * c + k];
    }
  });
}

// ---------------------------------------------------------------------------
// Convolution (NHWC activations, HWIO kernels; kernel input depth is Cin/groups)
// ---------------------------------------------------------------------------

enum class Padding { same, valid };

struct ConvOptions {
  int stride = 1;
  Padding padding = Padding::same;
  int groups = 1;
};

struct ConvGeometry {
  int n, h, w, cin, kh, kw, cout, groups, stride, oh, ow, pad_top, pad_left;
  int cin_g() const { return cin / groups; }
  int cout_g() const { return cout / groups; }
};

inline ConvGeometry conv_geometry(const Shape& x, const Shape& k, const ConvOptions& o) {
  auto mismatch = [&](const std::string& why) {
    return ShapeError("conv2d: " + why + " (input " + x.str() + ", kernel " + k.str() + ")");
  };
  if (o.stride < 1) throw mismatch("stride must be >= 1");
  if (o.groups < 1) throw mismatch("groups must be >= 1");
  ConvGeometry c{};
  c.n = x.n();
  c.h = x.h();
  c.w = x.w();
  c.cin = x.c();
  c.kh = k.n();
  c.kw = k.h();
  c.cout = k.c();
  c.groups = o.groups;
  c.stride = o.stride;
  if (c.cin % o.groups != 0 || c.cout % o.groups != 0)
    throw mismatch("channels not divisible by groups=" + std::to_string(o.groups));
  if (k.w() != c.cin / o.groups) throw mismatch("kernel input depth does not match channels");
  if (o.padding == Padding::same) {
    c.oh = (c.h + o.stride - 1) / o.stride;
    c.ow = (c.w + o.stride - 1) / o.stride;
    int ph = std::max((c.oh - 1) * o.stride + c.kh - c.h, 0);
    int pw = std::max((c.ow - 1) * o.stride + c.kw - c.w, 0);
    c.pad_top = ph / 2;
    c.pad_left = pw / 2;
  } else {
    if (c.h < c.kh || c.w < c.kw) throw mismatch("kernel larger than input with valid padding");
    c.oh = (c.h - c.kh) / o.stride + 1;
    c.ow = (c.w - c.kw) / o.stride + 1;
    c.pad_top = 0;
    c.pad_left = 0;
  }
  return c;
}

namespace detail {

template <typename T>
void im2col(const Tensor<T>& x, const ConvGeometry& c, int group, std::vector<T>& cols) {
  const int cg = c.cin_g();
  const int K = c.kh * c.kw * cg;
  cols.assign(static_cast<std::size_t>(c.n) * c.oh * c.ow * K, T(0));
  std::size_t r = 0;
  for (int n = 0; n < c.n; ++n)
    for (int oh = 0; oh < c.oh; ++oh)
      for (int ow = 0; ow < c.ow; ++ow, ++r) {
        T* dst = cols.data() + r * K;
        for (int kh = 0; kh < c.kh; ++kh) {
          int ih = oh * c.stride - c.pad_top + kh;
          if (ih < 0 || ih >= c.h) continue;
          for (int kw = 0; kw < c.kw; ++kw) {
            int iw = ow * c.stride - c.pad_left + kw;
            if (iw < 0 || iw >= c.w) continue;
            const T* src = x.data() + x.index(n, ih, iw, group * cg);
            std::copy(src, src + cg, dst + (kh * c.kw + kw) * cg);
          }
        }
      }
}

template <typename T>
void col2im_add(const T* cols, const ConvGeometry& c, int group, Tensor<T>& dx) {
  const int cg = c.cin_g();
  const int K = c.kh * c.kw * cg;
  std::size_t r = 0;
  for (int n = 0; n < c.n; ++n)
    for (int oh = 0; oh < c.oh; ++oh)
      for (int ow = 0; ow < c.ow; ++ow, ++r) {
        const T* src = cols + r * K;
        for (int kh = 0; kh < c.kh; ++kh) {
          int ih = oh * c.stride - c.pad_top + kh;
          if (ih < 0 || ih >= c.h) continue;
          for (int kw = 0; kw < c.kw; ++kw) {
            int iw = ow * c.stride - c.pad_left + kw;
            if (iw < 0 || iw >= c.w) continue;
            T* dst = dx.data() + dx.index(n, ih, iw, group * cg);
            const T* s = src + (kh * c.kw + kw) * cg;
            for (int k = 0; k < cg; ++k) dst[k] += s[k];
          }
        }
      }
}

template <typename T>
void depthwise_forward(const Tensor<T>& x, const Tensor<T>& k, const ConvGeometry& c,
                       Tensor<T>& y) {
  const int C = c.cin;
  for (int n = 0; n < c.n; ++n)
    for (int oh = 0; oh < c.oh; ++oh)
      for (int ow = 0; ow < c.ow; ++ow) {
        T* out = y.data() + y.index(n, oh, ow, 0);
        for (int kh = 0; kh < c.kh; ++kh) {
          int ih = oh * c.stride - c.pad_top + kh;
          if (ih < 0 || ih >= c.h) continue;
          for (int kw = 0; kw < c.kw; ++kw) {
            int iw = ow * c.stride - c.pad_left + kw;
            if (iw < 0 || iw >= c.w) continue;
            const T* xp = x.data() + x.index(n, ih, iw, 0);
            const T* wp = k.data() + static_cast<std::size_t>(kh * c.kw + kw) * C;
            for (int ch = 0; ch < C; ++ch) out[ch] += xp[ch] * wp[ch];
          }
        }
      }
}

template <typename T>
void depthwise_backward(const Tensor<T>& x, const Tensor<T>& k, const ConvGeometry& c,
                        const Tensor<T>& gy, Tensor<T>* gx, Tensor<T>* gk) {
  const int C = c.cin;
  for (int n = 0; n < c.n; ++n)
    for (int oh = 0; oh < c.oh; ++oh)
      for (int ow = 0; ow < c.ow; ++ow) {
        const T* go = gy.data() + gy.index(n, oh, ow, 0);
        for (int kh = 0; kh < c.kh; ++kh) {
          int ih = oh * c.stride - c.pad_top + kh;
          if (ih < 0 || ih >= c.h) continue;
          for (int kw = 0; kw < c.kw; ++kw) {
            int iw = ow * c.stride - c.pad_left + kw;
            if (iw < 0 || iw >= c.w) continue;
            const std::size_t xo = x.index(n, ih, iw, 0);
            const std::size_t wo = static_cast<std::size_t>(kh * c.kw + kw) * C;
            if (gx) {
              T* gxp = gx->data() + xo;
              const T* wp = k.data() + wo;
              for (int ch = 0; ch < C; ++ch) gxp[ch] += go[ch] * wp[ch];
            }
            if (gk) {
              T* gkp = gk->data() + wo;
              const T* xp = x.data() + xo;
              for (int ch = 0; ch < C; ++ch) gkp[ch] += go[ch] * xp[ch];
            }
          }
        }
      }
}

}  // namespace detail

// Cross-correlation with zero padding. Pointwise and depthwise kernels take
// dedicated paths; everything else goes through per-group im2col + GEMM.
template <typename T>
Var conv2d(Graph<T>& g, Var x, Var kernel, ConvOptions opt = {}) {
  const Tensor<T>& xv = g.value(x);
  const Tensor<T>& kv = g.value(kernel);
  const ConvGeometry c = conv_geometry(xv.shape(), kv.shape(), opt);
  Tensor<T> y(Shape(c.n, c.oh, c.ow, c.cout));
  const int rows = c.n * c.oh * c.ow;

  const bool pointwise = c.kh == 1 && c.kw == 1 && c.stride == 1 && c.groups == 1;
  const bool depthwise = c.groups == c.cin && c.cout == c.cin && c.groups > 1;

  if (pointwise) {
    MatMap<T>(y.data(), rows, c.cout).noalias() =
        ConstMatMap<T>(xv.data(), rows, c.cin) * ConstMatMap<T>(kv.data(), c.cin, c.cout);
    return g.record(std::move(y), {x, kernel},
                    [x, kernel, c, rows](Graph<T>& g, const Tensor<T>& gy) {
                      ConstMatMap<T> dy(gy.data(), rows, c.cout);
                      if (g.requires_grad(x)) {
                        const Tensor<T>& kv = g.value(kernel);
                        MatMap<T>(g.grad_buffer(x).data(), rows, c.cin).noalias() +=
                            dy * ConstMatMap<T>(kv.data(), c.cin, c.cout).transpose();
                      }
                      if (g.requires_grad(kernel)) {
                        const Tensor<T>& xv = g.value(x);
                        MatMap<T>(g.grad_buffer(kernel).data(), c.cin, c.cout).noalias() +=
                            ConstMatMap<T>(xv.data(), rows, c.cin).transpose() * dy;
                      }
                    });
  }

  if (depthwise) {
    detail::depthwise_forward(xv, kv, c, y);
    return g.record(std::move(y), {x, kernel}, [x, kernel, c](Graph<T>& g, const Tensor<T>& gy) {
      Tensor<T>* gx = g.requires_grad(x) ? &g.grad_buffer(x) : nullptr;
      Tensor<T>* gk = g.requires_grad(kernel) ? &g.grad_buffer(kernel) : nullptr;
      detail::depthwise_backward(g.value(x), g.value(kernel), c, gy, gx, gk);
    });
  }

  const int K = c.kh * c.kw * c.cin_g();
  const int cog = c.cout_g();
  std::vector<std::vector<T>> cols(c.groups);
  Eigen::Map<RowMat<T>, 0, Eigen::OuterStride<>> ymat(y.data(), rows, c.cout,
                                                        Eigen::OuterStride<>(c.cout));
  ConstMatMap<T> kmat(kv.data(), K, c.cout);
  for (int gi = 0; gi < c.groups; ++gi) {
    detail::im2col(xv, c, gi, cols[gi]);
    ymat.middleCols(gi * cog, cog).noalias() =
        ConstMatMap<T>(cols[gi].data(), rows, K) * kmat.middleCols(gi * cog, cog);
  }
  const bool keep_cols = g.recording();
  if (!keep_cols) cols.clear();
  return g.record(
      std::move(y), {x, kernel},
      [x, kernel, c, rows, K, cog, cols = std::move(cols)](Graph<T>& g, const Tensor<T>& gy) {
        Eigen::Map<const RowMat<T>, 0, Eigen::OuterStride<>> dy(gy.data(), rows, c.cout,
                                                                Eigen::OuterStride<>(c.cout));
        const Tensor<T>& kv = g.value(kernel);
        ConstMatMap<T> kmat(kv.data(), K, c.cout);
        std::vector<T> dcols;
        for (int gi = 0; gi < c.groups; ++gi) {
          if (g.requires_grad(kernel)) {
            MatMap<T> gk(g.grad_buffer(kernel).data(), K, c.cout);
            gk.middleCols(gi * cog, cog).noalias() +=
                ConstMatMap<T>(cols[gi].data(), rows, K).transpose() *
                dy.middleCols(gi * cog, cog);
          }
          if (g.requires_grad(x)) {
            dcols.resize(static_cast<std::size_t>(rows) * K);
            MatMap<T>(dcols.data(), rows, K).noalias() =
                dy.middleCols(gi * cog, cog) * kmat.middleCols(gi * cog, cog).transpose();
            detail::col2im_add(dcols.data(), c, gi, g.grad_buffer(x));
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Pooling, dense, reshaping
// ---------------------------------------------------------------------------

// Spatial mean: [N,H,W,C] -> [N,1,1,C].
template <typename T>
Var avg_pool(Graph<T>& g, Var x) {
  const Tensor<T>& xv = g.value(x);
  const Shape s = xv.shape();
  const int hw = s.h() * s.w();
  Tensor<T> y(Shape(s.n(), 1, 1, s.c()));
  for (int n = 0; n < s.n(); ++n)
    for (int p = 0; p < hw; ++p)
      for (int c = 0; c < s.c(); ++c)
        y[n * s.c() + c] += xv[(static_cast<std::size_t>(n) * hw + p) * s.c() + c];
  const T inv = T(1) / static_cast<T>(hw);
  for (auto& v : y.values()) v *= inv;
  return g.record(std::move(y), {x}, [x, s, hw, inv](Graph<T>& g, const Tensor<T>& gy) {
    Tensor<T>& gx = g.grad_buffer(x);
    for (int n = 0; n < s.n(); ++n)
      for (int p = 0; p < hw; ++p)
        for (int c = 0; c < s.c(); ++c)
          gx[(static_cast<std::size_t>(n) * hw + p) * s.c() + c] += gy[n * s.c() + c] * inv;
  });
}

// [N,1,1,Cin] x [Cin,Cout] + [Cout] -> [N,1,1,Cout].
template <typename T>
Var dense(Graph<T>& g, Var x, Var weight, Var bias) {
  const Shape xs = g.value(x).shape();
  const Shape ws = g.value(weight).shape();
  if (xs.h() != 1 || xs.w() != 1 || ws.n() != 1 || ws.h() != 1 || ws.w() != xs.c())
    throw ShapeError("dense: input " + xs.str() + " incompatible with weight " + ws.str());
  return bias_add(g, conv2d(g, x, weight), bias);
}

template <typename T>
Var concat_channels(Graph<T>& g, Var a, Var b) {
  const Tensor<T>& av = g.value(a);
  const Tensor<T>& bv = g.value(b);
  const Shape sa = av.shape(), sb = bv.shape();
  if (sa.n() != sb.n() || sa.h() != sb.h() || sa.w() != sb.w())
    throw ShapeError("concat_channels: " + sa.str() + " vs " + sb.str());
  const int ca = sa.c(), cb = sb.c();
  const std::size_t rows = av.size() / ca;
  Tensor<T> y(Shape(sa.n(), sa.h(), sa.w(), ca + cb));
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy(av.data() + r * ca, av.data() + (r + 1) * ca, y.data() + r * (ca + cb));
    std::copy(bv.data() + r * cb, bv.data() + (r + 1) * cb, y.data() + r * (ca + cb) + ca);
  }
  return g.record(std::move(y), {a, b}, [a, b, ca, cb, rows](Graph<T>& g, const Tensor<T>& gy) {
    if (g.requires_grad(a)) {
      Tensor<T>& ga = g.grad_buffer(a);
      for (std::size_t r = 0; r < rows; ++r)
        for (int k = 0; k < ca; ++k) ga[r * ca + k] += gy[r * (ca + cb) + k];
    }
    if (g.requires_grad(b)) {
      Tensor<T>& gb = g.grad_buffer(b);
      for (std::size_t r = 0; r < rows; ++r)
        for (int k = 0; k < cb; ++k) gb[r * cb + k] += gy[r * (ca + cb) + ca + k];
    }
  });
}

// Selects batch entries by index (repeats allowed); gradients scatter-add back.
template <typename T>
Var gather_batch(Graph<T>& g, Var x, std::vector<int> rows) {
  const Tensor<T>& xv = g.value(x);
  const Shape s = xv.shape();
  const std::size_t block = static_cast<std::size_t>(s.h()) * s.w() * s.c();
  Tensor<T> y(Shape(static_cast<int>(rows.size()), s.h(), s.w(), s.c()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= s.n())
      throw ShapeError("gather_batch: row " + std::to_string(rows[i]) + " outside " + s.str());
    std::copy(xv.data() + rows[i] * block, xv.data() + (rows[i] + 1) * block,
              y.data() + i * block);
  }
  return g.record(std::move(y), {x},
                  [x, block, rows = std::move(rows)](Graph<T>& g, const Tensor<T>& gy) {
                    Tensor<T>& gx = g.grad_buffer(x);
                    for (std::size_t i = 0; i < rows.size(); ++i)
                      for (std::size_t k = 0; k < block; ++k)
                        gx[rows[i] * block + k] += gy[i * block + k];
                  });
}

// Inverted dropout: kept activations are scaled by 1/keep so the expectation is unchanged.
template <typename T>
Var dropout(Graph<T>& g, Var x, double keep, std::mt19937_64& rng) {
  if (keep <= 0.0 || keep > 1.0) throw ArgumentError("dropout keep probability must be in (0, 1]");
  if (keep == 1.0) return x;
  const Tensor<T>& xv = g.value(x);
  Tensor<T> mask(xv.shape());
  std::bernoulli_distribution keep_dist(keep);
  const T s = T(1) / static_cast<T>(keep);
  for (auto& m : mask.values()) m = keep_dist(rng) ? s : T(0);
  Tensor<T> y(xv.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = xv[i] * mask[i];
  return g.record(std::move(y), {x}, [x, mask = std::move(mask)](Graph<T>& g, const Tensor<T>& gy) {
    Tensor<T>& gx = g.grad_buffer(x);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i] * mask[i];
  });
}

// ---------------------------------------------------------------------------
// Convolutional LSTM cell arithmetic.
// Gate pre-activations are laid out group-major: group k owns channels
// [4*k*hg, 4*(k+1)*hg) ordered (input, forget, output, candidate), each hg wide,
// where hg = hidden/groups. With groups=1 this is the usual [i|f|o|g] layout.
// ---------------------------------------------------------------------------

struct GateLayout {
  int hidden;
  int groups;
  int hg() const { return hidden / groups; }
  // Channel of gate `gate` (0=i,1=f,2=o,3=g) for hidden channel `j`.
  int channel(int gate, int j) const {
    int h = hg();
    return (j / h) * 4 * h + gate * h + (j % h);
  }
};

template <typename T>
Var lstm_cell_state(Graph<T>& g, Var gates, Var c_prev, int groups) {
  const Tensor<T>& gv = g.value(gates);
  const Tensor<T>& cv = g.value(c_prev);
  const int hidden = cv.shape().c();
  if (hidden % groups != 0 || gv.shape().c() != 4 * hidden || gv.size() != 4 * cv.size())
    throw ShapeError("lstm_cell_state: gates " + gv.shape().str() + " vs state " + cv.shape().str());
  const GateLayout L{hidden, groups};
  const std::size_t rows = cv.size() / hidden;
  Tensor<T> c_new(cv.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* gr = gv.data() + r * 4 * hidden;
    for (int j = 0; j < hidden; ++j) {
      T i = sigmoid_scalar(gr[L.channel(0, j)]);
      T f = sigmoid_scalar(gr[L.channel(1, j)]);
      T cand = std::tanh(gr[L.channel(3, j)]);
      c_new[r * hidden + j] = f * cv[r * hidden + j] + i * cand;
    }
  }
  return g.record(std::move(c_new), {gates, c_prev},
                  [gates, c_prev, L, rows](Graph<T>& g, const Tensor<T>& gy) {
                    const Tensor<T>& gv = g.value(gates);
                    const Tensor<T>& cv = g.value(c_prev);
                    const int H = L.hidden;
                    Tensor<T>* gg = g.requires_grad(gates) ? &g.grad_buffer(gates) : nullptr;
                    Tensor<T>* gc = g.requires_grad(c_prev) ? &g.grad_buffer(c_prev) : nullptr;
                    for (std::size_t r = 0; r < rows; ++r) {
                      const T* gr = gv.data() + r * 4 * H;
                      for (int j = 0; j < H; ++j) {
                        const T dc = gy[r * H + j];
                        T i = sigmoid_scalar(gr[L.channel(0, j)]);
                        T f = sigmoid_scalar(gr[L.channel(1, j)]);
                        T cand = std::tanh(gr[L.channel(3, j)]);
                        if (gc) (*gc)[r * H + j] += dc * f;
                        if (gg) {
                          T* out = gg->data() + r * 4 * H;
                          out[L.channel(0, j)] += dc * cand * i * (T(1) - i);
                          out[L.channel(1, j)] += dc * cv[r * H + j] * f * (T(1) - f);
                          out[L.channel(3, j)] += dc * i * (T(1) - cand * cand);
                        }
                      }
                    }
                  });
}

template <typename T>
Var lstm_cell_output(Graph<T>& g, Var gates, Var c_new, int groups) {
  const Tensor<T>& gv = g.value(gates);
  const Tensor<T>& cv = g.value(c_new);
  const int hidden = cv.shape().c();
  if (hidden % groups != 0 || gv.shape().c() != 4 * hidden || gv.size() != 4 * cv.size())
    throw ShapeError("lstm_cell_output: gates " + gv.shape().str() + " vs state " + cv.shape().str());
  const GateLayout L{hidden, groups};
  const std::size_t rows = cv.size() / hidden;
  Tensor<T> h(cv.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* gr = gv.data() + r * 4 * hidden;
    for (int j = 0; j < hidden; ++j)
      h[r * hidden + j] = sigmoid_scalar(gr[L.channel(2, j)]) * std::tanh(cv[r * hidden + j]);
  }
  return g.record(std::move(h), {gates, c_new},
                  [gates, c_new, L, rows](Graph<T>& g, const Tensor<T>& gy) {
                    const Tensor<T>& gv = g.value(gates);
                    const Tensor<T>& cv = g.value(c_new);
                    const int H = L.hidden;
                    Tensor<T>* gg = g.requires_grad(gates) ? &g.grad_buffer(gates) : nullptr;
                    Tensor<T>* gc = g.requires_grad(c_new) ? &g.grad_buffer(c_new) : nullptr;
                    for (std::size_t r = 0; r < rows; ++r) {
                      const T* gr = gv.data() + r * 4 * H;
                      for (int j = 0; j < H; ++j) {
                        const T dh = gy[r * H + j];
                        T o = sigmoid_scalar(gr[L.channel(2, j)]);
                        T tc = std::tanh(cv[r * H + j]);
                        if (gg) (*gg)[r * 4 * H + L.channel(2, j)] += dh * tc * o * (T(1) - o);
                        if (gc) (*gc)[r * H + j] += dh * o * (T(1) - tc * tc);
                      }
                    }
                  });
}

}  // namespace blindsweep::nn
