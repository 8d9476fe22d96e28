#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "blindsweep/errors.hpp"
#include "blindsweep/nn/tensor.hpp"

namespace blindsweep::preprocess {

using nn::Shape;
using nn::Tensor;

// Target physical scale and frame size for a model input.
struct ScaleSpec {
  double target_scale_cm_per_px = 0.0333;
  int target_width = 576;
  int target_height = 432;

  static ScaleSpec gestational_age() { return {0.0333, 576, 432}; }
  static ScaleSpec presentation() { return {0.06, 320, 240}; }
  // Same field of view, fewer pixels.
  static ScaleSpec desk_gestational_age() { return {0.80, 48, 36}; }
  static ScaleSpec desk_presentation() { return {1.20, 32, 24}; }

  bool operator==(const ScaleSpec&) const = default;
};

struct ClipSpec {
  int stride = 2;
  int clip_len = 24;

  static ClipSpec gestational_age() { return {2, 24}; }
  static ClipSpec presentation() { return {3, 100}; }

  bool operator==(const ClipSpec&) const = default;
};

// ---------------------------------------------------------------------------
// Scale normalisation
// ---------------------------------------------------------------------------

// Precomputed sampling tables for one (source size, source scale) -> ScaleSpec
// mapping. Bilinear with half-pixel centres (no corner alignment) at the exact
// factor alpha_i / alpha, then a centred crop or zero pad, values divided by 255.
class FrameRescaler {
 public:
  FrameRescaler(int width, int height, double source_scale, const ScaleSpec& spec)
      : width_(width), height_(height), spec_(spec) {
    if (!(source_scale > 0.0)) throw ArgumentError("source scale must be positive");
    if (!(spec.target_scale_cm_per_px > 0.0)) throw ArgumentError("target scale must be positive");
    if (width < 1 || height < 1) throw ArgumentError("frame must have positive size");
    factor_ = source_scale / spec.target_scale_cm_per_px;
    cols_ = axis(width, spec.target_width);
    rows_ = axis(height, spec.target_height);
  }

  double factor() const { return factor_; }
  const ScaleSpec& spec() const { return spec_; }

  void apply(std::span<const std::uint8_t> frame, float* out) const {
    if (frame.size() != static_cast<std::size_t>(width_) * height_)
      throw ShapeError("frame size does not match rescaler input size");
    const int tw = spec_.target_width;
    for (int y = 0; y < spec_.target_height; ++y) {
      const Tap& ry = rows_[y];
      float* dst = out + static_cast<std::size_t>(y) * tw;
      if (!ry.inside) {
        std::fill(dst, dst + tw, 0.0f);
        continue;
      }
      const std::uint8_t* r0 = frame.data() + static_cast<std::size_t>(ry.i0) * width_;
      const std::uint8_t* r1 = frame.data() + static_cast<std::size_t>(ry.i1) * width_;
      for (int x = 0; x < tw; ++x) {
        const Tap& cx = cols_[x];
        if (!cx.inside) {
          dst[x] = 0.0f;
          continue;
        }
        const double top = (1.0 - cx.frac) * r0[cx.i0] + cx.frac * r0[cx.i1];
        const double bottom = (1.0 - cx.frac) * r1[cx.i0] + cx.frac * r1[cx.i1];
        dst[x] = static_cast<float>(((1.0 - ry.frac) * top + ry.frac * bottom) / 255.0);
      }
    }
  }

  std::vector<float> operator()(std::span<const std::uint8_t> frame) const {
    std::vector<float> out(static_cast<std::size_t>(spec_.target_width) * spec_.target_height);
    apply(frame, out.data());
    return out;
  }

 private:
  struct Tap {
    bool inside = false;
    int i0 = 0, i1 = 0;
    double frac = 0.0;
  };

  std::vector<Tap> axis(int src, int target) const {
    const int resized = static_cast<int>(std::lround(src * factor_));
    std::vector<Tap> taps(target);
    for (int t = 0; t < target; ++t) {
      const int r = resized >= target ? t + (resized - target) / 2 : t - (target - resized) / 2;
      if (r < 0 || r >= resized) continue;
      double s = (r + 0.5) / factor_ - 0.5;
      s = std::clamp(s, 0.0, static_cast<double>(src - 1));
      Tap tap;
      tap.inside = true;
      tap.i0 = static_cast<int>(std::floor(s));
      tap.i1 = std::min(tap.i0 + 1, src - 1);
      tap.frac = s - tap.i0;
      taps[t] = tap;
    }
    return taps;
  }

  int width_, height_;
  ScaleSpec spec_;
  double factor_ = 1.0;
  std::vector<Tap> cols_, rows_;
};

inline std::vector<float> rescale_frame(std::span<const std::uint8_t> frame, int width, int height,
                                        double source_scale, const ScaleSpec& spec) {
  return FrameRescaler(width, height, source_scale, spec)(frame);
}

// ---------------------------------------------------------------------------
// Clips
// ---------------------------------------------------------------------------

struct ClipOrigin {
  std::string visit_id;
  int sweep = 0;
  int clip_index = 0;
};

// frames: [clip_len, H, W, 1], values in [0, 1].
struct Clip {
  Tensor<float> frames;
  ClipOrigin origin;

  int length() const { return frames.shape().n(); }
};

// Raw-frame indices for each GA clip: every stride-th frame from 0, cut into
// consecutive windows of clip_len, trailing remainder dropped.
inline std::vector<std::vector<int>> ga_clip_frame_indices(int n_frames, const ClipSpec& spec) {
  if (spec.stride < 1 || spec.clip_len < 1) throw ArgumentError("clip stride and length must be >= 1");
  const int n_clips = std::max(n_frames, 0) / spec.stride / spec.clip_len;
  std::vector<std::vector<int>> out(n_clips);
  for (int c = 0; c < n_clips; ++c)
    for (int k = 0; k < spec.clip_len; ++k) out[c].push_back((c * spec.clip_len + k) * spec.stride);
  return out;
}

inline int ga_clip_count(int n_frames, const ClipSpec& spec) {
  return std::max(n_frames, 0) / spec.stride / spec.clip_len;
}

// Raw-frame indices for the single presentation clip: subsample, truncate to
// clip_len, or right-pad by repeating the final subsampled frame.
inline std::vector<int> presentation_clip_frame_indices(int n_frames, const ClipSpec& spec) {
  if (n_frames < 1) throw ArgumentError("cannot build a clip from an empty sweep");
  if (spec.stride < 1 || spec.clip_len < 1) throw ArgumentError("clip stride and length must be >= 1");
  std::vector<int> idx;
  for (int k = 0; k < n_frames && static_cast<int>(idx.size()) < spec.clip_len; k += spec.stride)
    idx.push_back(k);
  while (static_cast<int>(idx.size()) < spec.clip_len) idx.push_back(idx.back());
  return idx;
}

// Number of distinct frames before padding starts.
inline int presentation_valid_length(int n_frames, const ClipSpec& spec) {
  return std::min((n_frames + spec.stride - 1) / spec.stride, spec.clip_len);
}

inline Tensor<float> gather_frames(const Tensor<float>& sweep, const std::vector<int>& indices) {
  const Shape s = sweep.shape();
  const std::size_t fs = static_cast<std::size_t>(s.h()) * s.w() * s.c();
  Tensor<float> out(Shape(static_cast<int>(indices.size()), s.h(), s.w(), s.c()));
  for (std::size_t i = 0; i < indices.size(); ++i)
    std::copy(sweep.data() + indices[i] * fs, sweep.data() + (indices[i] + 1) * fs, out.data() + i * fs);
  return out;
}

// sweep: normalised frames [n_frames, H, W, 1].
inline std::vector<Clip> make_ga_clips(const Tensor<float>& sweep, const ClipSpec& spec) {
  std::vector<Clip> clips;
  int c = 0;
  for (const auto& idx : ga_clip_frame_indices(sweep.shape().n(), spec))
    clips.push_back({gather_frames(sweep, idx), {"", 0, c++}});
  return clips;
}

inline Clip make_presentation_clip(const Tensor<float>& sweep, const ClipSpec& spec) {
  if (sweep.empty() || sweep.shape().n() == 0) throw ArgumentError("cannot build a clip from an empty sweep");
  return {gather_frames(sweep, presentation_clip_frame_indices(sweep.shape().n(), spec)), {"", 0, 0}};
}

// Stacks rescaled frames of a raw u8 sweep into [n, H, W, 1].
inline Tensor<float> normalize_sweep(std::span<const std::uint8_t> pixels, int width, int height,
                                     int n_frames, double source_scale, const ScaleSpec& spec) {
  FrameRescaler rs(width, height, source_scale, spec);
  const std::size_t in = static_cast<std::size_t>(width) * height;
  const std::size_t out = static_cast<std::size_t>(spec.target_width) * spec.target_height;
  Tensor<float> t(Shape(n_frames, spec.target_height, spec.target_width, 1));
  for (int k = 0; k < n_frames; ++k) rs.apply(pixels.subspan(k * in, in), t.data() + k * out);
  return t;
}

// ---------------------------------------------------------------------------
// Augmentation
// ---------------------------------------------------------------------------

struct AugmentConfig {
  bool horizontal_flip = true;
  bool vertical_flip = true;
  double min_crop_scale = 0.85;
};

// One draw per clip; applied identically to every frame.
struct AugmentParams {
  bool flip_horizontal = false;
  bool flip_vertical = false;
  double crop_scale = 1.0;
  double offset_x = 0.0;  // crop origin as a fraction of the free margin, in [0, 1]
  double offset_y = 0.0;
};

inline AugmentParams draw_augment(std::mt19937_64& rng, const AugmentConfig& cfg = {}) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  AugmentParams p;
  const bool h = u01(rng) < 0.5;
  const bool v = u01(rng) < 0.5;
  p.flip_horizontal = cfg.horizontal_flip && h;
  p.flip_vertical = cfg.vertical_flip && v;
  p.crop_scale = cfg.min_crop_scale + (1.0 - cfg.min_crop_scale) * u01(rng);
  p.offset_x = u01(rng);
  p.offset_y = u01(rng);
  return p;
}

// Crop (window of crop_scale * size, bilinear-resized back) then flips.
inline void apply_augment(Tensor<float>& frames, const AugmentParams& p) {
  const Shape s = frames.shape();
  const int H = s.h(), W = s.w(), C = s.c();
  if (C != 1) throw ShapeError("augmentation expects single-channel frames, got " + s.str());
  const double ch = p.crop_scale * H, cw = p.crop_scale * W;
  const double oy = p.offset_y * (H - ch), ox = p.offset_x * (W - cw);
  const bool crop = p.crop_scale < 1.0;
  std::vector<float> src(static_cast<std::size_t>(H) * W);
  for (int n = 0; n < s.n(); ++n) {
    float* f = frames.data() + static_cast<std::size_t>(n) * H * W;
    std::copy(f, f + H * W, src.begin());
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        double v;
        if (crop) {
          const double sy = std::clamp(oy + (y + 0.5) * ch / H - 0.5, 0.0, H - 1.0);
          const double sx = std::clamp(ox + (x + 0.5) * cw / W - 0.5, 0.0, W - 1.0);
          const int y0 = static_cast<int>(sy), x0 = static_cast<int>(sx);
          const int y1 = std::min(y0 + 1, H - 1), x1 = std::min(x0 + 1, W - 1);
          const double fy = sy - y0, fx = sx - x0;
          v = (1 - fy) * ((1 - fx) * src[y0 * W + x0] + fx * src[y0 * W + x1]) +
              fy * ((1 - fx) * src[y1 * W + x0] + fx * src[y1 * W + x1]);
        } else {
          v = src[y * W + x];
        }
        const int ty = p.flip_vertical ? H - 1 - y : y;
        const int tx = p.flip_horizontal ? W - 1 - x : x;
        f[ty * W + tx] = static_cast<float>(v);
      }
  }
}

inline Clip augment_clip(Clip clip, std::mt19937_64& rng, const AugmentConfig& cfg = {}) {
  apply_augment(clip.frames, draw_augment(rng, cfg));
  return clip;
}

inline void flip_clip(Tensor<float>& frames, bool horizontal) {
  AugmentParams p;
  (horizontal ? p.flip_horizontal : p.flip_vertical) = true;
  apply_augment(frames, p);
}

}  // namespace blindsweep::preprocess
