#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "blindsweep/preprocess.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace blindsweep;
using testing_support::to_vector;
using namespace blindsweep::preprocess;

namespace {

std::vector<std::uint8_t> random_frame(int w, int h, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> u(0, 255);
  std::vector<std::uint8_t> f(static_cast<std::size_t>(w) * h);
  for (auto& v : f) v = static_cast<std::uint8_t>(u(rng));
  return f;
}

// Frame-index sweep: frame k is filled with the value k / 1000.
Tensor<float> indexed_sweep(int n) {
  Tensor<float> t(Shape(n, 2, 3, 1));
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < 6; ++i) t[k * 6 + i] = static_cast<float>(k) / 1000.0f;
  return t;
}

int frame_id(const Tensor<float>& clip, int k) { return static_cast<int>(std::lround(clip[k * 6] * 1000.0f)); }

// Smooth blob sampled at pixel centres of a w x h frame with scale a, centred field of view.
std::vector<std::uint8_t> smooth_scene(int w, int h, double a) {
  std::vector<std::uint8_t> f(static_cast<std::size_t>(w) * h);
  for (int py = 0; py < h; ++py)
    for (int px = 0; px < w; ++px) {
      const double x = ((px + 0.5) - 0.5 * w) * a, y = ((py + 0.5) - 0.5 * h) * a;
      const double v = 60 + 150 * std::exp(-((x - 1.5) * (x - 1.5) + (y + 1.0) * (y + 1.0)) / (2 * 9.0)) +
                       20 * std::sin(0.25 * x) * std::cos(0.2 * y);
      f[static_cast<std::size_t>(py) * w + px] = static_cast<std::uint8_t>(std::lround(v));
    }
  return f;
}

}  // namespace

TEST(Rescale, IdentityFactorOnlyScalesValues) {
  std::mt19937_64 rng(1);
  const auto f = random_frame(8, 6, rng);
  const auto out = rescale_frame(f, 8, 6, 0.5, {0.5, 8, 6});
  for (std::size_t i = 0; i < f.size(); ++i) EXPECT_FLOAT_EQ(out[i], f[i] / 255.0f);
}

TEST(Rescale, MatchesReferenceResampler) {
  std::mt19937_64 rng(2);
  for (auto [tw, th] : {std::pair{24, 18}, std::pair{20, 14}, std::pair{12, 30}}) {
    const auto f = random_frame(17, 13, rng);
    const ScaleSpec spec{1.0 / 1.37, tw, th};
    const auto got = rescale_frame(f, 17, 13, 1.0, spec);
    const auto want = oracle::rescale(std::vector<double>(f.begin(), f.end()), 17, 13, 1.37, tw, th);
    for (std::size_t i = 0; i < got.size(); ++i) ASSERT_NEAR(got[i], want[i], 1e-6) << "pixel " << i;
  }
}

TEST(Rescale, DoubleFactorUpsamplesEachAxis) {
  std::vector<std::uint8_t> f{0, 255, 255, 0};
  const auto out = rescale_frame(f, 2, 2, 2.0, {1.0, 4, 4});
  EXPECT_FLOAT_EQ(out[0], 0.0f);
  EXPECT_FLOAT_EQ(out[1], 0.25f);
  EXPECT_FLOAT_EQ(out[2], 0.75f);
  EXPECT_FLOAT_EQ(out[3], 1.0f);
  EXPECT_FLOAT_EQ(out[15], 0.0f);
}

TEST(Rescale, ZeroPadsSymmetrically) {
  std::vector<std::uint8_t> f(4, 255);
  const auto out = rescale_frame(f, 2, 2, 1.0, {1.0, 4, 4});
  const float want[16] = {0, 0, 0, 0, 0, 1, 1, 0, 0, 1, 1, 0, 0, 0, 0, 0};
  for (int i = 0; i < 16; ++i) EXPECT_FLOAT_EQ(out[i], want[i]);
}

TEST(Rescale, NonPositiveScaleIsArgumentError) {
  std::vector<std::uint8_t> f(4, 0);
  EXPECT_THROW(rescale_frame(f, 2, 2, 0.0, {1.0, 2, 2}), ArgumentError);
  EXPECT_THROW(rescale_frame(f, 2, 2, -1.0, {1.0, 2, 2}), ArgumentError);
}

TEST(Rescale, ScaleEquivariance) {
  const ScaleSpec spec{0.3, 64, 48};
  const auto fine = rescale_frame(smooth_scene(120, 90, 0.2), 120, 90, 0.2, spec);
  const auto coarse = rescale_frame(smooth_scene(60, 45, 0.4), 60, 45, 0.4, spec);
  double worst = 0.0;
  for (int y = 0; y < 48; ++y)
    for (int x = 0; x < 64; ++x) worst = std::max(worst, static_cast<double>(std::abs(fine[y * 64 + x] - coarse[y * 64 + x])));
  EXPECT_LE(worst, 2e-2);
}

TEST(Rescale, OutputInUnitRange) {
  std::mt19937_64 rng(3);
  const auto f = random_frame(31, 23, rng);
  for (float v : rescale_frame(f, 31, 23, 0.7, {0.45, 40, 30})) {
    EXPECT_GE(v, 0.0f);
    EXPECT_LE(v, 1.0f);
  }
}

TEST(GaClips, CountLaw) {
  const ClipSpec spec = ClipSpec::gestational_age();
  EXPECT_EQ(make_ga_clips(indexed_sweep(240), spec).size(), 5u);
  EXPECT_EQ(make_ga_clips(indexed_sweep(47), spec).size(), 0u);
  for (int n = 0; n < 400; n += 7) EXPECT_EQ(ga_clip_count(n, spec), (n / 2) / 24);
}

TEST(GaClips, TrailingFrameDropped) {
  const ClipSpec spec = ClipSpec::gestational_age();
  const auto a = make_ga_clips(indexed_sweep(240), spec);
  const auto b = make_ga_clips(indexed_sweep(241), spec);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(to_vector(a[i].frames), to_vector(b[i].frames));
}

TEST(GaClips, ConsecutiveStridedWindows) {
  const auto clips = make_ga_clips(indexed_sweep(240), ClipSpec::gestational_age());
  for (int c = 0; c < 5; ++c) {
    EXPECT_EQ(clips[c].length(), 24);
    for (int k = 0; k < 24; ++k) EXPECT_EQ(frame_id(clips[c].frames, k), (c * 24 + k) * 2);
  }
}

TEST(PresentationClip, PadsShortSweep) {
  const auto clip = make_presentation_clip(indexed_sweep(240), ClipSpec::presentation());
  ASSERT_EQ(clip.length(), 100);
  for (int k = 0; k < 80; ++k) EXPECT_EQ(frame_id(clip.frames, k), 3 * k);
  for (int k = 80; k < 100; ++k) EXPECT_EQ(frame_id(clip.frames, k), 237);
  EXPECT_EQ(presentation_valid_length(240, ClipSpec::presentation()), 80);
}

TEST(PresentationClip, TruncatesLongSweep) {
  const auto clip = make_presentation_clip(indexed_sweep(330), ClipSpec::presentation());
  ASSERT_EQ(clip.length(), 100);
  EXPECT_EQ(frame_id(clip.frames, 99), 297);
  EXPECT_EQ(presentation_valid_length(330, ClipSpec::presentation()), 100);
}

TEST(PresentationClip, DegenerateSweepRepeatsSingleFrame) {
  const auto clip = make_presentation_clip(indexed_sweep(3), ClipSpec::presentation());
  ASSERT_EQ(clip.length(), 100);
  for (int k = 0; k < 100; ++k) EXPECT_EQ(frame_id(clip.frames, k), 0);
}

TEST(PresentationClip, EmptySweepIsArgumentError) {
  EXPECT_THROW(make_presentation_clip(Tensor<float>(Shape(0, 2, 3, 1)), ClipSpec::presentation()), ArgumentError);
}

TEST(Augment, FlipIsInvolution) {
  std::mt19937_64 rng(4);
  Tensor<float> t(Shape(3, 5, 7, 1));
  for (auto& v : t.values()) v = std::uniform_real_distribution<float>(0, 1)(rng);
  for (bool horizontal : {true, false}) {
    auto u = t;
    flip_clip(u, horizontal);
    EXPECT_NE(to_vector(u), to_vector(t));
    flip_clip(u, horizontal);
    EXPECT_EQ(to_vector(u), to_vector(t));
  }
}

TEST(Augment, SameTransformOnEveryFrame) {
  std::mt19937_64 rng(5);
  Tensor<float> frame(Shape(1, 12, 16, 1));
  for (auto& v : frame.values()) v = std::uniform_real_distribution<float>(0, 1)(rng);
  Tensor<float> clip(Shape(4, 12, 16, 1));
  for (int k = 0; k < 4; ++k) std::copy(frame.data(), frame.data() + frame.size(), clip.data() + k * frame.size());
  for (int trial = 0; trial < 10; ++trial) {
    auto c = clip;
    apply_augment(c, draw_augment(rng));
    for (int k = 1; k < 4; ++k)
      for (std::size_t i = 0; i < frame.size(); ++i) ASSERT_EQ(c[k * frame.size() + i], c[i]);
  }
}

TEST(Augment, DeterministicForSeed) {
  Tensor<float> t(Shape(2, 10, 12, 1));
  std::mt19937_64 fill(6);
  for (auto& v : t.values()) v = std::uniform_real_distribution<float>(0, 1)(fill);
  Clip a{t, {}}, b{t, {}};
  std::mt19937_64 r1(9), r2(9);
  EXPECT_EQ(to_vector(augment_clip(a, r1).frames), to_vector(augment_clip(b, r2).frames));
}

TEST(Augment, PreservesShapeAndRange) {
  std::mt19937_64 rng(7);
  Tensor<float> t(Shape(2, 9, 11, 1));
  for (auto& v : t.values()) v = std::uniform_real_distribution<float>(0, 1)(rng);
  for (int trial = 0; trial < 20; ++trial) {
    auto u = t;
    const auto p = draw_augment(rng);
    EXPECT_GE(p.crop_scale, 0.85);
    EXPECT_LE(p.crop_scale, 1.0);
    apply_augment(u, p);
    EXPECT_EQ(u.shape(), t.shape());
    for (float v : u.values()) {
      ASSERT_GE(v, 0.0f);
      ASSERT_LE(v, 1.0f);
    }
  }
}

TEST(Augment, DisabledFlipsNeverDrawn) {
  std::mt19937_64 rng(8);
  AugmentConfig cfg;
  cfg.vertical_flip = false;
  for (int i = 0; i < 50; ++i) EXPECT_FALSE(draw_augment(rng, cfg).flip_vertical);
}
