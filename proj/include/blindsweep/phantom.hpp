#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "blindsweep/errors.hpp"

// Synthetic blind-sweep corpora. A fetus (body ellipse + brighter head disc) lies
// in a 2-D abdominal plane; each sweep pans the probe's field of view across that
// plane at constant speed, so the fetus is only visible while the path crosses it.
namespace blindsweep::phantom {

// ---------------------------------------------------------------------------
// Enumerations
// ---------------------------------------------------------------------------

enum class SweepType : std::uint8_t { M = 0, R = 1, L = 2, C1 = 3, C2 = 4, C3 = 5 };
enum class Presentation { cephalic, breech, transverse, oblique };
enum class Device { standard, low_cost };
enum class Operator { sonographer, novice };
enum class Split { train, tune, test };

using Protocol = std::vector<SweepType>;

inline Protocol full_protocol() {
  return {SweepType::M, SweepType::R, SweepType::L, SweepType::C1, SweepType::C2, SweepType::C3};
}
inline Protocol reduced_protocol() { return {SweepType::M, SweepType::R}; }

inline bool is_non_cephalic(Presentation p) { return p != Presentation::cephalic; }
inline bool is_vertical(SweepType s) {
  return s == SweepType::M || s == SweepType::R || s == SweepType::L;
}

inline std::string to_string(SweepType s) {
  static const char* names[] = {"M", "R", "L", "C1", "C2", "C3"};
  return names[static_cast<int>(s)];
}
inline std::string to_string(Presentation p) {
  static const char* names[] = {"cephalic", "breech", "transverse", "oblique"};
  return names[static_cast<int>(p)];
}
inline std::string to_string(Device d) { return d == Device::standard ? "standard" : "low_cost"; }
inline std::string to_string(Operator o) {
  return o == Operator::sonographer ? "sonographer" : "novice";
}
inline std::string to_string(Split s) {
  static const char* names[] = {"train", "tune", "test"};
  return names[static_cast<int>(s)];
}

inline SweepType sweep_type_from_code(int code) {
  if (code < 0 || code > 5) throw ArgumentError("sweep type code out of range: " + std::to_string(code));
  return static_cast<SweepType>(code);
}
inline SweepType parse_sweep_type(const std::string& s) {
  for (SweepType t : full_protocol())
    if (to_string(t) == s) return t;
  throw ArgumentError("unknown sweep type: " + s);
}
inline Presentation parse_presentation(const std::string& s) {
  for (int i = 0; i < 4; ++i)
    if (to_string(static_cast<Presentation>(i)) == s) return static_cast<Presentation>(i);
  throw ArgumentError("unknown presentation: " + s);
}
inline Device parse_device(const std::string& s) {
  if (s == "standard") return Device::standard;
  if (s == "low_cost") return Device::low_cost;
  throw ArgumentError("unknown device: " + s);
}
inline Operator parse_operator(const std::string& s) {
  if (s == "sonographer") return Operator::sonographer;
  if (s == "novice") return Operator::novice;
  throw ArgumentError("unknown operator: " + s);
}
inline Split parse_split(const std::string& s) {
  for (int i = 0; i < 3; ++i)
    if (to_string(static_cast<Split>(i)) == s) return static_cast<Split>(i);
  throw ArgumentError("unknown split: " + s);
}

// ---------------------------------------------------------------------------
// Records
// ---------------------------------------------------------------------------

struct SweepRecording {
  SweepType sweep_type = SweepType::M;
  float fps = 24.0f;
  float scale_cm_per_px = 0.0f;
  int width = 0;
  int height = 0;
  std::uint32_t frame_count = 0;
  std::vector<std::uint8_t> pixels;  // frame-major, row-major u8

  std::size_t frame_size() const { return static_cast<std::size_t>(width) * height; }
  std::span<const std::uint8_t> frame(std::size_t k) const {
    return std::span<const std::uint8_t>(pixels).subspan(k * frame_size(), frame_size());
  }
  bool operator==(const SweepRecording&) const = default;
};

struct CaseRecord {
  std::string patient_id;
  std::string visit_id;
  int ga_days = 0;
  Presentation presentation = Presentation::cephalic;
  Device device = Device::standard;
  Operator operator_ = Operator::sonographer;
  std::vector<SweepRecording> sweeps;
  std::uint64_t seed = 0;

  bool non_cephalic() const { return is_non_cephalic(presentation); }
  bool operator==(const CaseRecord&) const = default;
};

// ---------------------------------------------------------------------------
// Rendering configuration
// ---------------------------------------------------------------------------

struct DeviceProfile {
  double scale_cm_per_px;
  double speckle_sd;
};

struct RenderConfig {
  int width = 96;
  int height = 72;
  double fps = 24.0;
  double min_duration_s = 8.0;
  double max_duration_s = 12.0;
  std::optional<double> fixed_duration_s;
  DeviceProfile standard{0.40, 8.0};
  DeviceProfile low_cost{0.50, 16.0};
  double background_level = 40.0;
  double body_level = 150.0;
  double head_level = 220.0;
  double sonographer_jitter_cm = 1.5;
  double novice_jitter_factor = 1.3;
  double vertical_half_path_cm = 24.0;
  double horizontal_half_path_cm = 28.0;
  double lateral_offset_cm = 9.0;     // R / L sweeps
  double transverse_offset_cm = 8.0;  // C1 / C3 sweeps
  double placement_jitter_cm = 2.0;
  bool noise_free = false;

  // 96x72 frames spanning 38.4 x 28.8 cm on the standard device.
  static RenderConfig desk() { return {}; }

  // Device scales as on clinical hardware (0.04 / 0.05 cm per pixel) with the
  // same physical field of view, i.e. 960x720 frames.
  static RenderConfig clinical_scale() {
    RenderConfig r;
    r.width = 960;
    r.height = 720;
    r.standard = {0.04, 8.0};
    r.low_cost = {0.05, 16.0};
    return r;
  }

  const DeviceProfile& profile(Device d) const { return d == Device::standard ? standard : low_cost; }
};

// ---------------------------------------------------------------------------
// Geometry
// ---------------------------------------------------------------------------

inline constexpr double kGrowthCmPerDay = 0.06;
inline constexpr double kBiologicalNoiseSd = 0.05;
inline constexpr int kMinGaDays = 42;
inline constexpr int kMaxGaDays = 300;
inline constexpr double kBodyAspect = 1.2;
inline constexpr double kHeadDiameterRatio = 0.6;

// Equivalent (area) diameter of the fetal body in cm.
inline double fetal_diameter_cm(double ga_days, double epsilon) {
  return kGrowthCmPerDay * ga_days * std::exp(epsilon);
}

struct Vec2 {
  double x = 0.0, y = 0.0;
};

struct FetusGeometry {
  double diameter_cm = 0.0;  // equivalent diameter of the body ellipse
  Vec2 axis;                 // unit vector from body centre towards the head
  Vec2 body_center;
  double semi_major = 0.0;
  double semi_minor = 0.0;
  Vec2 head_center;
  double head_radius = 0.0;

  bool in_body(double x, double y) const {
    const double dx = x - body_center.x, dy = y - body_center.y;
    const double along = dx * axis.x + dy * axis.y;
    const double across = -dx * axis.y + dy * axis.x;
    return (along * along) / (semi_major * semi_major) + (across * across) / (semi_minor * semi_minor) <= 1.0;
  }
  bool in_head(double x, double y) const {
    const double dx = x - head_center.x, dy = y - head_center.y;
    return dx * dx + dy * dy <= head_radius * head_radius;
  }
  // Axis-aligned bounds of body and head together: {xmin, ymin, xmax, ymax}.
  std::array<double, 4> bounds() const {
    const double bx = std::sqrt(std::pow(semi_major * axis.x, 2) + std::pow(semi_minor * axis.y, 2));
    const double by = std::sqrt(std::pow(semi_major * axis.y, 2) + std::pow(semi_minor * axis.x, 2));
    return {std::min(body_center.x - bx, head_center.x - head_radius),
            std::min(body_center.y - by, head_center.y - head_radius),
            std::max(body_center.x + bx, head_center.x + head_radius),
            std::max(body_center.y + by, head_center.y + head_radius)};
  }
};

// Image y grows towards the maternal pelvis, so a cephalic fetus has its head at +y.
inline Vec2 presentation_axis(Presentation p, bool sign_a, bool sign_b) {
  const double sa = sign_a ? 1.0 : -1.0, sb = sign_b ? 1.0 : -1.0;
  switch (p) {
    case Presentation::cephalic: return {0.0, 1.0};
    case Presentation::breech: return {0.0, -1.0};
    case Presentation::transverse: return {sa, 0.0};
    case Presentation::oblique: return {sa * std::numbers::sqrt2 / 2, sb * std::numbers::sqrt2 / 2};
  }
  return {0.0, 1.0};
}

inline FetusGeometry fetus_geometry(double diameter_cm, Vec2 axis, Vec2 center) {
  FetusGeometry f;
  f.diameter_cm = diameter_cm;
  f.axis = axis;
  f.semi_major = 0.5 * diameter_cm * kBodyAspect;
  f.semi_minor = 0.5 * diameter_cm / kBodyAspect;
  f.head_radius = 0.5 * kHeadDiameterRatio * diameter_cm;
  const double gap = 0.08 * diameter_cm + 1.0;
  const double length = 2 * f.semi_major + gap + 2 * f.head_radius;
  const double body_offset = length / 2 - f.semi_major;
  const double head_offset = length / 2 - f.head_radius;
  f.body_center = {center.x - axis.x * body_offset, center.y - axis.y * body_offset};
  f.head_center = {center.x + axis.x * head_offset, center.y + axis.y * head_offset};
  return f;
}

// ---------------------------------------------------------------------------
// Seeds
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  return splitmix64(a ^ splitmix64(b + 0x632BE59BD9B4E019ULL));
}

// Per-case stream, independent of generation order.
inline std::uint64_t derive_case_seed(std::uint64_t corpus_seed, const std::string& patient_id,
                                      const std::string& visit_id) {
  return mix_seed(mix_seed(corpus_seed, fnv1a(patient_id)), fnv1a(visit_id));
}

// ---------------------------------------------------------------------------
// Case plans: everything needed to render any frame on demand
// ---------------------------------------------------------------------------

struct SweepPlan {
  SweepType type = SweepType::M;
  double duration_s = 10.0;
  int frame_count = 0;
  Vec2 start, end;
  double jitter_amplitude_cm = 0.0;
  double jitter_period_s = 3.0;
  double jitter_phase = 0.0;
  std::uint64_t noise_seed = 0;
};

class CasePlan {
 public:
  std::string patient_id = "P0";
  std::string visit_id = "V0";
  int ga_days = 0;
  Presentation presentation = Presentation::cephalic;
  Device device = Device::standard;
  Operator operator_ = Operator::sonographer;
  std::uint64_t seed = 0;
  double epsilon = 0.0;
  FetusGeometry fetus;
  std::vector<SweepPlan> sweeps;
  RenderConfig render;

  const DeviceProfile& profile() const { return render.profile(device); }
  double scale_cm_per_px() const { return static_cast<float>(profile().scale_cm_per_px); }

  // Centre of the field of view for frame k of sweep s, in abdominal-plane cm.
  Vec2 view_center(std::size_t s, int k) const {
    const SweepPlan& sp = sweeps.at(s);
    const double t = k / render.fps;
    const double u = t / sp.duration_s;
    const double wobble = sp.jitter_amplitude_cm *
                          std::sin(2 * std::numbers::pi * t / sp.jitter_period_s + sp.jitter_phase);
    Vec2 c{sp.start.x + u * (sp.end.x - sp.start.x), sp.start.y + u * (sp.end.y - sp.start.y)};
    if (is_vertical(sp.type))
      c.x += wobble;
    else
      c.y += wobble;
    return c;
  }

  // True when any part of the fetus lies inside the field of view.
  bool fetus_in_view(std::size_t s, int k) const {
    const Vec2 c = view_center(s, k);
    const double a = scale_cm_per_px();
    const double hw = 0.5 * render.width * a, hh = 0.5 * render.height * a;
    const auto b = fetus.bounds();
    return b[2] >= c.x - hw && b[0] <= c.x + hw && b[3] >= c.y - hh && b[1] <= c.y + hh;
  }

  void render_frame_into(std::size_t s, int k, std::span<std::uint8_t> out) const {
    const int W = render.width, H = render.height;
    if (out.size() != static_cast<std::size_t>(W) * H) throw ArgumentError("frame buffer size mismatch");
    const Vec2 c = view_center(s, k);
    const double a = scale_cm_per_px();
    const bool visible = fetus_in_view(s, k);
    const double sd = render.noise_free ? 0.0 : profile().speckle_sd;
    std::mt19937_64 rng(mix_seed(sweeps[s].noise_seed, static_cast<std::uint64_t>(k)));
    for (int py = 0; py < H; ++py) {
      const double y = c.y + ((py + 0.5) - 0.5 * H) * a;
      for (int px = 0; px < W; ++px) {
        double level = render.background_level;
        if (visible) {
          const double x = c.x + ((px + 0.5) - 0.5 * W) * a;
          if (fetus.in_head(x, y))
            level = render.head_level;
          else if (fetus.in_body(x, y))
            level = render.body_level;
        }
        if (sd > 0.0) level += sd * speckle(rng);
        out[static_cast<std::size_t>(py) * W + px] =
            static_cast<std::uint8_t>(std::clamp(std::lround(level), 0L, 255L));
      }
    }
  }

  std::vector<std::uint8_t> render_frame(std::size_t s, int k) const {
    std::vector<std::uint8_t> out(static_cast<std::size_t>(render.width) * render.height);
    render_frame_into(s, k, out);
    return out;
  }

  SweepRecording render_sweep(std::size_t s) const {
    SweepRecording r;
    r.sweep_type = sweeps.at(s).type;
    r.fps = static_cast<float>(render.fps);
    r.scale_cm_per_px = static_cast<float>(profile().scale_cm_per_px);
    r.width = render.width;
    r.height = render.height;
    r.frame_count = static_cast<std::uint32_t>(sweeps[s].frame_count);
    r.pixels.resize(r.frame_size() * r.frame_count);
    for (int k = 0; k < sweeps[s].frame_count; ++k)
      render_frame_into(s, k, std::span<std::uint8_t>(r.pixels).subspan(k * r.frame_size(), r.frame_size()));
    return r;
  }

  CaseRecord materialize() const {
    CaseRecord c;
    c.patient_id = patient_id;
    c.visit_id = visit_id;
    c.ga_days = ga_days;
    c.presentation = presentation;
    c.device = device;
    c.operator_ = operator_;
    c.seed = seed;
    for (std::size_t s = 0; s < sweeps.size(); ++s) c.sweeps.push_back(render_sweep(s));
    return c;
  }

 private:
  // Zero-mean, unit-variance speckle from four 16-bit uniforms (Irwin-Hall).
  static double speckle(std::mt19937_64& rng) {
    const std::uint64_t r = rng();
    double s = 0.0;
    for (int i = 0; i < 4; ++i) s += static_cast<double>((r >> (16 * i)) & 0xFFFF) / 65536.0;
    return (s - 2.0) * std::numbers::sqrt3;
  }
};

struct CaseSpec {
  std::string patient_id = "P0";
  std::string visit_id = "V0";
  int ga_days = 140;
  Presentation presentation = Presentation::cephalic;
  Device device = Device::standard;
  Operator operator_ = Operator::sonographer;
  std::uint64_t seed = 0;
};

inline Protocol canonical_protocol(const Protocol& protocol) {
  if (protocol.empty()) throw ArgumentError("sweep protocol must not be empty");
  std::set<SweepType> unique(protocol.begin(), protocol.end());
  if (unique.size() != protocol.size()) throw ArgumentError("sweep protocol lists a sweep type twice");
  return {unique.begin(), unique.end()};
}

// Random draws: the case stream yields epsilon, the fetal placement offset and
// two orientation signs, in that order. Each sweep draws from its own stream
// keyed by sweep type, so a reduced protocol renders the same M and R sweeps
// as the full protocol.
inline CasePlan plan_case(const CaseSpec& spec, const Protocol& protocol,
                          const RenderConfig& render = RenderConfig::desk()) {
  if (spec.ga_days < kMinGaDays || spec.ga_days > kMaxGaDays)
    throw DomainError("gestational age " + std::to_string(spec.ga_days) + " days outside [" +
                      std::to_string(kMinGaDays) + ", " + std::to_string(kMaxGaDays) + "]");
  const Protocol sweeps = canonical_protocol(protocol);

  CasePlan plan;
  plan.patient_id = spec.patient_id;
  plan.visit_id = spec.visit_id;
  plan.ga_days = spec.ga_days;
  plan.presentation = spec.presentation;
  plan.device = spec.device;
  plan.operator_ = spec.operator_;
  plan.seed = spec.seed;
  plan.render = render;

  std::mt19937_64 rng(spec.seed);
  plan.epsilon = std::normal_distribution<double>(0.0, kBiologicalNoiseSd)(rng);
  std::uniform_real_distribution<double> place(-render.placement_jitter_cm, render.placement_jitter_cm);
  const double cx = place(rng);
  const double cy = place(rng);
  std::bernoulli_distribution coin(0.5);
  const bool sign_a = coin(rng);
  const bool sign_b = coin(rng);
  plan.fetus = fetus_geometry(fetal_diameter_cm(spec.ga_days, plan.epsilon),
                              presentation_axis(spec.presentation, sign_a, sign_b), {cx, cy});

  const double jitter = render.sonographer_jitter_cm *
                        (spec.operator_ == Operator::novice ? render.novice_jitter_factor : 1.0);
  for (SweepType t : sweeps) {
    std::mt19937_64 srng(mix_seed(spec.seed, 0x5EEDULL + static_cast<std::uint64_t>(t)));
    SweepPlan sp;
    sp.type = t;
    sp.duration_s = render.fixed_duration_s
                        ? *render.fixed_duration_s
                        : std::uniform_real_distribution<double>(render.min_duration_s,
                                                                 render.max_duration_s)(srng);
    sp.frame_count = static_cast<int>(std::lround(render.fps * sp.duration_s));
    sp.jitter_amplitude_cm = jitter;
    sp.jitter_period_s = std::uniform_real_distribution<double>(2.0, 4.0)(srng);
    sp.jitter_phase = std::uniform_real_distribution<double>(0.0, 2 * std::numbers::pi)(srng);
    sp.noise_seed = srng();
    switch (t) {
      case SweepType::M:
      case SweepType::R:
      case SweepType::L: {
        const double x = t == SweepType::M ? 0.0 : (t == SweepType::R ? 1.0 : -1.0) * render.lateral_offset_cm;
        sp.start = {x, -render.vertical_half_path_cm};
        sp.end = {x, render.vertical_half_path_cm};
        break;
      }
      default: {
        const double y = t == SweepType::C2 ? 0.0 : (t == SweepType::C1 ? -1.0 : 1.0) * render.transverse_offset_cm;
        sp.start = {-render.horizontal_half_path_cm, y};
        sp.end = {render.horizontal_half_path_cm, y};
        break;
      }
    }
    plan.sweeps.push_back(sp);
  }
  return plan;
}

inline CaseRecord generate_case(std::uint64_t seed, int ga_days, Presentation presentation,
                                const Protocol& protocol, Device device, Operator op,
                                const RenderConfig& render = RenderConfig::desk()) {
  CaseSpec spec;
  spec.seed = seed;
  spec.ga_days = ga_days;
  spec.presentation = presentation;
  spec.device = device;
  spec.operator_ = op;
  return plan_case(spec, protocol, render).materialize();
}

// ---------------------------------------------------------------------------
// Biometry comparator
// ---------------------------------------------------------------------------

inline constexpr double kMinDetectionAreaCm2 = 2.0;

// Size of the largest 4-connected component of pixels strictly above `threshold`.
inline std::size_t largest_component(std::span<const std::uint8_t> frame, int width, int height,
                                     double threshold) {
  std::vector<std::uint8_t> seen(frame.size(), 0);
  std::vector<int> stack;
  std::size_t best = 0;
  for (int start = 0; start < static_cast<int>(frame.size()); ++start) {
    if (seen[start] || frame[start] <= threshold) continue;
    std::size_t count = 0;
    stack.push_back(start);
    seen[start] = 1;
    while (!stack.empty()) {
      const int p = stack.back();
      stack.pop_back();
      ++count;
      const int x = p % width, y = p / width;
      const int nbr[4] = {x > 0 ? p - 1 : -1, x + 1 < width ? p + 1 : -1, y > 0 ? p - width : -1,
                          y + 1 < height ? p + width : -1};
      for (int q : nbr)
        if (q >= 0 && !seen[q] && frame[q] > threshold) {
          seen[q] = 1;
          stack.push_back(q);
        }
    }
    best = std::max(best, count);
  }
  return best;
}

struct BiometryResult {
  double ga_days = 0.0;
  double diameter_cm = 0.0;
  double area_cm2 = 0.0;
};

// Thresholds each frame at background mean + 2 sd (background taken from the
// darkest frame of the sweep), keeps the largest connected component over all
// frames, converts it to an equivalent diameter and inverts the growth law.
inline BiometryResult biometry_measure(const CaseRecord& c) {
  double best_area = 0.0;
  for (const auto& sw : c.sweeps) {
    if (sw.frame_count == 0) continue;
    if (!(sw.scale_cm_per_px > 0.0f)) throw ArgumentError("sweep scale must be positive");
    const std::size_t fs = sw.frame_size();
    std::size_t darkest = 0;
    double darkest_mean = 1e300;
    for (std::size_t k = 0; k < sw.frame_count; ++k) {
      const auto f = sw.frame(k);
      double s = 0.0;
      for (auto v : f) s += v;
      if (s / fs < darkest_mean) {
        darkest_mean = s / fs;
        darkest = k;
      }
    }
    const auto bg = sw.frame(darkest);
    double var = 0.0;
    for (auto v : bg) var += (v - darkest_mean) * (v - darkest_mean);
    const double sd = std::sqrt(var / std::max<std::size_t>(fs - 1, 1));
    const double threshold = darkest_mean + 2.0 * sd;
    const double px_area = static_cast<double>(sw.scale_cm_per_px) * sw.scale_cm_per_px;
    for (std::size_t k = 0; k < sw.frame_count; ++k) {
      const double area = largest_component(sw.frame(k), sw.width, sw.height, threshold) * px_area;
      best_area = std::max(best_area, area);
    }
  }
  if (best_area < kMinDetectionAreaCm2)
    throw DetectionError("no fetus detected in case " + c.visit_id);
  BiometryResult r;
  r.area_cm2 = best_area;
  r.diameter_cm = 2.0 * std::sqrt(best_area / std::numbers::pi);
  r.ga_days = r.diameter_cm / kGrowthCmPerDay;
  return r;
}

inline double biometry_estimate(const CaseRecord& c) { return biometry_measure(c).ga_days; }

// ---------------------------------------------------------------------------
// Patient-level splits
// ---------------------------------------------------------------------------

struct PatientInfo {
  std::string patient_id;
  bool has_novice_sweeps = false;
};

using SplitAssignment = std::map<std::string, Split>;

// Largest-remainder apportionment of n items to the given fractions; ties go to
// the earlier bucket.
inline std::array<int, 3> apportion(int n, const std::array<double, 3>& fractions) {
  std::array<int, 3> counts{};
  std::array<double, 3> rem{};
  int used = 0;
  for (int i = 0; i < 3; ++i) {
    const double q = n * fractions[i];
    counts[i] = static_cast<int>(std::floor(q + 1e-9));
    rem[i] = q - counts[i];
    used += counts[i];
  }
  while (used < n) {
    int best = 0;
    for (int i = 1; i < 3; ++i)
      if (rem[i] > rem[best] + 1e-12) best = i;
    ++counts[best];
    rem[best] = -1.0;
    ++used;
  }
  return counts;
}

// Sonographer-only patients go 60/20/20 train/tune/test; patients with novice
// sweeps go 0/10/90. Assignment is per patient and independent of input order.
inline SplitAssignment assign_splits(const std::vector<PatientInfo>& patients, std::uint64_t seed) {
  std::set<std::string> ids;
  std::vector<std::string> sonographer, novice;
  for (const auto& p : patients) {
    if (!ids.insert(p.patient_id).second)
      throw ArgumentError("duplicate patient id: " + p.patient_id);
    (p.has_novice_sweeps ? novice : sonographer).push_back(p.patient_id);
  }
  SplitAssignment out;
  auto place = [&](std::vector<std::string>& group, const std::array<double, 3>& fractions,
                   std::uint64_t salt) {
    std::sort(group.begin(), group.end());
    std::mt19937_64 rng(mix_seed(seed, salt));
    std::shuffle(group.begin(), group.end(), rng);
    const auto counts = apportion(static_cast<int>(group.size()), fractions);
    std::size_t i = 0;
    for (int s = 0; s < 3; ++s)
      for (int k = 0; k < counts[s]; ++k) out[group[i++]] = static_cast<Split>(s);
  };
  place(sonographer, {0.6, 0.2, 0.2}, 1);
  place(novice, {0.0, 0.1, 0.9}, 2);
  return out;
}

// ---------------------------------------------------------------------------
// Corpus plans
// ---------------------------------------------------------------------------

struct CorpusConfig {
  int n_patients = 200;
  int n_cases = 300;
  double novice_fraction = 0.2;
  double low_cost_fraction = 0.3;
  int ga_min = kMinGaDays;
  int ga_max = kMaxGaDays;
  double p_breech = 0.2;
  double p_transverse = 0.1;
  double p_oblique = 0.1;
  std::optional<Device> force_device;
  std::optional<Operator> force_operator;
};

struct CorpusPlan {
  std::vector<CaseSpec> cases;
  SplitAssignment splits;

  Split split_of(const CaseSpec& c) const { return splits.at(c.patient_id); }
};

inline std::string patient_label(int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "P%04d", i);
  return buf;
}

inline CorpusPlan plan_corpus(const CorpusConfig& cfg, std::uint64_t seed) {
  if (cfg.n_patients < 1 || cfg.n_cases < cfg.n_patients)
    throw ArgumentError("corpus needs n_cases >= n_patients >= 1");
  if (cfg.ga_min < kMinGaDays || cfg.ga_max > kMaxGaDays || cfg.ga_min > cfg.ga_max)
    throw DomainError("corpus gestational-age range outside [42, 300]");
  std::mt19937_64 rng(seed);
  std::vector<int> order(cfg.n_patients);
  for (int i = 0; i < cfg.n_patients; ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  const int n_novice = static_cast<int>(std::lround(cfg.novice_fraction * cfg.n_patients));
  std::vector<bool> novice(cfg.n_patients, false);
  for (int i = 0; i < n_novice; ++i) novice[order[i]] = true;
  std::vector<int> visits(cfg.n_patients, 1);
  std::shuffle(order.begin(), order.end(), rng);
  for (int i = 0; i < cfg.n_cases - cfg.n_patients; ++i) ++visits[order[i % cfg.n_patients]];

  std::uniform_int_distribution<int> ga_dist(cfg.ga_min, cfg.ga_max);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  CorpusPlan plan;
  std::vector<PatientInfo> patients;
  for (int p = 0; p < cfg.n_patients; ++p) {
    const std::string pid = patient_label(p);
    const Operator op = cfg.force_operator.value_or(novice[p] ? Operator::novice : Operator::sonographer);
    patients.push_back({pid, op == Operator::novice});
    std::vector<int> gas(visits[p]);
    for (auto& g : gas) g = ga_dist(rng);
    std::sort(gas.begin(), gas.end());
    for (int v = 0; v < visits[p]; ++v) {
      CaseSpec cs;
      cs.patient_id = pid;
      cs.visit_id = pid + "-V" + std::to_string(v + 1);
      cs.ga_days = gas[v];
      const double r = u01(rng);
      cs.presentation = r < cfg.p_breech                      ? Presentation::breech
                        : r < cfg.p_breech + cfg.p_transverse ? Presentation::transverse
                        : r < cfg.p_breech + cfg.p_transverse + cfg.p_oblique ? Presentation::oblique
                                                                               : Presentation::cephalic;
      const bool low = u01(rng) < cfg.low_cost_fraction;
      cs.device = cfg.force_device.value_or(low ? Device::low_cost : Device::standard);
      cs.operator_ = op;
      cs.seed = derive_case_seed(seed, cs.patient_id, cs.visit_id);
      plan.cases.push_back(cs);
    }
  }
  plan.splits = assign_splits(patients, mix_seed(seed, 0x5B11ULL));
  return plan;
}

}  // namespace blindsweep::phantom
