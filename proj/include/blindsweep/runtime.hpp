#pragma once

#include <time.h>

#include <chrono>
#include <cmath>
#include <condition_variable>
#include <deque>
#include <exception>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "blindsweep/aggregate.hpp"
#include "blindsweep/dataset.hpp"
#include "blindsweep/models.hpp"

namespace blindsweep::runtime {

using aggregate::CaseEstimate;
using aggregate::GaClipOutput;
using dataset::CaseView;
using models::ModelKind;
using nn::Tensor;

// Fixed-capacity FIFO shared by one producer and one consumer. push blocks
// while full; pop blocks while empty and returns nothing once closed and drained.
template <typename T>
class BoundedQueue {
 public:
  explicit BoundedQueue(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw ArgumentError("queue capacity must be positive");
  }

  void push(T item) {
    std::unique_lock lock(mu_);
    not_full_.wait(lock, [&] { return items_.size() < capacity_ || closed_; });
    if (closed_) throw UsageError("push on a closed queue");
    items_.push_back(std::move(item));
    not_empty_.notify_one();
  }

  std::optional<T> pop() {
    std::unique_lock lock(mu_);
    not_empty_.wait(lock, [&] { return !items_.empty() || closed_; });
    if (items_.empty()) return std::nullopt;
    T item = std::move(items_.front());
    items_.pop_front();
    not_full_.notify_one();
    return item;
  }

  void close() {
    std::lock_guard lock(mu_);
    closed_ = true;
    not_empty_.notify_all();
    not_full_.notify_all();
  }

  std::size_t capacity() const { return capacity_; }

 private:
  std::size_t capacity_;
  std::deque<T> items_;
  bool closed_ = false;
  std::mutex mu_;
  std::condition_variable not_full_, not_empty_;
};

// ---------------------------------------------------------------------------
// Streaming models
// ---------------------------------------------------------------------------

// One recurrent stream over preprocessed frames. `begin` resets the state,
// `repeat_last` advances the recurrence with the previous frame again.
class StreamModel {
 public:
  virtual ~StreamModel() = default;
  virtual ModelKind kind() const = 0;
  virtual preprocess::ScaleSpec scale() const = 0;
  virtual preprocess::ClipSpec clip() const = 0;
  virtual void begin() = 0;
  virtual void step(const Tensor<float>& frame) = 0;
  virtual void repeat_last() = 0;
  // (log-age, variance) for GA, (logit, probability) for presentation.
  virtual std::pair<double, double> read() const = 0;
};

class NetworkStream final : public StreamModel {
 public:
  explicit NetworkStream(const models::SweepModel<float>& model) : model_(model), state_(model.stream_start()) {}

  ModelKind kind() const override { return model_.kind(); }
  preprocess::ScaleSpec scale() const override { return model_.config().scale; }
  preprocess::ClipSpec clip() const override { return model_.config().clip; }
  void begin() override {
    state_ = model_.stream_start();
    last_.reset();
  }
  void step(const Tensor<float>& frame) override {
    last_ = model_.embed(frame);
    model_.stream_step_embedded(state_, *last_);
  }
  void repeat_last() override {
    if (!last_) throw UsageError("no frame to repeat");
    model_.stream_step_embedded(state_, *last_);
  }
  std::pair<double, double> read() const override { return model_.stream_read(state_); }

 private:
  const models::SweepModel<float>& model_;
  models::SweepModel<float>::StreamState state_;
  std::optional<Tensor<float>> last_;
};

// Constant outputs and no work per frame.
class StubStream final : public StreamModel {
 public:
  StubStream(ModelKind kind, preprocess::ScaleSpec scale, preprocess::ClipSpec clip)
      : kind_(kind), scale_(scale), clip_(clip) {}

  ModelKind kind() const override { return kind_; }
  preprocess::ScaleSpec scale() const override { return scale_; }
  preprocess::ClipSpec clip() const override { return clip_; }
  void begin() override {}
  void step(const Tensor<float>&) override {}
  void repeat_last() override {}
  std::pair<double, double> read() const override {
    return kind_ == ModelKind::gestational_age ? std::pair{std::log(170.0), 0.1} : std::pair{0.0, 0.5};
  }

 private:
  ModelKind kind_;
  preprocess::ScaleSpec scale_;
  preprocess::ClipSpec clip_;
};

// Preprocessing the pipeline is configured for; models must agree with it.
struct PipelineSpec {
  preprocess::ScaleSpec ga_scale = preprocess::ScaleSpec::desk_gestational_age();
  preprocess::ClipSpec ga_clip = preprocess::ClipSpec::gestational_age();
  preprocess::ScaleSpec presentation_scale = preprocess::ScaleSpec::desk_presentation();
  preprocess::ClipSpec presentation_clip = preprocess::ClipSpec::presentation();

  static PipelineSpec from_models(const StreamModel& ga, const StreamModel& pres) {
    return {ga.scale(), ga.clip(), pres.scale(), pres.clip()};
  }
};

inline void check_models(const PipelineSpec& spec, const StreamModel& ga, const StreamModel& pres) {
  if (ga.kind() != ModelKind::gestational_age) throw ConfigError("first model must be a gestational-age model");
  if (pres.kind() != ModelKind::presentation) throw ConfigError("second model must be a presentation model");
  if (!(ga.scale() == spec.ga_scale) || !(ga.clip() == spec.ga_clip))
    throw ConfigError("gestational-age model preprocessing does not match the pipeline");
  if (!(pres.scale() == spec.presentation_scale) || !(pres.clip() == spec.presentation_clip))
    throw ConfigError("presentation model preprocessing does not match the pipeline");
}

// ---------------------------------------------------------------------------
// Four-stage engine: ingest -> preprocess -> {GA, presentation} -> aggregate
// ---------------------------------------------------------------------------

struct EngineOptions {
  bool realtime = false;    // pace frames on the wall clock instead of the simulated clock
  bool instrument = true;   // record stage timings
  std::size_t queue_capacity = 16;
};

struct StreamResult {
  CaseEstimate estimate;
  std::vector<GaClipOutput> ga_clips;  // in sweep, clip order
  std::vector<double> sweep_probabilities;
  double last_arrival_s = 0.0;
  double outputs_ready_s = 0.0;
  double latency_s = 0.0;  // outputs_ready_s - last_arrival_s
};

namespace detail {

inline double thread_cpu_seconds() {
  timespec ts{};
  clock_gettime(CLOCK_THREAD_CPUTIME_ID, &ts);
  return static_cast<double>(ts.tv_sec) + 1e-9 * static_cast<double>(ts.tv_nsec);
}

// Per-stage timeline. Simulated: a stage starts an item when both the item and
// the stage are ready and takes the stage thread's CPU time for it. Realtime:
// wall-clock seconds since the stream started.
class StageClock {
 public:
  StageClock(const EngineOptions& o, std::chrono::steady_clock::time_point origin) : opt_(o), origin_(origin) {}

  void start(double item_ready) {
    if (!opt_.instrument) return;
    if (opt_.realtime) return;
    begin_ = std::max(item_ready, free_at_);
    cpu0_ = thread_cpu_seconds();
  }

  double finish() {
    if (!opt_.instrument) return 0.0;
    if (opt_.realtime) return std::chrono::duration<double>(std::chrono::steady_clock::now() - origin_).count();
    free_at_ = begin_ + (thread_cpu_seconds() - cpu0_);
    return free_at_;
  }

 private:
  const EngineOptions& opt_;
  std::chrono::steady_clock::time_point origin_;
  double free_at_ = 0.0, begin_ = 0.0, cpu0_ = 0.0;
};

struct RawFrame {
  int sweep = 0;
  int index = 0;
  std::vector<std::uint8_t> pixels;
  double ready = 0.0;
  bool end_of_sweep = false;
};

struct ModelFrame {
  int sweep = 0;
  std::shared_ptr<const Tensor<float>> frame;  // empty at end of sweep
  double ready = 0.0;
};

struct ModelOutput {
  ModelKind kind;
  int sweep = 0;
  std::pair<double, double> value;
  double ready = 0.0;
};

}  // namespace detail

// Streams every sweep of `c` through both models, sweep after sweep at source
// fps, and aggregates the case-level outputs.
inline StreamResult stream_case(const CaseView& c, StreamModel& ga, StreamModel& pres, const EngineOptions& opt = {}) {
  check_models(PipelineSpec::from_models(ga, pres), ga, pres);
  using detail::ModelFrame;
  using detail::ModelOutput;
  using detail::RawFrame;
  const auto origin = std::chrono::steady_clock::now();
  BoundedQueue<RawFrame> raw_q(opt.queue_capacity);
  BoundedQueue<ModelFrame> ga_q(opt.queue_capacity), pres_q(opt.queue_capacity);
  BoundedQueue<ModelOutput> out_q(opt.queue_capacity);
  StreamResult result;
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto guard = [&](auto&& body, std::initializer_list<std::function<void()>> closers) {
    return [&, body, closers = std::vector<std::function<void()>>(closers)] {
      try {
        body();
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
        raw_q.close();
        ga_q.close();
        pres_q.close();
        out_q.close();
      }
      for (auto& f : closers) f();
    };
  };

  // Ingest: frame k of the whole stream arrives at k / fps.
  double last_arrival = 0.0;
  auto ingest = [&] {
    long global = 0;
    std::vector<std::uint8_t> scratch;
    for (int s = 0; s < c.sweep_count(); ++s) {
      const double fps = c.fps(s);
      if (!(fps > 0.0)) throw FormatError("sweep frame rate must be positive", 0);
      for (int k = 0; k < c.frame_count(s); ++k, ++global) {
        const double arrival = static_cast<double>(global) / fps;
        if (opt.realtime) std::this_thread::sleep_until(origin + std::chrono::duration<double>(arrival));
        const auto px = c.frame(s, k, scratch);
        last_arrival = opt.realtime ? std::chrono::duration<double>(std::chrono::steady_clock::now() - origin).count()
                                    : arrival;
        raw_q.push({s, k, std::vector<std::uint8_t>(px.begin(), px.end()), last_arrival, false});
      }
      raw_q.push({s, c.frame_count(s), {}, last_arrival, true});
    }
  };

  // Preprocess: rescale the frames each model keeps.
  auto prep = [&] {
    detail::StageClock clock(opt, origin);
    const auto gc = ga.clip(), pc = pres.clip();
    std::optional<preprocess::FrameRescaler> ga_rs, pres_rs;
    int sweep = -1, pres_kept = 0;
    while (auto item = raw_q.pop()) {
      clock.start(item->ready);
      if (item->sweep != sweep) {
        sweep = item->sweep;
        pres_kept = 0;
        ga_rs.emplace(c.width(sweep), c.height(sweep), c.scale(sweep), ga.scale());
        pres_rs.emplace(c.width(sweep), c.height(sweep), c.scale(sweep), pres.scale());
      }
      std::shared_ptr<Tensor<float>> gf, pf;
      if (!item->end_of_sweep) {
        if (item->index % gc.stride == 0) {
          const auto sc = ga.scale();
          gf = std::make_shared<Tensor<float>>(nn::Shape(1, sc.target_height, sc.target_width, 1));
          ga_rs->apply(item->pixels, gf->data());
        }
        if (item->index % pc.stride == 0 && pres_kept < pc.clip_len) {
          const auto sc = pres.scale();
          pf = std::make_shared<Tensor<float>>(nn::Shape(1, sc.target_height, sc.target_width, 1));
          pres_rs->apply(item->pixels, pf->data());
          ++pres_kept;
        }
      }
      const double done = clock.finish();
      if (item->end_of_sweep || gf) ga_q.push({item->sweep, gf, done});
      if (item->end_of_sweep || pf) pres_q.push({item->sweep, pf, done});
    }
  };

  // GA: consecutive windows of clip_len kept frames; trailing partial window dropped.
  auto ga_stage = [&] {
    detail::StageClock clock(opt, origin);
    const int len = ga.clip().clip_len;
    int in_window = 0;
    while (auto item = ga_q.pop()) {
      clock.start(item->ready);
      std::optional<std::pair<double, double>> out;
      if (!item->frame) {
        in_window = 0;
      } else {
        if (in_window == 0) ga.begin();
        ga.step(*item->frame);
        if (++in_window == len) {
          out = ga.read();
          in_window = 0;
        }
      }
      const double done = clock.finish();
      if (out) out_q.push({ModelKind::gestational_age, item->sweep, *out, done});
    }
  };

  // Presentation: one clip per sweep, edge-padded to clip_len at the end of the sweep.
  auto pres_stage = [&] {
    detail::StageClock clock(opt, origin);
    const int len = pres.clip().clip_len;
    int steps = 0;
    while (auto item = pres_q.pop()) {
      clock.start(item->ready);
      std::optional<std::pair<double, double>> out;
      if (item->frame) {
        if (steps == 0) pres.begin();
        pres.step(*item->frame);
        ++steps;
      } else if (steps > 0) {
        for (; steps < len; ++steps) pres.repeat_last();
        out = pres.read();
        steps = 0;
      }
      const double done = clock.finish();
      if (out) out_q.push({ModelKind::presentation, item->sweep, *out, done});
    }
  };

  auto aggregate_stage = [&] {
    detail::StageClock clock(opt, origin);
    double ready = 0.0;
    while (auto item = out_q.pop()) {
      ready = std::max(ready, item->ready);
      if (item->kind == ModelKind::gestational_age)
        result.ga_clips.push_back({item->value.first, item->value.second});
      else
        result.sweep_probabilities.push_back(item->value.second);
    }
    clock.start(ready);
    CaseEstimate e;
    if (!result.ga_clips.empty()) e = aggregate::case_ga_estimate(result.ga_clips);
    if (!result.sweep_probabilities.empty()) {
      e.p_noncephalic = aggregate::case_presentation_probability(result.sweep_probabilities);
      e.has_presentation = true;
    }
    e.visit_id = c.visit_id();
    e.n_sweeps = c.sweep_count();
    result.estimate = std::move(e);
    result.outputs_ready_s = clock.finish();
  };

  int models_open = 2;
  std::mutex open_mu;
  auto model_done = [&] {
    std::lock_guard lock(open_mu);
    if (--models_open == 0) out_q.close();
  };
  std::thread t_agg(guard(aggregate_stage, {}));
  std::thread t_ga(guard(ga_stage, {model_done}));
  std::thread t_pres(guard(pres_stage, {model_done}));
  std::thread t_prep(guard(prep, {[&] { ga_q.close(); }, [&] { pres_q.close(); }}));
  std::thread t_ingest(guard(ingest, {[&] { raw_q.close(); }}));
  t_ingest.join();
  t_prep.join();
  t_ga.join();
  t_pres.join();
  t_agg.join();
  if (failure) std::rethrow_exception(failure);
  result.last_arrival_s = last_arrival;
  result.latency_s = opt.instrument ? std::max(0.0, result.outputs_ready_s - last_arrival) : 0.0;
  return result;
}

// ---------------------------------------------------------------------------
// Latency benchmark
// ---------------------------------------------------------------------------

inline std::string hardware_descriptor() {
  std::string model = "unknown cpu";
  std::ifstream in("/proc/cpuinfo");
  for (std::string line; std::getline(in, line);)
    if (line.rfind("model name", 0) == 0) {
      const auto colon = line.find(':');
      if (colon != std::string::npos) model = line.substr(line.find_first_not_of(' ', colon + 1));
      break;
    }
  return model + ", " + std::to_string(std::max(1u, std::thread::hardware_concurrency())) + " hardware threads";
}

struct LatencyReport {
  double mean_s = 0.0;
  double sd_s = 0.0;
  int repetitions = 0;
  std::string hardware;
  bool warning = false;
  std::string warning_text;
  double single_clip_s = 0.0;  // one GA clip through the streaming model, for reference
};

struct BenchOptions {
  EngineOptions engine;
  PipelineSpec spec;
  bool measure_single_clip = true;
};

// CPU time of one GA clip (clip_len frames) through the streaming model, best of three.
inline double single_clip_seconds(StreamModel& ga) {
  const auto sc = ga.scale();
  Tensor<float> frame(nn::Shape(1, sc.target_height, sc.target_width, 1), 0.5f);
  double best = 1e300;
  for (int rep = 0; rep < 3; ++rep) {
    const double t0 = detail::thread_cpu_seconds();
    ga.begin();
    for (int k = 0; k < ga.clip().clip_len; ++k) ga.step(frame);
    (void)ga.read();
    best = std::min(best, detail::thread_cpu_seconds() - t0);
  }
  return best;
}

// Time from the final frame's arrival to both case-level outputs, over
// `repetitions` streams of `c` after one untimed priming stream.
inline LatencyReport stream_latency_bench(const CaseView& c, StreamModel& ga, StreamModel& pres, int repetitions,
                                          const BenchOptions& opt = {}) {
  if (repetitions < 1) throw ArgumentError("benchmark needs at least one repetition");
  check_models(opt.spec, ga, pres);
  EngineOptions eo = opt.engine;
  eo.instrument = true;
  (void)stream_case(c, ga, pres, eo);
  std::vector<double> lat;
  for (int r = 0; r < repetitions; ++r) lat.push_back(stream_case(c, ga, pres, eo).latency_s);
  LatencyReport rep;
  rep.repetitions = repetitions;
  rep.hardware = hardware_descriptor();
  double mean = 0.0;
  for (double v : lat) mean += v;
  rep.mean_s = mean / repetitions;
  if (repetitions > 1) {
    double ss = 0.0;
    for (double v : lat) ss += (v - rep.mean_s) * (v - rep.mean_s);
    rep.sd_s = std::sqrt(ss / (repetitions - 1));
  }
  if (repetitions == 1) {
    rep.warning = true;
    rep.warning_text = "single repetition: sd reported as 0";
  } else if (repetitions < 10) {
    rep.warning = true;
    rep.warning_text = "fewer than 10 repetitions";
  }
  if (opt.measure_single_clip) rep.single_clip_s = single_clip_seconds(ga);
  return rep;
}

}  // namespace blindsweep::runtime
