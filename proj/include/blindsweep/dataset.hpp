#pragma once

#include <memory>
#include <span>
#include <vector>

#include "blindsweep/phantom.hpp"
#include "blindsweep/preprocess.hpp"

namespace blindsweep::dataset {

using phantom::CasePlan;
using phantom::CaseRecord;

// Read-only view of one visit, backed either by a plan (frames rendered on
// demand) or by recorded frames.
class CaseView {
 public:
  static CaseView planned(CasePlan plan) {
    CaseView v;
    v.plan_ = std::make_shared<const CasePlan>(std::move(plan));
    return v;
  }
  static CaseView recorded(CaseRecord rec) {
    CaseView v;
    v.rec_ = std::make_shared<const CaseRecord>(std::move(rec));
    return v;
  }

  const std::string& patient_id() const { return plan_ ? plan_->patient_id : rec_->patient_id; }
  const std::string& visit_id() const { return plan_ ? plan_->visit_id : rec_->visit_id; }
  int ga_days() const { return plan_ ? plan_->ga_days : rec_->ga_days; }
  phantom::Presentation presentation() const { return plan_ ? plan_->presentation : rec_->presentation; }
  bool non_cephalic() const { return phantom::is_non_cephalic(presentation()); }
  phantom::Device device() const { return plan_ ? plan_->device : rec_->device; }
  phantom::Operator operator_() const { return plan_ ? plan_->operator_ : rec_->operator_; }

  int sweep_count() const {
    return static_cast<int>(plan_ ? plan_->sweeps.size() : rec_->sweeps.size());
  }
  phantom::SweepType sweep_type(int s) const {
    return plan_ ? plan_->sweeps.at(s).type : rec_->sweeps.at(s).sweep_type;
  }
  int frame_count(int s) const {
    return plan_ ? plan_->sweeps.at(s).frame_count : static_cast<int>(rec_->sweeps.at(s).frame_count);
  }
  double fps(int s) const { return plan_ ? plan_->render.fps : rec_->sweeps.at(s).fps; }
  double scale(int s) const {
    return plan_ ? static_cast<double>(static_cast<float>(plan_->profile().scale_cm_per_px))
                 : static_cast<double>(rec_->sweeps.at(s).scale_cm_per_px);
  }
  int width(int s) const { return plan_ ? plan_->render.width : rec_->sweeps.at(s).width; }
  int height(int s) const { return plan_ ? plan_->render.height : rec_->sweeps.at(s).height; }

  // Raw u8 frame; `scratch` holds rendered pixels for planned cases.
  std::span<const std::uint8_t> frame(int s, int k, std::vector<std::uint8_t>& scratch) const {
    if (plan_) {
      scratch.resize(static_cast<std::size_t>(width(s)) * height(s));
      plan_->render_frame_into(s, k, scratch);
      return scratch;
    }
    return rec_->sweeps.at(s).frame(k);
  }

  const CasePlan* plan() const { return plan_.get(); }
  const CaseRecord* record() const { return rec_.get(); }

 private:
  std::shared_ptr<const CasePlan> plan_;
  std::shared_ptr<const CaseRecord> rec_;
};

// Normalised frames [indices.size(), H, W, 1] for the given raw frame indices.
inline nn::Tensor<float> load_frames(const CaseView& c, int sweep, const std::vector<int>& indices,
                                     const preprocess::ScaleSpec& spec) {
  preprocess::FrameRescaler rs(c.width(sweep), c.height(sweep), c.scale(sweep), spec);
  const std::size_t fs = static_cast<std::size_t>(spec.target_width) * spec.target_height;
  nn::Tensor<float> out(nn::Shape(static_cast<int>(indices.size()), spec.target_height, spec.target_width, 1));
  std::vector<std::uint8_t> scratch;
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (i > 0 && indices[i] == indices[i - 1]) {
      std::copy(out.data() + (i - 1) * fs, out.data() + i * fs, out.data() + i * fs);
      continue;
    }
    rs.apply(c.frame(sweep, indices[i], scratch), out.data() + i * fs);
  }
  return out;
}

inline nn::Tensor<float> load_ga_clip(const CaseView& c, int sweep, int clip, const preprocess::ScaleSpec& scale,
                                      const preprocess::ClipSpec& spec) {
  const auto all = preprocess::ga_clip_frame_indices(c.frame_count(sweep), spec);
  if (clip < 0 || clip >= static_cast<int>(all.size())) throw ArgumentError("clip index out of range");
  return load_frames(c, sweep, all[clip], scale);
}

// Distinct frames of the presentation clip; padding is applied by the model's
// recurrence (see models::ClipBatch).
inline nn::Tensor<float> load_presentation_frames(const CaseView& c, int sweep, const preprocess::ScaleSpec& scale,
                                                  const preprocess::ClipSpec& spec) {
  auto idx = preprocess::presentation_clip_frame_indices(c.frame_count(sweep), spec);
  idx.resize(preprocess::presentation_valid_length(c.frame_count(sweep), spec));
  return load_frames(c, sweep, idx, scale);
}

inline std::vector<CaseView> plan_views(const phantom::CorpusPlan& corpus, const phantom::Protocol& protocol,
                                        const phantom::RenderConfig& render) {
  std::vector<CaseView> out;
  out.reserve(corpus.cases.size());
  for (const auto& cs : corpus.cases) out.push_back(CaseView::planned(phantom::plan_case(cs, protocol, render)));
  return out;
}

}  // namespace blindsweep::dataset
