#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "blindsweep/aggregate.hpp"
#include "blindsweep/config.hpp"
#include "blindsweep/dataset.hpp"
#include "blindsweep/evaluate.hpp"
#include "blindsweep/sweep_io.hpp"
#include "blindsweep/training.hpp"

namespace blindsweep::pipeline {

namespace fs = std::filesystem;
using dataset::CaseView;
using models::ModelKind;
using models::SweepModel;
using phantom::Protocol;
using phantom::Split;
using phantom::read_text_file;
using phantom::write_text_file;

// ---------------------------------------------------------------------------
// Small CSV helpers
// ---------------------------------------------------------------------------

struct CsvError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

inline double parse_number(const std::string& s, const std::string& where) {
  if (s == "nan" || s == "undefined") return std::nan("");
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || *end != '\0') throw CsvError(where + ": not a number: " + s);
  return v;
}

// Rows of a CSV whose header must equal `header`.
inline std::vector<std::vector<std::string>> read_csv(const std::string& text, const std::string& header,
                                                      const std::string& source) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw CsvError(source + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != header) throw CsvError(source + ": unexpected header: " + line);
  const std::size_t cols = split_csv_line(header).size();
  std::vector<std::vector<std::string>> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    auto fields = split_csv_line(line);
    if (fields.size() != cols)
      throw CsvError(source + ":" + std::to_string(lineno) + ": expected " + std::to_string(cols) + " fields");
    rows.push_back(std::move(fields));
  }
  return rows;
}

inline std::string format_real(double v, const char* fmt = "%.17g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

// ---------------------------------------------------------------------------
// Corpus directory
// ---------------------------------------------------------------------------

inline const char* kCorpusHeader = "patient_id,visit_id,ga_days,presentation,device,operator,seed,split";

inline std::string protocol_name(const Protocol& p) {
  std::string s;
  for (auto t : p) s += (s.empty() ? "" : "+") + phantom::to_string(t);
  return s;
}

inline Protocol parse_protocol(const std::string& s) {
  if (s == "full") return phantom::full_protocol();
  if (s == "mr") return phantom::reduced_protocol();
  Protocol p;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, '+')) p.push_back(phantom::parse_sweep_type(cur));
  return phantom::canonical_protocol(p);
}

inline std::string render_config_text(const phantom::RenderConfig& r, const Protocol& protocol) {
  std::ostringstream os;
  os << "width=" << r.width << "\nheight=" << r.height << "\nfps=" << format_real(r.fps)
     << "\nmin_duration_s=" << format_real(r.min_duration_s) << "\nmax_duration_s=" << format_real(r.max_duration_s)
     << "\nfixed_duration_s=" << (r.fixed_duration_s ? format_real(*r.fixed_duration_s) : std::string("none"))
     << "\nstandard_scale_cm_per_px=" << format_real(r.standard.scale_cm_per_px)
     << "\nstandard_speckle_sd=" << format_real(r.standard.speckle_sd)
     << "\nlow_cost_scale_cm_per_px=" << format_real(r.low_cost.scale_cm_per_px)
     << "\nlow_cost_speckle_sd=" << format_real(r.low_cost.speckle_sd) << "\nprotocol=" << protocol_name(protocol)
     << '\n';
  return os.str();
}

inline std::pair<phantom::RenderConfig, Protocol> parse_render_config(const Config& c) {
  phantom::RenderConfig r = phantom::RenderConfig::desk();
  r.width = static_cast<int>(c.integer("width", r.width));
  r.height = static_cast<int>(c.integer("height", r.height));
  r.fps = c.real("fps", r.fps);
  r.min_duration_s = c.real("min_duration_s", r.min_duration_s);
  r.max_duration_s = c.real("max_duration_s", r.max_duration_s);
  if (c.has("fixed_duration_s") && c.str("fixed_duration_s", "") != "none")
    r.fixed_duration_s = c.real("fixed_duration_s", 0.0);
  r.standard.scale_cm_per_px = c.real("standard_scale_cm_per_px", r.standard.scale_cm_per_px);
  r.standard.speckle_sd = c.real("standard_speckle_sd", r.standard.speckle_sd);
  r.low_cost.scale_cm_per_px = c.real("low_cost_scale_cm_per_px", r.low_cost.scale_cm_per_px);
  r.low_cost.speckle_sd = c.real("low_cost_speckle_sd", r.low_cost.speckle_sd);
  return {r, parse_protocol(c.str("protocol", "full"))};
}

inline const std::set<std::string>& render_config_keys() {
  static const std::set<std::string> keys{"width",
                                          "height",
                                          "fps",
                                          "min_duration_s",
                                          "max_duration_s",
                                          "fixed_duration_s",
                                          "standard_scale_cm_per_px",
                                          "standard_speckle_sd",
                                          "low_cost_scale_cm_per_px",
                                          "low_cost_speckle_sd",
                                          "protocol"};
  return keys;
}

// Writes corpus.csv and render.cfg; with `materialize`, also renders every
// case into cases/<visit_id>/.
inline void write_corpus(const fs::path& dir, const phantom::CorpusPlan& plan, const phantom::RenderConfig& render,
                         const Protocol& protocol, bool materialize) {
  fs::create_directories(dir);
  std::ostringstream os;
  os << kCorpusHeader << '\n';
  for (const auto& c : plan.cases)
    os << c.patient_id << ',' << c.visit_id << ',' << c.ga_days << ',' << phantom::to_string(c.presentation) << ','
       << phantom::to_string(c.device) << ',' << phantom::to_string(c.operator_) << ',' << c.seed << ','
       << phantom::to_string(plan.split_of(c)) << '\n';
  write_text_file(dir / "corpus.csv", os.str());
  write_text_file(dir / "render.cfg", render_config_text(render, protocol));
  if (!materialize) return;
  for (const auto& c : plan.cases)
    phantom::write_case_bundle(dir / "cases" / c.visit_id, phantom::plan_case(c, protocol, render).materialize());
}

struct Corpus {
  std::vector<CaseView> cases;
  phantom::SplitAssignment splits;
  phantom::RenderConfig render;
  Protocol protocol;
};

inline Corpus load_corpus(const fs::path& dir) {
  const auto cfg = Config::load(dir / "render.cfg", render_config_keys());
  Corpus out;
  std::tie(out.render, out.protocol) = parse_render_config(cfg);
  const std::string source = (dir / "corpus.csv").string();
  const auto rows = read_csv(read_text_file(dir / "corpus.csv"), kCorpusHeader, source);
  for (const auto& r : rows) {
    phantom::CaseSpec cs;
    cs.patient_id = r[0];
    cs.visit_id = r[1];
    cs.ga_days = static_cast<int>(parse_number(r[2], source));
    cs.presentation = phantom::parse_presentation(r[3]);
    cs.device = phantom::parse_device(r[4]);
    cs.operator_ = phantom::parse_operator(r[5]);
    cs.seed = std::stoull(r[6]);
    const Split split = phantom::parse_split(r[7]);
    auto [it, fresh] = out.splits.emplace(cs.patient_id, split);
    if (!fresh && it->second != split) throw CsvError(source + ": patient " + cs.patient_id + " spans splits");
    const fs::path bundle = dir / "cases" / cs.visit_id;
    if (fs::exists(bundle)) out.cases.push_back(CaseView::recorded(phantom::read_case_bundle(bundle)));
    else out.cases.push_back(CaseView::planned(phantom::plan_case(cs, out.protocol, out.render)));
  }
  return out;
}

// Visit number from a "<patient>-V<n>" identifier; 0 when absent.
inline int visit_number(const std::string& visit_id) {
  const auto pos = visit_id.rfind("-V");
  if (pos == std::string::npos) return 0;
  try {
    return std::stoi(visit_id.substr(pos + 2));
  } catch (const std::exception&) {
    return 0;
  }
}

// ---------------------------------------------------------------------------
// Batched inference
// ---------------------------------------------------------------------------

struct ClipRecord {
  std::string visit_id;
  phantom::SweepType sweep = phantom::SweepType::M;
  int clip = 0;
  double log_age = 0.0;
  double variance = 0.0;
};

struct InferenceResult {
  std::vector<aggregate::CaseEstimate> estimates;
  std::vector<ClipRecord> clips;
};

inline bool uses_sweep(const Protocol& protocol, phantom::SweepType t) {
  return std::find(protocol.begin(), protocol.end(), t) != protocol.end();
}

// Case estimates from the sweeps of each case that belong to `protocol`;
// either model may be absent.
inline InferenceResult infer_cases(const SweepModel<float>* ga, const SweepModel<float>* presentation,
                                   const std::vector<CaseView>& cases, const std::vector<int>& which,
                                   const Protocol& protocol) {
  if (ga && ga->kind() != ModelKind::gestational_age) throw ConfigError("GA slot holds a presentation model");
  if (presentation && presentation->kind() != ModelKind::presentation)
    throw ConfigError("presentation slot holds a GA model");
  std::vector<models::ClipRef> ga_units, pres_units;
  for (int i : which) {
    const auto& c = cases.at(i);
    for (int s = 0; s < c.sweep_count(); ++s) {
      if (!uses_sweep(protocol, c.sweep_type(s))) continue;
      if (ga)
        for (int k = 0; k < preprocess::ga_clip_count(c.frame_count(s), ga->config().clip); ++k)
          ga_units.push_back({i, s, k});
      if (presentation) pres_units.push_back({i, s, 0});
    }
  }
  const auto ga_out = ga ? models::predict_units(*ga, cases, ga_units) : std::vector<std::pair<double, double>>{};
  const auto pres_out = presentation ? models::predict_units(*presentation, cases, pres_units)
                                     : std::vector<std::pair<double, double>>{};
  InferenceResult r;
  std::size_t gi = 0, pi = 0;
  for (int i : which) {
    const auto& c = cases[i];
    std::vector<aggregate::GaClipOutput> clips;
    while (gi < ga_units.size() && ga_units[gi].case_index == i) {
      const auto& u = ga_units[gi];
      clips.push_back({ga_out[gi].first, ga_out[gi].second});
      r.clips.push_back({c.visit_id(), c.sweep_type(u.sweep), u.clip, ga_out[gi].first, ga_out[gi].second});
      ++gi;
    }
    std::vector<double> probs;
    while (pi < pres_units.size() && pres_units[pi].case_index == i) probs.push_back(pres_out[pi++].second);
    aggregate::CaseEstimate e = clips.empty() ? aggregate::CaseEstimate{} : aggregate::case_ga_estimate(clips);
    e.visit_id = c.visit_id();
    e.n_sweeps = 0;
    for (int s = 0; s < c.sweep_count(); ++s) e.n_sweeps += uses_sweep(protocol, c.sweep_type(s)) ? 1 : 0;
    if (!probs.empty()) {
      e.p_noncephalic = aggregate::case_presentation_probability(probs);
      e.has_presentation = true;
    }
    r.estimates.push_back(std::move(e));
  }
  return r;
}

inline std::vector<int> cases_in_split(const Corpus& corpus, std::optional<Split> split) {
  std::vector<int> out;
  for (int i = 0; i < static_cast<int>(corpus.cases.size()); ++i)
    if (!split || corpus.splits.at(corpus.cases[i].patient_id()) == *split) out.push_back(i);
  return out;
}

// ---------------------------------------------------------------------------
// Prediction files
// ---------------------------------------------------------------------------

inline const char* kClipHeader = "visit_id,sweep,clip,log_age,variance,feedback";

inline std::string estimates_csv(const std::vector<aggregate::CaseEstimate>& estimates) {
  std::string s = aggregate::estimate_header() + "\n";
  for (const auto& e : estimates) s += aggregate::estimate_record(e) + "\n";
  return s;
}

inline std::string clips_csv(const std::vector<ClipRecord>& clips) {
  std::string s = std::string(kClipHeader) + "\n";
  for (const auto& c : clips)
    s += c.visit_id + "," + phantom::to_string(c.sweep) + "," + std::to_string(c.clip) + "," +
         format_real(c.log_age, "%.9g") + "," + format_real(c.variance, "%.9g") + "," +
         format_real(aggregate::feedback_score(c.variance), "%.9g") + "\n";
  return s;
}

struct EstimateRow {
  std::string visit_id;
  double ga_days = std::nan("");
  int n_clips = 0;
  double p_noncephalic = std::nan("");
};

inline std::vector<EstimateRow> parse_estimates(const std::string& text, const std::string& source) {
  std::vector<EstimateRow> out;
  for (const auto& r : read_csv(text, aggregate::estimate_header(), source))
    out.push_back({r[0], parse_number(r[1], source), static_cast<int>(parse_number(r[2], source)),
                   parse_number(r[3], source)});
  return out;
}

struct ClipRow {
  std::string visit_id;
  double log_age = 0.0;
  double feedback = 0.0;
};

inline std::vector<ClipRow> parse_clips(const std::string& text, const std::string& source) {
  std::vector<ClipRow> out;
  for (const auto& r : read_csv(text, kClipHeader, source))
    out.push_back({r[0], parse_number(r[3], source), parse_number(r[5], source)});
  return out;
}

// ---------------------------------------------------------------------------
// Biometry comparator
// ---------------------------------------------------------------------------

inline const char* kBiometryHeader = "visit_id,biometry_ga_days";

// Comparator estimates for the given cases; cases without a detectable fetus are omitted.
inline std::map<std::string, double> biometry_estimates(const std::vector<CaseView>& cases,
                                                        const std::vector<int>& which) {
  std::map<std::string, double> out;
  for (int i : which) {
    const auto& c = cases.at(i);
    const phantom::CaseRecord rec = c.record() ? *c.record() : c.plan()->materialize();
    try {
      out[c.visit_id()] = phantom::biometry_estimate(rec);
    } catch (const DetectionError&) {
    }
  }
  return out;
}

inline std::string biometry_csv(const std::map<std::string, double>& b) {
  std::string s = std::string(kBiometryHeader) + "\n";
  for (const auto& [v, d] : b) s += v + "," + format_real(d, "%.4f") + "\n";
  return s;
}

inline std::map<std::string, double> parse_biometry(const std::string& text, const std::string& source) {
  std::map<std::string, double> out;
  for (const auto& r : read_csv(text, kBiometryHeader, source)) out[r[0]] = parse_number(r[1], source);
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation report
// ---------------------------------------------------------------------------

struct VisitTruth {
  std::string patient_id;
  std::string visit_id;
  int ga_days = 0;
  bool non_cephalic = false;
  phantom::Device device = phantom::Device::standard;
  phantom::Operator operator_ = phantom::Operator::sonographer;
  Split split = Split::test;
};

inline std::vector<VisitTruth> visit_truth(const Corpus& corpus) {
  std::vector<VisitTruth> out;
  for (const auto& c : corpus.cases)
    out.push_back({c.patient_id(), c.visit_id(), c.ga_days(), c.non_cephalic(), c.device(), c.operator_(),
                   corpus.splits.at(c.patient_id())});
  return out;
}

struct EvalInputs {
  std::vector<VisitTruth> visits;
  std::map<std::string, EstimateRow> full;
  std::map<std::string, EstimateRow> reduced;
  std::map<std::string, double> biometry;
  std::vector<ClipRow> clips;
  std::uint64_t seed = 1;
  double level = 0.95;
  int calibration_bins = 10;
  int presentation_min_ga_days = models::kSecondTrimesterDays;
};

struct EvalReport {
  std::vector<evaluate::GaReportRow> ga_rows;
  std::vector<evaluate::PresentationReportRow> presentation_rows;
  std::vector<evaluate::CalibrationBin> calibration;
  std::optional<double> calibration_spearman;
  std::optional<evaluate::OperatingPoint> operating_point;
  double training_median_days = std::nan("");
  double median_predictor_mae = std::nan("");
  std::vector<std::string> notes;
};

inline std::map<std::string, EstimateRow> index_estimates(const std::vector<EstimateRow>& rows) {
  std::map<std::string, EstimateRow> out;
  for (const auto& r : rows) out[r.visit_id] = r;
  return out;
}

namespace detail {

inline std::vector<std::size_t> one_visit_each(const std::vector<VisitTruth>& visits,
                                               const std::vector<std::size_t>& pool, std::uint64_t seed,
                                               evaluate::SampleMode mode) {
  std::vector<evaluate::VisitKey> keys;
  for (std::size_t i : pool)
    keys.push_back({visits[i].patient_id, visits[i].visit_id, static_cast<double>(visit_number(visits[i].visit_id))});
  std::vector<std::size_t> out;
  for (std::size_t k : evaluate::sample_one_visit_per_patient(keys, seed, mode)) out.push_back(pool[k]);
  return out;
}

inline bool has_ga(const std::map<std::string, EstimateRow>& m, const std::string& v) {
  auto it = m.find(v);
  return it != m.end() && std::isfinite(it->second.ga_days);
}

inline bool has_p(const std::map<std::string, EstimateRow>& m, const std::string& v) {
  auto it = m.find(v);
  return it != m.end() && std::isfinite(it->second.p_noncephalic);
}

}  // namespace detail

inline EvalReport build_report(const EvalInputs& in) {
  using evaluate::SampleMode;
  EvalReport rep;
  const auto& visits = in.visits;

  std::vector<double> train_ga;
  for (const auto& v : visits)
    if (v.split == Split::train) train_ga.push_back(v.ga_days);
  rep.training_median_days = aggregate::median_of(train_ga);

  struct Group {
    std::string name;
    std::optional<phantom::Operator> op;
    std::optional<phantom::Device> device;
  };
  using phantom::Device;
  using phantom::Operator;
  const std::vector<Group> groups{{"all", {}, {}},
                                  {"sonographer_standard", Operator::sonographer, Device::standard},
                                  {"sonographer_low_cost", Operator::sonographer, Device::low_cost},
                                  {"novice_standard", Operator::novice, Device::standard},
                                  {"novice_low_cost", Operator::novice, Device::low_cost}};
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    const auto& grp = groups[gi];
    std::vector<std::size_t> pool;
    for (std::size_t i = 0; i < visits.size(); ++i) {
      const auto& v = visits[i];
      if (v.split != Split::test || !detail::has_ga(in.full, v.visit_id)) continue;
      if (grp.op && v.operator_ != *grp.op) continue;
      if (grp.device && v.device != *grp.device) continue;
      pool.push_back(i);
    }
    if (pool.empty()) {
      rep.notes.push_back("GA group " + grp.name + " has no test visits");
      continue;
    }
    const auto chosen = detail::one_visit_each(visits, pool, phantom::mix_seed(in.seed, gi), SampleMode::random);
    evaluate::GaReportRow row;
    row.group = grp.name;
    row.n = chosen.size();
    std::vector<double> errs, bio_a, bio_b, reduced, median_errs;
    for (std::size_t i : chosen) {
      const auto& v = visits[i];
      const double e = in.full.at(v.visit_id).ga_days - v.ga_days;
      errs.push_back(e);
      median_errs.push_back(rep.training_median_days - v.ga_days);
      if (auto b = in.biometry.find(v.visit_id); b != in.biometry.end()) {
        bio_a.push_back(e);
        bio_b.push_back(b->second - v.ga_days);
      }
      if (detail::has_ga(in.reduced, v.visit_id)) reduced.push_back(in.reduced.at(v.visit_id).ga_days - v.ga_days);
    }
    row.blind_sweep = evaluate::error_stats(errs);
    if (!bio_b.empty()) row.biometry = evaluate::error_stats(bio_b);
    if (bio_a.size() >= 2) row.difference = evaluate::paired_mae_difference_ci(bio_a, bio_b, in.level);
    if (!reduced.empty()) row.reduced_protocol = evaluate::error_stats(reduced);
    if (grp.name == "all") rep.median_predictor_mae = evaluate::error_stats(median_errs).mae;
    rep.ga_rows.push_back(std::move(row));
  }

  auto eligible = [&](Split split, const std::optional<Device>& device, const std::optional<Operator>& op) {
    std::vector<std::size_t> pool;
    for (std::size_t i = 0; i < visits.size(); ++i) {
      const auto& v = visits[i];
      if (v.split != split || v.ga_days < in.presentation_min_ga_days || !detail::has_p(in.full, v.visit_id)) continue;
      if (device && v.device != *device) continue;
      if (op && v.operator_ != *op) continue;
      pool.push_back(i);
    }
    return detail::one_visit_each(visits, pool, in.seed, SampleMode::latest);
  };
  auto scores_labels = [&](const std::vector<std::size_t>& idx) {
    std::pair<std::vector<double>, std::vector<int>> sl;
    for (std::size_t i : idx) {
      sl.first.push_back(in.full.at(visits[i].visit_id).p_noncephalic);
      sl.second.push_back(visits[i].non_cephalic ? 1 : 0);
    }
    return sl;
  };

  double threshold = 0.5;
  {
    const auto [s, l] = scores_labels(eligible(Split::tune, {}, {}));
    try {
      rep.operating_point = evaluate::pick_operating_point(s, l);
      threshold = rep.operating_point->threshold;
    } catch (const ArgumentError& e) {
      rep.notes.push_back(std::string("operating point falls back to 0.5: ") + e.what());
    }
  }
  struct Subset {
    std::string name;
    std::optional<Device> device;
    std::optional<Operator> op;
  };
  const std::vector<Subset> subsets{{"all", {}, {}},
                                    {"low_cost", Device::low_cost, {}},
                                    {"standard", Device::standard, {}},
                                    {"novice", {}, Operator::novice},
                                    {"sonographer", {}, Operator::sonographer}};
  for (const auto& sub : subsets) {
    const auto idx = eligible(Split::test, sub.device, sub.op);
    if (idx.empty()) {
      rep.notes.push_back("presentation subset " + sub.name + " has no eligible test visits");
      continue;
    }
    const auto [s, l] = scores_labels(idx);
    evaluate::PresentationReportRow row;
    row.subset = sub.name;
    row.participants = idx.size();
    row.malpresentations = static_cast<std::size_t>(std::count(l.begin(), l.end(), 1));
    if (row.malpresentations > 0 && row.malpresentations < idx.size())
      row.roc = evaluate::roc_auc_delong(s, l, in.level);
    row.sens_spec = evaluate::sensitivity_specificity(s, l, threshold);
    const auto& ss = row.sens_spec;
    if (ss.tp + ss.fn > 0) row.sensitivity_ci = evaluate::clopper_pearson(ss.tp, ss.tp + ss.fn, in.level);
    if (ss.tn + ss.fp > 0) row.specificity_ci = evaluate::clopper_pearson(ss.tn, ss.tn + ss.fp, in.level);
    rep.presentation_rows.push_back(std::move(row));
  }

  std::map<std::string, const VisitTruth*> by_visit;
  for (const auto& v : visits) by_visit[v.visit_id] = &v;
  std::vector<double> feedback, abs_err;
  for (const auto& c : in.clips) {
    auto it = by_visit.find(c.visit_id);
    if (it == by_visit.end() || it->second->split != Split::test) continue;
    feedback.push_back(c.feedback);
    abs_err.push_back(std::abs(std::exp(c.log_age) - it->second->ga_days));
  }
  if (feedback.size() >= static_cast<std::size_t>(in.calibration_bins)) {
    rep.calibration = evaluate::feedback_calibration_table(feedback, abs_err, in.calibration_bins);
    try {
      rep.calibration_spearman = evaluate::calibration_spearman(rep.calibration);
    } catch (const ArgumentError& e) {
      rep.notes.push_back(std::string("calibration correlation undefined: ") + e.what());
    }
  } else {
    rep.notes.push_back("too few test clips for the calibration table");
  }
  return rep;
}

inline std::string summary_text(const EvalReport& r) {
  std::ostringstream os;
  os << "training_median_days=" << format_real(r.training_median_days, "%.4f") << '\n'
     << "median_predictor_mae=" << format_real(r.median_predictor_mae, "%.4f") << '\n';
  if (!r.ga_rows.empty() && r.ga_rows.front().group == "all")
    os << "blind_sweep_mae=" << format_real(r.ga_rows.front().blind_sweep.mae, "%.4f") << '\n';
  if (!r.ga_rows.empty() && r.ga_rows.front().group == "all" && r.ga_rows.front().reduced_protocol)
    os << "reduced_protocol_mae=" << format_real(r.ga_rows.front().reduced_protocol->mae, "%.4f") << '\n';
  if (!r.presentation_rows.empty() && r.presentation_rows.front().roc)
    os << "presentation_auc=" << format_real(r.presentation_rows.front().roc->auc, "%.4f") << '\n';
  if (r.operating_point) os << "operating_threshold=" << format_real(r.operating_point->threshold, "%.6f") << '\n';
  if (r.calibration_spearman) os << "calibration_spearman=" << format_real(*r.calibration_spearman, "%.4f") << '\n';
  for (const auto& n : r.notes) os << "note=" << n << '\n';
  return os.str();
}

inline void write_report(const fs::path& dir, const EvalReport& r) {
  fs::create_directories(dir);
  std::ostringstream ga, pres, cal;
  evaluate::write_ga_table(ga, r.ga_rows);
  evaluate::write_presentation_table(pres, r.presentation_rows);
  evaluate::write_calibration_table(cal, r.calibration);
  write_text_file(dir / "ga_table.csv", ga.str());
  write_text_file(dir / "presentation_table.csv", pres.str());
  write_text_file(dir / "calibration.csv", cal.str());
  write_text_file(dir / "summary.txt", summary_text(r));
}

}  // namespace blindsweep::pipeline
