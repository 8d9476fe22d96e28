#pragma once

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>

#include "blindsweep/bytes.hpp"
#include "blindsweep/config.hpp"
#include "blindsweep/pipeline.hpp"
#include "blindsweep/runtime.hpp"

namespace blindsweep::cli {

namespace fs = std::filesystem;
using models::ModelConfig;
using models::ModelKind;
using models::SweepModel;
using phantom::read_text_file;
using phantom::write_text_file;

struct CommonOptions {
  std::string config;
  std::uint64_t seed = 1;
  std::string out;
  std::string protocol = "full";
  std::optional<std::string> device;
  std::optional<std::string> operator_;
  bool realtime = false;
};

inline Config load_config(const CommonOptions& o, const std::set<std::string>& allowed) {
  if (o.config.empty()) return Config(phantom::KeyValues{}, "<defaults>", allowed);
  return Config::load(o.config, allowed);
}

inline std::optional<phantom::Device> device_filter(const CommonOptions& o) {
  if (!o.device) return std::nullopt;
  return phantom::parse_device(*o.device);
}

inline std::optional<phantom::Operator> operator_filter(const CommonOptions& o) {
  if (!o.operator_) return std::nullopt;
  return phantom::parse_operator(*o.operator_);
}

// Cases matching the --device / --operator restrictions.
inline std::vector<int> matching_cases(const pipeline::Corpus& corpus, const CommonOptions& o,
                                       std::optional<phantom::Split> split = std::nullopt) {
  const auto dev = device_filter(o);
  const auto op = operator_filter(o);
  std::vector<int> out;
  for (int i : pipeline::cases_in_split(corpus, split)) {
    const auto& c = corpus.cases[i];
    if (dev && c.device() != *dev) continue;
    if (op && c.operator_() != *op) continue;
    out.push_back(i);
  }
  return out;
}

inline fs::path out_dir(const CommonOptions& o, const char* fallback) {
  return o.out.empty() ? fs::path(fallback) : fs::path(o.out);
}

inline std::unique_ptr<SweepModel<float>> load_model(const std::string& path) {
  return models::decode_model(read_file_bytes(path));
}

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

inline int run_generate(const CommonOptions& o, std::ostream& out) {
  std::set<std::string> keys = pipeline::render_config_keys();
  keys.erase("protocol");
  for (const char* k : {"n_patients", "n_cases", "novice_fraction", "low_cost_fraction", "ga_min", "ga_max", "p_breech",
                        "p_transverse", "p_oblique", "materialize"})
    keys.insert(k);
  const Config cfg = load_config(o, keys);
  phantom::CorpusConfig cc;
  cc.n_patients = static_cast<int>(cfg.integer("n_patients", cc.n_patients));
  cc.n_cases = static_cast<int>(cfg.integer("n_cases", cc.n_cases));
  cc.novice_fraction = cfg.real("novice_fraction", cc.novice_fraction);
  cc.low_cost_fraction = cfg.real("low_cost_fraction", cc.low_cost_fraction);
  cc.ga_min = static_cast<int>(cfg.integer("ga_min", cc.ga_min));
  cc.ga_max = static_cast<int>(cfg.integer("ga_max", cc.ga_max));
  cc.p_breech = cfg.real("p_breech", cc.p_breech);
  cc.p_transverse = cfg.real("p_transverse", cc.p_transverse);
  cc.p_oblique = cfg.real("p_oblique", cc.p_oblique);
  cc.force_device = device_filter(o);
  cc.force_operator = operator_filter(o);
  const auto render = pipeline::parse_render_config(cfg).first;
  const auto protocol = pipeline::parse_protocol(o.protocol);
  phantom::CorpusPlan plan;
  try {
    plan = phantom::plan_corpus(cc, o.seed);
  } catch (const ArgumentError& e) {
    throw ConfigError(e.what());
  } catch (const DomainError& e) {
    throw ConfigError(e.what());
  }
  const fs::path dir = out_dir(o, "corpus");
  pipeline::write_corpus(dir, plan, render, protocol, cfg.flag("materialize", false));
  out << "wrote " << plan.cases.size() << " cases to " << dir.string() << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

inline ModelConfig model_config(ModelKind kind, const std::string& size) {
  if (size == "desk")
    return kind == ModelKind::gestational_age ? ModelConfig::desk_gestational_age() : ModelConfig::desk_presentation();
  if (size == "tiny") return ModelConfig::tiny(kind);
  throw ConfigError("unknown model size: " + size);
}

inline int run_train(const CommonOptions& o, std::ostream& out) {
  const Config cfg = load_config(o, {"corpus", "model", "size", "steps", "batch_size", "lr0", "lr_end", "log_every",
                                     "tune_units", "augment", "weight_decay", "forget_bias"});
  ModelKind kind;
  try {
    kind = models::parse_model_kind(cfg.required("model"));
  } catch (const ArgumentError& e) {
    throw ConfigError(e.what());
  }
  ModelConfig mc = model_config(kind, cfg.str("size", "desk"));
  mc.lstm_forget_bias = cfg.real("forget_bias", mc.lstm_forget_bias);

  auto corpus = pipeline::load_corpus(cfg.required("corpus"));
  std::vector<dataset::CaseView> cases;
  for (int i : matching_cases(corpus, o)) cases.push_back(corpus.cases[i]);

  models::TrainConfig tc;
  tc.steps = cfg.integer("steps", tc.steps);
  tc.batch_size = static_cast<int>(cfg.integer("batch_size", tc.batch_size));
  tc.log_every = static_cast<int>(cfg.integer("log_every", tc.log_every));
  tc.tune_units = static_cast<int>(cfg.integer("tune_units", tc.tune_units));
  tc.augment = cfg.flag("augment", tc.augment);
  tc.adamw.weight_decay = cfg.real("weight_decay", tc.adamw.weight_decay);
  tc.seed = o.seed;
  auto ramp = models::default_ramp(kind, std::max<long>(tc.steps, 1));
  ramp.lr0 = cfg.real("lr0", ramp.lr0);
  ramp.lr_end = cfg.real("lr_end", ramp.lr_end);
  tc.ramp = ramp;

  const fs::path dir = out_dir(o, ".");
  fs::create_directories(dir);
  const std::string name = models::to_string(kind);
  std::ofstream log(dir / ("train_" + name + ".log"), std::ios::trunc);
  if (!log) throw std::runtime_error("cannot write training log in " + dir.string());
  log << "step,lr,loss,tune_metric\n";
  SweepModel<float> model(mc, o.seed);
  const auto result = models::train_model(model, cases, corpus.splits, tc, &log);
  write_file_bytes((dir / ("model_" + name + ".uwts")).string(), models::encode_model(model));
  out << "trained " << name << " on " << result.train_units << " units for " << tc.steps
      << " steps; final loss " << pipeline::format_real(result.last_loss, "%.6f") << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// infer
// ---------------------------------------------------------------------------

inline std::optional<phantom::Split> split_option(const std::string& s) {
  if (s == "all") return std::nullopt;
  try {
    return phantom::parse_split(s);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
}

inline int run_infer(const CommonOptions& o, std::ostream& out) {
  const Config cfg = load_config(o, {"corpus", "ga_model", "presentation_model", "split"});
  if (!cfg.has("ga_model") && !cfg.has("presentation_model"))
    throw ConfigError(cfg.source() + ": set ga_model, presentation_model or both");
  std::unique_ptr<SweepModel<float>> ga, pres;
  if (cfg.has("ga_model")) ga = load_model(cfg.str("ga_model", ""));
  if (cfg.has("presentation_model")) pres = load_model(cfg.str("presentation_model", ""));
  const auto corpus = pipeline::load_corpus(cfg.required("corpus"));
  const auto which = matching_cases(corpus, o, split_option(cfg.str("split", "all")));
  const auto res =
      pipeline::infer_cases(ga.get(), pres.get(), corpus.cases, which, pipeline::parse_protocol(o.protocol));
  const fs::path dir = out_dir(o, ".");
  fs::create_directories(dir);
  write_text_file(dir / "estimates.csv", pipeline::estimates_csv(res.estimates));
  write_text_file(dir / "clips.csv", pipeline::clips_csv(res.clips));
  out << "wrote estimates for " << res.estimates.size() << " cases (" << res.clips.size() << " clips) to "
      << dir.string() << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

inline int run_eval(const CommonOptions& o, std::ostream& out) {
  const Config cfg = load_config(
      o, {"corpus", "predictions", "reduced_predictions", "clips", "biometry", "level", "calibration_bins"});
  const auto corpus = pipeline::load_corpus(cfg.required("corpus"));
  const fs::path dir = out_dir(o, ".");
  fs::create_directories(dir);

  pipeline::EvalInputs in;
  const auto dev = device_filter(o);
  const auto op = operator_filter(o);
  for (const auto& v : pipeline::visit_truth(corpus))
    if ((!dev || v.device == *dev) && (!op || v.operator_ == *op)) in.visits.push_back(v);
  const std::string pred = cfg.required("predictions");
  in.full = pipeline::index_estimates(pipeline::parse_estimates(read_text_file(pred), pred));
  if (cfg.has("reduced_predictions")) {
    const std::string p = cfg.str("reduced_predictions", "");
    in.reduced = pipeline::index_estimates(pipeline::parse_estimates(read_text_file(p), p));
  }
  if (cfg.has("clips")) {
    const std::string p = cfg.str("clips", "");
    in.clips = pipeline::parse_clips(read_text_file(p), p);
  }
  const std::string bio = cfg.str("biometry", "auto");
  if (bio == "auto") {
    in.biometry = pipeline::biometry_estimates(corpus.cases, matching_cases(corpus, o, phantom::Split::test));
    write_text_file(dir / "biometry.csv", pipeline::biometry_csv(in.biometry));
  } else if (bio != "none") {
    in.biometry = pipeline::parse_biometry(read_text_file(bio), bio);
  }
  in.seed = o.seed;
  in.level = cfg.real("level", in.level);
  in.calibration_bins = static_cast<int>(cfg.integer("calibration_bins", in.calibration_bins));
  const auto report = pipeline::build_report(in);
  pipeline::write_report(dir, report);
  out << pipeline::summary_text(report);
  return 0;
}

// ---------------------------------------------------------------------------
// bench
// ---------------------------------------------------------------------------

inline std::string latency_text(const runtime::LatencyReport& r) {
  std::ostringstream os;
  os << "mean_s=" << pipeline::format_real(r.mean_s, "%.6g") << "\nsd_s=" << pipeline::format_real(r.sd_s, "%.6g")
     << "\nrepetitions=" << r.repetitions << "\nsingle_clip_s=" << pipeline::format_real(r.single_clip_s, "%.6g")
     << "\nhardware=" << r.hardware << "\nwarning=" << (r.warning ? r.warning_text : std::string("none")) << '\n';
  return os.str();
}

inline int run_bench(const CommonOptions& o, std::ostream& out) {
  const Config cfg = load_config(o, {"ga_model", "presentation_model", "repetitions", "duration_s", "sweep", "ga_days",
                                     "queue_capacity"});
  const auto ga = load_model(cfg.required("ga_model"));
  const auto pres = load_model(cfg.required("presentation_model"));
  phantom::RenderConfig render = phantom::RenderConfig::desk();
  render.fixed_duration_s = cfg.real("duration_s", 10.0);
  phantom::CaseSpec spec;
  spec.patient_id = "BENCH";
  spec.visit_id = "BENCH-V1";
  spec.ga_days = static_cast<int>(cfg.integer("ga_days", 200));
  spec.device = device_filter(o).value_or(phantom::Device::standard);
  spec.operator_ = operator_filter(o).value_or(phantom::Operator::sonographer);
  spec.seed = o.seed;
  phantom::SweepType sweep;
  try {
    sweep = phantom::parse_sweep_type(cfg.str("sweep", "M"));
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  const auto c = dataset::CaseView::planned(phantom::plan_case(spec, {sweep}, render));
  runtime::NetworkStream gs(*ga), ps(*pres);
  runtime::BenchOptions bo;
  bo.engine.realtime = o.realtime;
  bo.engine.queue_capacity = static_cast<std::size_t>(cfg.integer("queue_capacity", 16));
  const int reps = static_cast<int>(cfg.integer("repetitions", 10));
  if (reps < 1) throw ConfigError("repetitions must be >= 1");
  const auto rep = runtime::stream_latency_bench(c, gs, ps, reps, bo);
  const std::string text = latency_text(rep);
  if (!o.out.empty()) {
    fs::create_directories(o.out);
    write_text_file(fs::path(o.out) / "latency.txt", text);
  }
  out << text;
  return 0;
}

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

inline void add_common(CLI::App* sub, CommonOptions& o) {
  sub->add_option("--config", o.config, "key=value configuration file");
  sub->add_option("--seed", o.seed, "random seed");
  sub->add_option("--out", o.out, "output directory");
  sub->add_option("--protocol", o.protocol, "sweep protocol")->check(CLI::IsMember({"full", "mr"}));
  sub->add_option("--device", o.device, "restrict to one device")->check(CLI::IsMember({"standard", "low_cost"}));
  sub->add_option("--operator", o.operator_, "restrict to one operator")
      ->check(CLI::IsMember({"sonographer", "novice"}));
  sub->add_flag("--realtime", o.realtime, "pace frames on the wall clock");
}

// Exit status: 0 success, 2 usage or configuration error, 1 runtime error.
inline int run_command(int argc, const char* const* argv, std::ostream& out = std::cout,
                       std::ostream& err = std::cerr) {
  CLI::App app{"Blind-sweep ultrasound pipeline", "blindsweep"};
  app.require_subcommand(1);
  CommonOptions o;
  const std::vector<std::pair<const char*, const char*>> commands{
      {"generate", "render a synthetic corpus"},
      {"train", "train one model and write a checkpoint"},
      {"infer", "write case estimates for a corpus"},
      {"eval", "write evaluation tables"},
      {"bench", "measure streaming latency"}};
  for (const auto& [name, help] : commands) add_common(app.add_subcommand(name, help), o);
  if (argc > 1 && argv[1][0] != '-' && !app.get_subcommand_no_throw(argv[1])) {
    err << "error: unknown subcommand " << argv[1] << "\n\n" << app.help();
    return 2;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }
  const std::string name = app.get_subcommands().front()->get_name();
  try {
    if (name == "generate") return run_generate(o, out);
    if (name == "train") return run_train(o, out);
    if (name == "infer") return run_infer(o, out);
    if (name == "eval") return run_eval(o, out);
    return run_bench(o, out);
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << '\n';
    return 2;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace blindsweep::cli
