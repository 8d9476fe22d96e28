#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "blindsweep/bytes.hpp"
#include "blindsweep/phantom.hpp"

// Sweep container (little-endian):
//   "USWP" | version u16 | width u16 | height u16 | fps f32 | scale_cm_per_px f32
//   | sweep_type u8 | frame_count u32 | frame_count*width*height u8 pixels
//
// Case stream: "UCAS" | version u16 | manifest_len u32 | manifest (UTF-8 key=value
// lines) | sweep_count u8 | per sweep: container_len u32, sweep container.
//
// Case bundle: a directory holding manifest.txt and sweep_<TYPE>.uswp per sweep.
namespace blindsweep::phantom {

inline constexpr char kSweepMagic[4] = {'U', 'S', 'W', 'P'};
inline constexpr char kCaseMagic[4] = {'U', 'C', 'A', 'S'};
inline constexpr std::uint16_t kSweepVersion = 1;
inline constexpr std::uint16_t kCaseVersion = 1;

inline void write_sweep(ByteWriter& w, const SweepRecording& s) {
  if (s.width < 0 || s.width > 0xFFFF || s.height < 0 || s.height > 0xFFFF)
    throw ArgumentError("sweep dimensions do not fit the container");
  if (s.pixels.size() != s.frame_size() * s.frame_count)
    throw ArgumentError("sweep pixel buffer does not match frame_count x width x height");
  w.text(std::string_view(kSweepMagic, 4));
  w.u16(kSweepVersion);
  w.u16(static_cast<std::uint16_t>(s.width));
  w.u16(static_cast<std::uint16_t>(s.height));
  w.f32(s.fps);
  w.f32(s.scale_cm_per_px);
  w.u8(static_cast<std::uint8_t>(s.sweep_type));
  w.u32(s.frame_count);
  w.bytes(s.pixels);
}

inline SweepRecording read_sweep(ByteReader& r) {
  const std::size_t start = r.offset();
  if (r.remaining() == 0) throw FormatError("empty sweep stream", start);
  if (r.text(4, "sweep magic") != std::string_view(kSweepMagic, 4))
    throw FormatError("bad sweep magic", start);
  const std::size_t version_at = r.offset();
  const auto version = r.u16("sweep version");
  if (version != kSweepVersion)
    throw FormatError("unsupported sweep version " + std::to_string(version), version_at);
  SweepRecording s;
  s.width = r.u16("width");
  s.height = r.u16("height");
  s.fps = r.f32("fps");
  s.scale_cm_per_px = r.f32("scale");
  const std::size_t type_at = r.offset();
  const int code = r.u8("sweep type");
  if (code > 5) throw FormatError("sweep type code " + std::to_string(code) + " out of range", type_at);
  s.sweep_type = static_cast<SweepType>(code);
  s.frame_count = r.u32("frame count");
  const auto px = r.bytes(s.frame_size() * s.frame_count, "pixels");
  s.pixels.assign(px.begin(), px.end());
  return s;
}

inline std::vector<std::uint8_t> encode_sweep(const SweepRecording& s) {
  ByteWriter w;
  write_sweep(w, s);
  return w.take();
}

inline SweepRecording decode_sweep(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  SweepRecording s = read_sweep(r);
  if (r.remaining() != 0) throw FormatError("trailing bytes after sweep", r.offset());
  return s;
}

// ---------------------------------------------------------------------------
// Manifests
// ---------------------------------------------------------------------------

using KeyValues = std::map<std::string, std::string>;

// Parses UTF-8 key=value lines; blank lines and lines starting with '#' are skipped.
inline KeyValues parse_key_values(const std::string& text, const std::string& source) {
  KeyValues kv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(source + ":" + std::to_string(lineno) + ": expected key=value");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError(source + ":" + std::to_string(lineno) + ": empty key");
    if (kv.count(key)) throw ConfigError(source + ":" + std::to_string(lineno) + ": duplicate key " + key);
    kv[key] = trim(line.substr(eq + 1));
  }
  return kv;
}

inline std::string case_manifest(const CaseRecord& c) {
  std::ostringstream o;
  o << "patient_id=" << c.patient_id << "\n"
    << "visit_id=" << c.visit_id << "\n"
    << "ga_days=" << c.ga_days << "\n"
    << "presentation=" << to_string(c.presentation) << "\n"
    << "device=" << to_string(c.device) << "\n"
    << "operator=" << to_string(c.operator_) << "\n"
    << "seed=" << c.seed << "\n";
  return o.str();
}

inline void apply_manifest(CaseRecord& c, const KeyValues& kv, const std::string& source) {
  static const char* required[] = {"patient_id", "visit_id", "ga_days", "presentation",
                                   "device",     "operator", "seed"};
  for (const char* k : required)
    if (!kv.count(k)) throw ConfigError(source + ": manifest lacks " + std::string(k));
  for (const auto& [k, v] : kv) {
    bool known = false;
    for (const char* r : required) known = known || k == r;
    if (!known) throw ConfigError(source + ": unknown manifest key " + k);
  }
  try {
    c.patient_id = kv.at("patient_id");
    c.visit_id = kv.at("visit_id");
    c.ga_days = std::stoi(kv.at("ga_days"));
    c.presentation = parse_presentation(kv.at("presentation"));
    c.device = parse_device(kv.at("device"));
    c.operator_ = parse_operator(kv.at("operator"));
    c.seed = std::stoull(kv.at("seed"));
  } catch (const std::logic_error& e) {
    throw ConfigError(source + ": bad manifest value (" + e.what() + ")");
  }
}

// ---------------------------------------------------------------------------
// Whole-case stream
// ---------------------------------------------------------------------------

inline std::vector<std::uint8_t> encode_case(const CaseRecord& c) {
  ByteWriter w;
  w.text(std::string_view(kCaseMagic, 4));
  w.u16(kCaseVersion);
  const std::string manifest = case_manifest(c);
  w.u32(static_cast<std::uint32_t>(manifest.size()));
  w.text(manifest);
  if (c.sweeps.size() > 255) throw ArgumentError("too many sweeps in case");
  w.u8(static_cast<std::uint8_t>(c.sweeps.size()));
  for (const auto& s : c.sweeps) {
    const auto bytes = encode_sweep(s);
    w.u32(static_cast<std::uint32_t>(bytes.size()));
    w.bytes(bytes);
  }
  return w.take();
}

inline CaseRecord decode_case(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (bytes.empty()) throw FormatError("empty case stream", 0);
  if (r.text(4, "case magic") != std::string_view(kCaseMagic, 4)) throw FormatError("bad case magic", 0);
  const std::size_t version_at = r.offset();
  const auto version = r.u16("case version");
  if (version != kCaseVersion)
    throw FormatError("unsupported case version " + std::to_string(version), version_at);
  const auto mlen = r.u32("manifest length");
  const std::size_t manifest_at = r.offset();
  CaseRecord c;
  try {
    apply_manifest(c, parse_key_values(r.text(mlen, "manifest"), "case manifest"), "case manifest");
  } catch (const ConfigError& e) {
    throw FormatError(e.what(), manifest_at);
  }
  const auto n = r.u8("sweep count");
  for (int i = 0; i < n; ++i) {
    const auto len = r.u32("sweep length");
    const std::size_t at = r.offset();
    const auto chunk = r.bytes(len, "sweep container");
    try {
      c.sweeps.push_back(decode_sweep(chunk));
    } catch (const FormatError& e) {
      throw FormatError("sweep " + std::to_string(i) + ": " + e.detail(), at + e.offset());
    }
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes after case", r.offset());
  return c;
}

// ---------------------------------------------------------------------------
// Directory bundles
// ---------------------------------------------------------------------------

inline std::string read_text_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + p.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

inline void write_text_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << text;
}

inline std::string sweep_file_name(SweepType t) { return "sweep_" + to_string(t) + ".uswp"; }

inline void write_case_bundle(const std::filesystem::path& dir, const CaseRecord& c) {
  std::filesystem::create_directories(dir);
  write_text_file(dir / "manifest.txt", case_manifest(c));
  for (const auto& s : c.sweeps) write_file_bytes((dir / sweep_file_name(s.sweep_type)).string(), encode_sweep(s));
}

inline CaseRecord read_case_bundle(const std::filesystem::path& dir) {
  const auto manifest = dir / "manifest.txt";
  CaseRecord c;
  apply_manifest(c, parse_key_values(read_text_file(manifest), manifest.string()), manifest.string());
  for (SweepType t : full_protocol()) {
    const auto p = dir / sweep_file_name(t);
    if (!std::filesystem::exists(p)) continue;
    try {
      c.sweeps.push_back(decode_sweep(read_file_bytes(p.string())));
    } catch (const FormatError& e) {
      throw FormatError(p.string() + ": " + e.detail(), e.offset());
    }
  }
  return c;
}

}  // namespace blindsweep::phantom
