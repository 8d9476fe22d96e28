#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "blindsweep/bytes.hpp"
#include "blindsweep/nn/graph.hpp"

// Weight file: "UWTS", version u16, count u32, then per tensor
//   name_len u32, name (UTF-8), rank u8, dims u32 x rank, f32 x prod(dims).
namespace blindsweep::nn {

inline constexpr char kCheckpointMagic[4] = {'U', 'W', 'T', 'S'};
inline constexpr std::uint16_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor<float> tensor;
};

inline std::vector<std::uint8_t> encode_checkpoint(const std::vector<NamedTensor>& tensors) {
  ByteWriter w;
  w.text(std::string_view(kCheckpointMagic, 4));
  w.u16(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& nt : tensors) {
    w.u32(static_cast<std::uint32_t>(nt.name.size()));
    w.text(nt.name);
    const auto dims = nt.tensor.shape().logical_dims();
    w.u8(static_cast<std::uint8_t>(dims.size()));
    for (int d : dims) w.u32(static_cast<std::uint32_t>(d));
    for (float v : nt.tensor.values()) w.f32(v);
  }
  return w.take();
}

inline std::vector<NamedTensor> decode_checkpoint(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (bytes.empty()) throw FormatError("empty checkpoint stream", 0);
  const std::size_t magic_at = r.offset();
  if (r.text(4, "magic") != std::string_view(kCheckpointMagic, 4))
    throw FormatError("bad checkpoint magic", magic_at);
  const std::size_t version_at = r.offset();
  const auto version = r.u16("version");
  if (version != kCheckpointVersion)
    throw FormatError("unsupported checkpoint version " + std::to_string(version), version_at);
  const auto count = r.u32("tensor count");
  std::vector<NamedTensor> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor nt;
    const auto name_len = r.u32("name length");
    nt.name = r.text(name_len, "name");
    const std::size_t rank_at = r.offset();
    const int rank = r.u8("rank");
    if (rank > 4) throw FormatError("tensor rank " + std::to_string(rank) + " exceeds 4", rank_at);
    std::array<int, 4> dims{1, 1, 1, 1};
    for (int k = 0; k < rank; ++k) dims[4 - rank + k] = static_cast<int>(r.u32("dimension"));
    Shape shape = Shape::with_rank(dims, rank);
    std::vector<float> values(shape.size());
    for (auto& v : values) v = r.f32("tensor values");
    nt.tensor = Tensor<float>(shape, std::move(values));
    out.push_back(std::move(nt));
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes after last tensor", r.offset());
  return out;
}

template <typename T>
std::vector<NamedTensor> export_parameters(const ParameterSet<T>& ps) {
  std::vector<NamedTensor> out;
  for (std::size_t i = 0; i < ps.size(); ++i)
    out.push_back({ps[i].name, ps[i].value.template cast<float>()});
  return out;
}

template <typename T>
void import_parameters(ParameterSet<T>& ps, const std::vector<NamedTensor>& tensors) {
  std::size_t matched = 0;
  for (const auto& nt : tensors) {
    if (!ps.contains(nt.name)) continue;
    auto& p = ps.get(nt.name);
    if (p.value.shape() != nt.tensor.shape())
      throw ShapeError("checkpoint tensor " + nt.name + " has shape " + nt.tensor.shape().str() +
                       ", model expects " + p.value.shape().str());
    p.value = nt.tensor.template cast<T>();
    ++matched;
  }
  if (matched != ps.size())
    throw ArgumentError("checkpoint provides " + std::to_string(matched) + " of " +
                        std::to_string(ps.size()) + " model parameters");
}

}  // namespace blindsweep::nn
