#pragma once

// "MSNL" latent dataset: magic, u32 version=1, u32 count, u32 T, u32 D, then
// count*T*D f32 values, then count u16 class labels.  Little-endian.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "msn/io/binary.hpp"

namespace msn {

struct AudioLatent {
  std::size_t steps = 0;
  std::size_t dim = 0;
  std::vector<float> values;  // steps x dim, row-major
  std::uint64_t sample_id = 0;
  std::optional<std::uint16_t> label;
};

struct LatentDataset {
  std::size_t steps = 0;
  std::size_t dim = 0;
  std::vector<float> values;
  std::vector<std::uint16_t> labels;

  std::size_t size() const { return labels.size(); }
  std::size_t frame_size() const { return steps * dim; }
  std::span<const float> sample(std::size_t i) const {
    return std::span<const float>(values).subspan(i * frame_size(), frame_size());
  }
  AudioLatent latent(std::size_t i) const {
    auto s = sample(i);
    return {steps, dim, std::vector<float>(s.begin(), s.end()), i, labels.at(i)};
  }
  void append(std::span<const float> sample_values, std::uint16_t label) {
    if (sample_values.size() != frame_size()) throw ShapeError("latent sample size does not match dataset T x D");
    values.insert(values.end(), sample_values.begin(), sample_values.end());
    labels.push_back(label);
  }
  LatentDataset subset(std::span<const std::size_t> indices) const {
    LatentDataset out{steps, dim, {}, {}};
    for (auto i : indices) out.append(sample(i), labels.at(i));
    return out;
  }
};

namespace io {

inline constexpr std::uint32_t kLatentVersion = 1;

inline std::vector<std::uint8_t> encode_latents(const LatentDataset& ds) {
  ByteWriter w;
  w.raw("MSNL", 4);
  w.u32(kLatentVersion);
  w.u32(static_cast<std::uint32_t>(ds.size()));
  w.u32(static_cast<std::uint32_t>(ds.steps));
  w.u32(static_cast<std::uint32_t>(ds.dim));
  for (float v : ds.values) w.f32(v);
  for (auto l : ds.labels) w.u16(l);
  return w.bytes();
}

inline LatentDataset decode_latents(const std::vector<std::uint8_t>& bytes, const std::string& what = "latent file") {
  ByteReader r(bytes.data(), bytes.size(), what);
  if (r.str(4) != "MSNL") throw FormatError(what + ": bad magic (expected MSNL)");
  const auto version = r.u32();
  if (version != kLatentVersion) {
    throw UnsupportedVersion(what + ": unsupported version " + std::to_string(version));
  }
  LatentDataset ds;
  const std::size_t count = r.u32();
  ds.steps = r.u32();
  ds.dim = r.u32();
  const std::size_t expected = count * ds.steps * ds.dim * 4 + count * 2;
  if (r.remaining() != expected) {
    throw CorruptionError(what + ": payload is " + std::to_string(r.remaining()) + " bytes, expected " +
                          std::to_string(expected));
  }
  ds.values.resize(count * ds.steps * ds.dim);
  r.f32s(ds.values.data(), ds.values.size());
  ds.labels.resize(count);
  for (auto& l : ds.labels) l = r.u16();
  return ds;
}

inline void save_latents(const LatentDataset& ds, const std::string& path) { write_file(path, encode_latents(ds)); }

inline LatentDataset load_latents(const std::string& path) { return decode_latents(read_file(path), path); }

}  // namespace io
}  // namespace msn
