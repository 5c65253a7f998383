#pragma once

// "MSNC" checkpoint: magic, u32 version, then one record per tensor
// (u16 name length, UTF-8 name, u8 ndim, u32 dims, f32 payload) and a trailing
// u32 CRC-32 of every preceding byte.  Little-endian.

#include <zlib.h>

#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include "msn/io/binary.hpp"
#include "msn/nn/layers.hpp"

namespace msn::io {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct StoredTensor {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

inline std::uint32_t crc32_of(const std::uint8_t* data, std::size_t n) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  while (n > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    crc = ::crc32(crc, data, chunk);
    data += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

inline std::vector<std::uint8_t> encode_checkpoint(const std::vector<StoredTensor>& tensors) {
  ByteWriter w;
  w.raw("MSNC", 4);
  w.u32(kCheckpointVersion);
  for (const auto& t : tensors) {
    if (t.name.size() > 0xffff) throw InvalidArgument("checkpoint: tensor name too long");
    if (t.shape.size() > 0xff) throw InvalidArgument("checkpoint: too many dims for " + t.name);
    w.u16(static_cast<std::uint16_t>(t.name.size()));
    w.raw(t.name.data(), t.name.size());
    w.u8(static_cast<std::uint8_t>(t.shape.size()));
    for (auto d : t.shape) w.u32(static_cast<std::uint32_t>(d));
    for (float v : t.values) w.f32(v);
  }
  const auto crc = crc32_of(w.bytes().data(), w.bytes().size());
  w.u32(crc);
  return w.bytes();
}

inline std::vector<StoredTensor> decode_checkpoint(const std::vector<std::uint8_t>& bytes,
                                                   const std::string& what = "checkpoint") {
  if (bytes.size() < 12) throw CorruptionError(what + ": file too short (" + std::to_string(bytes.size()) + " bytes)");
  ByteReader head(bytes.data(), bytes.size(), what);
  if (head.str(4) != "MSNC") throw FormatError(what + ": bad magic (expected MSNC)");
  const auto version = head.u32();
  if (version != kCheckpointVersion) {
    throw UnsupportedVersion(what + ": unsupported checkpoint version " + std::to_string(version));
  }
  const std::size_t body = bytes.size() - 4;
  ByteReader tail(bytes.data() + body, 4, what);
  const auto stored = tail.u32();
  if (stored != crc32_of(bytes.data(), body)) throw CorruptionError(what + ": CRC mismatch");

  ByteReader r(bytes.data(), body, what);
  r.str(8);
  std::vector<StoredTensor> out;
  while (r.remaining() > 0) {
    StoredTensor t;
    const auto len = r.u16();
    t.name = r.str(len);
    const auto ndim = r.u8();
    for (std::uint8_t i = 0; i < ndim; ++i) t.shape.push_back(r.u32());
    t.values.resize(shape_numel(t.shape));
    r.f32s(t.values.data(), t.values.size());
    out.push_back(std::move(t));
  }
  return out;
}

template <class T>
std::vector<StoredTensor> snapshot(const ParameterRefs<T>& params) {
  std::vector<StoredTensor> out;
  out.reserve(params.size());
  for (const auto& p : params) {
    const auto& v = p.param->value;
    if (v.is_meta()) throw InvalidArgument("checkpoint: parameter '" + p.name + "' is not materialized");
    out.push_back({p.name, v.shape(), std::vector<float>(v.data().begin(), v.data().end())});
  }
  return out;
}

// Writes every tensor into the matching parameter, or nothing at all if any
// name is unknown, missing or mis-shaped.
template <class T>
void restore(const ParameterRefs<T>& params, const std::vector<StoredTensor>& tensors, const std::string& what) {
  std::map<std::string, const StoredTensor*> by_name;
  for (const auto& t : tensors) by_name[t.name] = &t;
  std::vector<std::string> unknown;
  for (const auto& t : tensors) {
    if (std::none_of(params.begin(), params.end(), [&](const auto& p) { return p.name == t.name; })) {
      unknown.push_back(t.name);
    }
  }
  if (!unknown.empty()) {
    std::string msg = what + ": unknown tensor names:";
    for (const auto& n : unknown) msg += " " + n;
    throw FormatError(msg);
  }
  for (const auto& p : params) {
    auto it = by_name.find(p.name);
    if (it == by_name.end()) throw FormatError(what + ": missing tensor '" + p.name + "'");
    if (it->second->shape != p.param->value.shape()) {
      throw FormatError(what + ": tensor '" + p.name + "' has shape " + shape_str(it->second->shape) +
                        ", model expects " + shape_str(p.param->value.shape()));
    }
  }
  for (const auto& p : params) {
    const auto& src = by_name[p.name]->values;
    auto dst = p.param->value.mutable_data();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = static_cast<T>(src[i]);
  }
}

template <class T>
void save_checkpoint(const ParameterRefs<T>& params, const std::string& path) {
  write_file(path, encode_checkpoint(snapshot(params)));
}

template <class T>
void load_checkpoint(const ParameterRefs<T>& params, const std::string& path) {
  restore(params, decode_checkpoint(read_file(path), path), path);
}

inline std::vector<std::string> checkpoint_names(const std::string& path) {
  std::vector<std::string> names;
  for (auto& t : decode_checkpoint(read_file(path), path)) names.push_back(t.name);
  return names;
}

}  // namespace msn::io
