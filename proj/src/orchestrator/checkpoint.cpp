#include "ldwm/orchestrator/checkpoint.hpp"

#include <zlib.h>

#include <fstream>
#include <iterator>

namespace ldwm {

const std::vector<std::uint8_t>& Checkpoint::get(const std::string& name) const {
  auto it = segments_.find(name);
  if (it == segments_.end()) throw CheckpointFormatError("checkpoint: missing segment '" + name + "'");
  return it->second;
}

std::vector<std::string> Checkpoint::names() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : segments_) out.push_back(k);
  return out;
}

std::vector<std::uint8_t> Checkpoint::serialize() const {
  ByteWriter w;
  w.raw("LDWM", 4);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(segments_.size()));
  for (const auto& [name, payload] : segments_) {
    w.str(name);
    w.u64(payload.size());
    w.raw(payload.data(), payload.size());
    w.u32(static_cast<std::uint32_t>(crc32(0L, payload.data(), static_cast<uInt>(payload.size()))));
  }
  return w.take();
}

Checkpoint Checkpoint::parse(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 || std::string(bytes.begin(), bytes.begin() + 4) != "LDWM") {
    throw CheckpointFormatError("checkpoint: bad magic (not an LDWM checkpoint)");
  }
  ByteReader r(bytes.data() + 4, bytes.size() - 4);
  Checkpoint c;
  try {
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion) {
      throw CheckpointVersionError("checkpoint: format version " + std::to_string(version) + ", expected " +
                                   std::to_string(kCheckpointVersion));
    }
    const std::uint32_t count = r.u32();
    for (std::uint32_t i = 0; i < count; ++i) {
      std::string name = r.str();
      const std::uint64_t len = r.u64();
      if (len > r.remaining()) throw TruncatedError("segment payload");
      const std::uint8_t* p = r.raw(len);
      std::vector<std::uint8_t> payload(p, p + len);
      const std::uint32_t crc = r.u32();
      if (crc != static_cast<std::uint32_t>(crc32(0L, payload.data(), static_cast<uInt>(payload.size())))) {
        throw CheckpointChecksumError("checkpoint: checksum mismatch in segment '" + name + "'");
      }
      c.segments_[name] = std::move(payload);
    }
    if (!r.done()) throw CheckpointFormatError("checkpoint: trailing bytes after the last segment");
  } catch (const TruncatedError&) {
    throw CheckpointTruncatedError("checkpoint: file is truncated");
  }
  return c;
}

void Checkpoint::save(const std::string& path) const {
  const auto bytes = serialize();
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw CheckpointError("checkpoint: cannot write " + tmp);
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw CheckpointError("checkpoint: write failed for " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw CheckpointError("checkpoint: cannot move into " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("checkpoint: cannot read " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return parse(bytes);
}

template <typename T>
std::vector<std::uint8_t> pack_tensors(const ParamList<T>& params) {
  ByteWriter w;
  w.u64(params.size());
  for (const auto& p : params) {
    w.str(p.name);
    w.u64(p.tensor.dim());
    for (std::size_t d : p.tensor.shape()) w.u64(d);
    w.u64(p.tensor.numel());
    for (T v : p.tensor.data()) {
      if constexpr (sizeof(T) == 4) w.f32(v); else w.f64(v);
    }
  }
  return w.take();
}

template <typename T>
void unpack_tensors(const std::vector<std::uint8_t>& bytes, const ParamList<T>& params) {
  ByteReader r(bytes);
  // Decode everything first so a mismatch leaves the parameters untouched.
  std::vector<std::vector<T>> values;
  try {
    if (r.u64() != params.size()) throw CheckpointFormatError("checkpoint: tensor count mismatch");
    for (const auto& p : params) {
      if (r.str() != p.name) throw CheckpointFormatError("checkpoint: expected tensor '" + p.name + "'");
      Shape s(r.u64());
      for (auto& d : s) d = r.u64();
      if (s != p.tensor.shape()) {
        throw CheckpointFormatError("checkpoint: shape mismatch for '" + p.name + "': stored " + shape_str(s) +
                                    ", model " + shape_str(p.tensor.shape()));
      }
      std::vector<T> v(r.u64());
      if (v.size() != p.tensor.numel()) throw CheckpointFormatError("checkpoint: size mismatch for " + p.name);
      for (auto& x : v) {
        if constexpr (sizeof(T) == 4) x = r.f32(); else x = r.f64();
      }
      values.push_back(std::move(v));
    }
  } catch (const TruncatedError&) {
    throw CheckpointTruncatedError("checkpoint: tensor segment truncated");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor<T> t = params[i].tensor;
    auto d = t.data();
    std::copy(values[i].begin(), values[i].end(), d.begin());
  }
}

template <typename T>
std::vector<std::uint8_t> pack_adam(const Adam<T>& opt) {
  ByteWriter w;
  w.f64(opt.lr());
  w.u64(opt.step_count());
  auto m = opt.export_moments();
  w.u64(m.size());
  for (T v : m) {
    if constexpr (sizeof(T) == 4) w.f32(v); else w.f64(v);
  }
  return w.take();
}

template <typename T>
void unpack_adam(const std::vector<std::uint8_t>& bytes, Adam<T>& opt) {
  ByteReader r(bytes);
  try {
    const double lr = r.f64();
    const std::uint64_t steps = r.u64();
    std::vector<T> m(r.u64());
    for (auto& x : m) {
      if constexpr (sizeof(T) == 4) x = r.f32(); else x = r.f64();
    }
    opt.import_moments(steps, m);
    opt.set_lr(lr);
  } catch (const TruncatedError&) {
    throw CheckpointTruncatedError("checkpoint: optimizer segment truncated");
  }
}

std::vector<std::uint8_t> zlib_compress(const std::vector<std::uint8_t>& raw) {
  uLongf len = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> out(8 + len);
  for (int i = 0; i < 8; ++i) out[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(std::uint64_t(raw.size()) >> (8 * i));
  if (compress2(out.data() + 8, &len, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK) {
    throw CheckpointError("zlib: compression failed");
  }
  out.resize(8 + len);
  return out;
}

std::vector<std::uint8_t> zlib_decompress(const std::vector<std::uint8_t>& packed) {
  if (packed.size() < 8) throw CheckpointTruncatedError("zlib: missing length header");
  std::uint64_t n = 0;
  for (int i = 0; i < 8; ++i) n |= std::uint64_t(packed[static_cast<std::size_t>(i)]) << (8 * i);
  std::vector<std::uint8_t> out(n);
  uLongf len = static_cast<uLongf>(n);
  if (uncompress(out.data(), &len, packed.data() + 8, static_cast<uLong>(packed.size() - 8)) != Z_OK || len != n) {
    throw CheckpointFormatError("zlib: corrupt compressed segment");
  }
  return out;
}

template std::vector<std::uint8_t> pack_tensors<float>(const ParamList<float>&);
template std::vector<std::uint8_t> pack_tensors<double>(const ParamList<double>&);
template void unpack_tensors<float>(const std::vector<std::uint8_t>&, const ParamList<float>&);
template void unpack_tensors<double>(const std::vector<std::uint8_t>&, const ParamList<double>&);
template std::vector<std::uint8_t> pack_adam<float>(const Adam<float>&);
template std::vector<std::uint8_t> pack_adam<double>(const Adam<double>&);
template void unpack_adam<float>(const std::vector<std::uint8_t>&, Adam<float>&);
template void unpack_adam<double>(const std::vector<std::uint8_t>&, Adam<double>&);

}  // namespace ldwm
