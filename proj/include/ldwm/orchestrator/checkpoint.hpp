#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "ldwm/io/bytes.hpp"
#include "ldwm/numerics/adam.hpp"

// File layout (little-endian):
//   "LDWM" | u32 version | u32 segment count |
//   per segment: u64 name length | name | u64 payload length | payload | u32 crc32(payload)

namespace ldwm {

inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class CheckpointFormatError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class CheckpointVersionError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class CheckpointTruncatedError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class CheckpointChecksumError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

/// Named binary segments, kept in name order so serialization is canonical.
class Checkpoint {
 public:
  void put(const std::string& name, std::vector<std::uint8_t> payload) { segments_[name] = std::move(payload); }
  bool has(const std::string& name) const { return segments_.count(name) != 0; }
  /// Throws CheckpointFormatError when the segment is missing.
  const std::vector<std::uint8_t>& get(const std::string& name) const;
  std::vector<std::string> names() const;

  std::vector<std::uint8_t> serialize() const;
  /// Parses a whole file image; either returns a complete checkpoint or throws.
  static Checkpoint parse(const std::vector<std::uint8_t>& bytes);

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);

 private:
  std::map<std::string, std::vector<std::uint8_t>> segments_;
};

/// Parameter tensors by name, shapes checked on restore.
template <typename T>
std::vector<std::uint8_t> pack_tensors(const ParamList<T>& params);
template <typename T>
void unpack_tensors(const std::vector<std::uint8_t>& bytes, const ParamList<T>& params);

template <typename T>
std::vector<std::uint8_t> pack_adam(const Adam<T>& opt);
template <typename T>
void unpack_adam(const std::vector<std::uint8_t>& bytes, Adam<T>& opt);

std::vector<std::uint8_t> zlib_compress(const std::vector<std::uint8_t>& raw);
std::vector<std::uint8_t> zlib_decompress(const std::vector<std::uint8_t>& packed);

}  // namespace ldwm
