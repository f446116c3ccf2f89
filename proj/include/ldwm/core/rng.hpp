#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>

namespace ldwm {

/// Seeded 64-bit Mersenne Twister with platform-independent conversions.
/// The std distributions are implementation-defined, so uniform and
/// categorical draws are computed here directly from engine output.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Unbiased uniform integer in [0, n).
  std::size_t uniform_index(std::size_t n);
  /// Inverse-CDF draw from unnormalized non-negative weights.
  std::size_t categorical(std::span<const double> weights);
  /// Draw from softmax(logits), computed in 64-bit with max subtraction.
  template <typename T>
  std::size_t categorical_logits(std::span<const T> logits);

  /// Fresh generator seeded from this stream (one next_u64 draw).
  Rng split() { return Rng(next_u64()); }

  std::string state() const;
  void set_state(const std::string& text);

 private:
  std::mt19937_64 engine_;
};

/// SplitMix64 finalizer; derives decorrelated seeds from (seed, stream).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace ldwm
