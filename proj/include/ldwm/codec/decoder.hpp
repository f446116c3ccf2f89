#pragma once

#include <vector>

#include "ldwm/codec/config.hpp"
#include "ldwm/numerics/layers.hpp"

namespace ldwm {

/// 1x1 conv to the widest channel count, then stride-2 transposed convs back
/// to the observation resolution. No normalization layers.
template <typename T>
class Decoder {
 public:
  Decoder() = default;
  Decoder(const CodecConfig& cfg, Rng& rng);

  /// quantized [N, E, h, w] -> per-pixel logits [N, S, H, W].
  Tensor<T> operator()(const Tensor<T>& quantized) const;

  void collect(ParamList<T>& out) const;

 private:
  CodecConfig cfg_;
  Conv2d<T> proj_;
  std::vector<ConvTranspose2d<T>> ups_;
};

}  // namespace ldwm
