#pragma once

#include <vector>

#include "ldwm/codec/codebook.hpp"
#include "ldwm/codec/config.hpp"

namespace ldwm {

/// Stride-2 conv + batch-norm + leaky ReLU blocks followed by a 1x1
/// projection to the embedding width. Takes observations only.
template <typename T>
class Encoder {
 public:
  Encoder() = default;
  Encoder(const CodecConfig& cfg, Rng& rng);

  /// obs [N, S, H, W] -> features [N, E, h, w].
  Tensor<T> operator()(const Tensor<T>& obs, bool training);

  void collect(ParamList<T>& out) const;
  void collect_buffers(ParamList<T>& out) const;
  const CodecConfig& config() const { return cfg_; }

 private:
  CodecConfig cfg_;
  std::vector<Conv2d<T>> convs_;
  std::vector<BatchNorm2d<T>> norms_;
  Conv2d<T> proj_;
};

/// Deterministic latent grids for a batch of observations (eval-mode statistics).
template <typename T>
LatentBatch encode_latents(Encoder<T>& encoder, const Codebook<T>& codebook, const Tensor<T>& obs);

}  // namespace ldwm
