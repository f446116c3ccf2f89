#pragma once

#include <cstddef>

#include "ldwm/codec/codebook.hpp"
#include "ldwm/codec/config.hpp"
#include "ldwm/codec/decoder.hpp"
#include "ldwm/codec/encoder.hpp"
#include "ldwm/numerics/adam.hpp"

namespace ldwm {

struct CodecLosses {
  double recon_nll = 0;
  double codebook_loss = 0;
  double commitment_loss = 0;
  double total = 0;  // recon_nll + codebook_loss + beta * commitment_loss
};

/// Encoder, codebook and decoder of the vector-quantized autoencoder.
template <typename T>
class Codec {
 public:
  Codec() = default;
  Codec(const CodecConfig& cfg, Rng& rng);

  const CodecConfig& config() const { return cfg_; }

  Encoder<T> encoder;
  Codebook<T> codebook;
  Decoder<T> decoder;

  /// Every trainable tensor (encoder, codebook, decoder) with stable names.
  ParamList<T> parameters() const;
  ParamList<T> buffers() const;

 private:
  CodecConfig cfg_;
};

/// Builds the loss graph on `batch` without stepping; `losses` receives the values.
template <typename T>
Tensor<T> vqvae_loss(Codec<T>& codec, const Tensor<T>& batch, CodecLosses& losses);

/// One optimizer step on the VQ-VAE objective. Returns the losses before the step.
template <typename T>
CodecLosses vqvae_train_step(Codec<T>& codec, const Tensor<T>& batch, Adam<T>& opt);

enum class CodecPart { Encoder, Decoder, Codebook, VqVae };

/// Trainable scalar count. Encoder and Decoder each include the codebook;
/// VqVae counts it once.
template <typename T>
std::size_t count_params(const Codec<T>& codec, CodecPart part);

}  // namespace ldwm
