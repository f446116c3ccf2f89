#include "ldwm/codec/codec.hpp"

#include "ldwm/codec/likelihood.hpp"
#include "ldwm/numerics/ops.hpp"

namespace ldwm {

template <typename T>
Codec<T>::Codec(const CodecConfig& cfg, Rng& rng)
    : encoder(cfg, rng), codebook(cfg.codebook_size, cfg.embed_dim, rng), decoder(cfg, rng), cfg_(cfg) {}

template <typename T>
ParamList<T> Codec<T>::parameters() const {
  ParamList<T> out;
  encoder.collect(out);
  codebook.collect("codebook", out);
  decoder.collect(out);
  return out;
}

template <typename T>
ParamList<T> Codec<T>::buffers() const {
  ParamList<T> out;
  encoder.collect_buffers(out);
  return out;
}

template <typename T>
Tensor<T> vqvae_loss(Codec<T>& codec, const Tensor<T>& batch, CodecLosses& losses) {
  if (!batch.defined() || batch.dim() == 0 || batch.size(0) == 0) throw ShapeError("vqvae: empty batch");
  Tensor<T> features = codec.encoder(batch, true);
  Quantized<T> q = quantize(features, codec.codebook);
  Tensor<T> logits = codec.decoder(q.quantized);
  Tensor<T> nll = ops::mul_scalar(cb_log_likelihood(logits, batch), T(-1));
  const T beta = static_cast<T>(codec.config().beta);
  Tensor<T> total = ops::add(ops::add(nll, q.codebook_loss), ops::mul_scalar(q.commitment_loss, beta));
  losses.recon_nll = nll.item();
  losses.codebook_loss = q.codebook_loss.item();
  losses.commitment_loss = q.commitment_loss.item();
  losses.total = total.item();
  return total;
}

template <typename T>
CodecLosses vqvae_train_step(Codec<T>& codec, const Tensor<T>& batch, Adam<T>& opt) {
  CodecLosses losses;
  Tensor<T> total = vqvae_loss(codec, batch, losses);
  opt.zero_grad();
  total.backward();
  opt.step();
  return losses;
}

template <typename T>
std::size_t count_params(const Codec<T>& codec, CodecPart part) {
  ParamList<T> enc, dec;
  codec.encoder.collect(enc);
  codec.decoder.collect(dec);
  const std::size_t cb = codec.codebook.embeddings.numel();
  switch (part) {
    case CodecPart::Encoder: return count_scalars(enc) + cb;
    case CodecPart::Decoder: return count_scalars(dec) + cb;
    case CodecPart::Codebook: return cb;
    case CodecPart::VqVae: return count_scalars(enc) + count_scalars(dec) + cb;
  }
  return 0;
}

#define LDWM_INSTANTIATE_CODEC(T)                                                          \
  template class Codec<T>;                                                                 \
  template Tensor<T> vqvae_loss<T>(Codec<T>&, const Tensor<T>&, CodecLosses&);             \
  template CodecLosses vqvae_train_step<T>(Codec<T>&, const Tensor<T>&, Adam<T>&);         \
  template std::size_t count_params<T>(const Codec<T>&, CodecPart);

LDWM_INSTANTIATE_CODEC(float)
LDWM_INSTANTIATE_CODEC(double)

}  // namespace ldwm
