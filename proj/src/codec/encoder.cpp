#include "ldwm/codec/encoder.hpp"

#include <stdexcept>
#include <string>

#include "ldwm/numerics/ops.hpp"

namespace ldwm {

void CodecConfig::validate() const {
  if (stack == 0) throw std::invalid_argument("codec: stack must be positive");
  if (channels.empty()) throw std::invalid_argument("codec: need at least one encoder block");
  const std::size_t factor = std::size_t{1} << channels.size();
  if (height % factor != 0 || width % factor != 0 || height < factor || width < factor) {
    throw std::invalid_argument("codec: observation " + std::to_string(height) + "x" + std::to_string(width) +
                                " is not divisible by 2^" + std::to_string(channels.size()));
  }
  if (embed_dim == 0) throw std::invalid_argument("codec: embedding width must be positive");
  if (codebook_size < 2) throw std::invalid_argument("codec: codebook needs at least 2 entries");
  if (!(beta >= 0)) throw std::invalid_argument("codec: beta must be non-negative");
}

template <typename T>
Encoder<T>::Encoder(const CodecConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg.validate();
  std::size_t in = cfg.stack;
  for (std::size_t c : cfg.channels) {
    convs_.emplace_back(in, c, 4, 2, 1, false, rng);
    norms_.emplace_back(c);
    in = c;
  }
  proj_ = Conv2d<T>(in, cfg.embed_dim, 1, 1, 0, true, rng);
}

template <typename T>
Tensor<T> Encoder<T>::operator()(const Tensor<T>& obs, bool training) {
  if (!obs.defined() || obs.dim() != 4 || obs.size(1) != cfg_.stack || obs.size(2) != cfg_.height ||
      obs.size(3) != cfg_.width) {
    throw ShapeError("encoder: expected [N, " + std::to_string(cfg_.stack) + ", " + std::to_string(cfg_.height) +
                     ", " + std::to_string(cfg_.width) + "], got " +
                     (obs.defined() ? shape_str(obs.shape()) : std::string("<undefined>")));
  }
  Tensor<T> h = obs;
  const T slope = static_cast<T>(cfg_.leaky_slope);
  for (std::size_t i = 0; i < convs_.size(); ++i) h = ops::leaky_relu(norms_[i](convs_[i](h), training), slope);
  return proj_(h);
}

template <typename T>
void Encoder<T>::collect(ParamList<T>& out) const {
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    convs_[i].collect("encoder.block" + std::to_string(i) + ".conv", out);
    norms_[i].collect("encoder.block" + std::to_string(i) + ".bn", out);
  }
  proj_.collect("encoder.proj", out);
}

template <typename T>
void Encoder<T>::collect_buffers(ParamList<T>& out) const {
  for (std::size_t i = 0; i < norms_.size(); ++i) norms_[i].collect_buffers("encoder.block" + std::to_string(i) + ".bn", out);
}

template <typename T>
LatentBatch encode_latents(Encoder<T>& encoder, const Codebook<T>& codebook, const Tensor<T>& obs) {
  NoGradGuard guard;
  return nearest_indices(encoder(obs, false), codebook);
}

template class Encoder<float>;
template class Encoder<double>;
template LatentBatch encode_latents<float>(Encoder<float>&, const Codebook<float>&, const Tensor<float>&);
template LatentBatch encode_latents<double>(Encoder<double>&, const Codebook<double>&, const Tensor<double>&);

}  // namespace ldwm
