#include "ldwm/codec/decoder.hpp"

#include <string>

#include "ldwm/numerics/ops.hpp"

namespace ldwm {

template <typename T>
Decoder<T>::Decoder(const CodecConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg.validate();
  const auto& ch = cfg.channels;
  proj_ = Conv2d<T>(cfg.embed_dim, ch.back(), 1, 1, 0, true, rng);
  for (std::size_t i = ch.size(); i-- > 0;) {
    const std::size_t out = i == 0 ? cfg.stack : ch[i - 1];
    ups_.emplace_back(ch[i], out, 4, 2, 1, true, rng);
  }
}

template <typename T>
Tensor<T> Decoder<T>::operator()(const Tensor<T>& quantized) const {
  if (!quantized.defined() || quantized.dim() != 4 || quantized.size(1) != cfg_.embed_dim ||
      quantized.size(2) != cfg_.grid_height() || quantized.size(3) != cfg_.grid_width()) {
    throw ShapeError("decoder: expected [N, " + std::to_string(cfg_.embed_dim) + ", " +
                     std::to_string(cfg_.grid_height()) + ", " + std::to_string(cfg_.grid_width()) + "], got " +
                     (quantized.defined() ? shape_str(quantized.shape()) : std::string("<undefined>")));
  }
  const T slope = static_cast<T>(cfg_.leaky_slope);
  Tensor<T> h = ops::leaky_relu(proj_(quantized), slope);
  for (std::size_t i = 0; i < ups_.size(); ++i) {
    h = ups_[i](h);
    if (i + 1 < ups_.size()) h = ops::leaky_relu(h, slope);
  }
  return h;
}

template <typename T>
void Decoder<T>::collect(ParamList<T>& out) const {
  proj_.collect("decoder.proj", out);
  for (std::size_t i = 0; i < ups_.size(); ++i) ups_[i].collect("decoder.up" + std::to_string(i), out);
}

template class Decoder<float>;
template class Decoder<double>;

}  // namespace ldwm
