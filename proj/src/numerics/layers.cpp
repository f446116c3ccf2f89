#include "ldwm/numerics/layers.hpp"

#include <cmath>

#include "ldwm/numerics/ops.hpp"

namespace ldwm {

template <typename T>
void init_uniform(Tensor<T>& t, double fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(fan_in);
  for (auto& v : t.data()) v = static_cast<T>(rng.uniform(-bound, bound));
}

template <typename T>
Tensor<T> make_param(Shape shape) {
  Tensor<T> t(std::move(shape));
  t.set_requires_grad(true);
  return t;
}

template <typename T>
std::size_t count_scalars(const ParamList<T>& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.tensor.numel();
  return n;
}

template <typename T>
Conv2d<T>::Conv2d(std::size_t in_ch, std::size_t out_ch, std::size_t kernel, int stride_, int padding_,
                  bool with_bias, Rng& rng)
    : weight(make_param<T>({out_ch, in_ch, kernel, kernel})), stride(stride_), padding(padding_) {
  const double fan_in = static_cast<double>(in_ch * kernel * kernel);
  init_uniform(weight, fan_in, rng);
  if (with_bias) {
    bias = make_param<T>({out_ch});
    init_uniform(bias, fan_in, rng);
  }
}

template <typename T>
Tensor<T> Conv2d<T>::operator()(const Tensor<T>& x) const {
  return ops::conv2d(x, weight, bias, stride, padding);
}

template <typename T>
void Conv2d<T>::collect(const std::string& prefix, ParamList<T>& out) const {
  out.push_back({prefix + ".weight", weight});
  if (bias.defined()) out.push_back({prefix + ".bias", bias});
}

template <typename T>
ConvTranspose2d<T>::ConvTranspose2d(std::size_t in_ch, std::size_t out_ch, std::size_t kernel, int stride_,
                                    int padding_, bool with_bias, Rng& rng)
    : weight(make_param<T>({in_ch, out_ch, kernel, kernel})), stride(stride_), padding(padding_) {
  // Each output pixel receives about in*k*k/stride^2 contributions.
  const double fan_in = static_cast<double>(in_ch * kernel * kernel) / static_cast<double>(stride * stride);
  init_uniform(weight, fan_in, rng);
  if (with_bias) {
    bias = make_param<T>({out_ch});
    init_uniform(bias, fan_in, rng);
  }
}

template <typename T>
Tensor<T> ConvTranspose2d<T>::operator()(const Tensor<T>& x) const {
  return ops::conv_transpose2d(x, weight, bias, stride, padding);
}

template <typename T>
void ConvTranspose2d<T>::collect(const std::string& prefix, ParamList<T>& out) const {
  out.push_back({prefix + ".weight", weight});
  if (bias.defined()) out.push_back({prefix + ".bias", bias});
}

template <typename T>
Linear<T>::Linear(std::size_t in_features, std::size_t out_features, bool with_bias, Rng& rng)
    : weight(make_param<T>({out_features, in_features})) {
  init_uniform(weight, static_cast<double>(in_features), rng);
  if (with_bias) {
    bias = make_param<T>({out_features});
    init_uniform(bias, static_cast<double>(in_features), rng);
  }
}

template <typename T>
Tensor<T> Linear<T>::operator()(const Tensor<T>& x) const {
  return ops::linear(x, weight, bias);
}

template <typename T>
void Linear<T>::collect(const std::string& prefix, ParamList<T>& out) const {
  out.push_back({prefix + ".weight", weight});
  if (bias.defined()) out.push_back({prefix + ".bias", bias});
}

template <typename T>
BatchNorm2d<T>::BatchNorm2d(std::size_t channels, T momentum_, T eps_)
    : gamma(make_param<T>({channels})),
      beta(make_param<T>({channels})),
      running_mean(Shape{channels}, T(0)),
      running_var(Shape{channels}, T(1)),
      momentum(momentum_),
      eps(eps_) {
  for (auto& g : gamma.data()) g = T(1);
}

template <typename T>
Tensor<T> BatchNorm2d<T>::operator()(const Tensor<T>& x, bool training) {
  return ops::batch_norm(x, gamma, beta, running_mean, running_var, training, momentum, eps);
}

template <typename T>
void BatchNorm2d<T>::collect(const std::string& prefix, ParamList<T>& out) const {
  out.push_back({prefix + ".gamma", gamma});
  out.push_back({prefix + ".beta", beta});
}

template <typename T>
void BatchNorm2d<T>::collect_buffers(const std::string& prefix, ParamList<T>& out) const {
  out.push_back({prefix + ".running_mean", running_mean});
  out.push_back({prefix + ".running_var", running_var});
}

template <typename T>
LayerNorm<T>::LayerNorm(Shape shape, T eps_) : gain(make_param<T>(shape)), bias(make_param<T>(shape)), eps(eps_) {
  for (auto& g : gain.data()) g = T(1);
}

template <typename T>
Tensor<T> LayerNorm<T>::operator()(const Tensor<T>& x) const {
  return ops::layer_norm(x, gain, bias, eps);
}

template <typename T>
void LayerNorm<T>::collect(const std::string& prefix, ParamList<T>& out) const {
  out.push_back({prefix + ".gain", gain});
  out.push_back({prefix + ".bias", bias});
}

#define LDWM_INSTANTIATE_LAYERS(T)                                      \
  template void init_uniform<T>(Tensor<T>&, double, Rng&);              \
  template Tensor<T> make_param<T>(Shape);                              \
  template std::size_t count_scalars<T>(const ParamList<T>&);           \
  template class Conv2d<T>;                                             \
  template class ConvTranspose2d<T>;                                    \
  template class Linear<T>;                                             \
  template class BatchNorm2d<T>;                                        \
  template class LayerNorm<T>;

LDWM_INSTANTIATE_LAYERS(float)
LDWM_INSTANTIATE_LAYERS(double)

}  // namespace ldwm
