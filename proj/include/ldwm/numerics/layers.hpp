#pragma once

#include <string>
#include <vector>

#include "ldwm/core/rng.hpp"
#include "ldwm/numerics/tensor.hpp"

namespace ldwm {

template <typename T>
struct NamedTensor {
  std::string name;
  Tensor<T> tensor;
};

template <typename T>
using ParamList = std::vector<NamedTensor<T>>;

/// Fills `t` with U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
template <typename T>
void init_uniform(Tensor<T>& t, double fan_in, Rng& rng);

template <typename T>
Tensor<T> make_param(Shape shape);

template <typename T>
std::size_t count_scalars(const ParamList<T>& params);

template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(std::size_t in_ch, std::size_t out_ch, std::size_t kernel, int stride, int padding, bool with_bias,
         Rng& rng);

  Tensor<T> operator()(const Tensor<T>& x) const;
  void collect(const std::string& prefix, ParamList<T>& out) const;

  Tensor<T> weight;  // [out, in, k, k]
  Tensor<T> bias;    // [out] or undefined
  int stride = 1;
  int padding = 0;
};

template <typename T>
class ConvTranspose2d {
 public:
  ConvTranspose2d() = default;
  ConvTranspose2d(std::size_t in_ch, std::size_t out_ch, std::size_t kernel, int stride, int padding,
                  bool with_bias, Rng& rng);

  Tensor<T> operator()(const Tensor<T>& x) const;
  void collect(const std::string& prefix, ParamList<T>& out) const;

  Tensor<T> weight;  // [in, out, k, k]
  Tensor<T> bias;
  int stride = 1;
  int padding = 0;
};

template <typename T>
class Linear {
 public:
  Linear() = default;
  Linear(std::size_t in_features, std::size_t out_features, bool with_bias, Rng& rng);

  Tensor<T> operator()(const Tensor<T>& x) const;
  void collect(const std::string& prefix, ParamList<T>& out) const;

  Tensor<T> weight;  // [out, in]
  Tensor<T> bias;
};

template <typename T>
class BatchNorm2d {
 public:
  BatchNorm2d() = default;
  explicit BatchNorm2d(std::size_t channels, T momentum = T(0.9), T eps = T(1e-5));

  /// Batch statistics (and running-buffer updates) when `training`, running statistics otherwise.
  Tensor<T> operator()(const Tensor<T>& x, bool training);
  void collect(const std::string& prefix, ParamList<T>& out) const;
  void collect_buffers(const std::string& prefix, ParamList<T>& out) const;

  Tensor<T> gamma, beta;
  Tensor<T> running_mean, running_var;
  T momentum = T(0.9);
  T eps = T(1e-5);
};

template <typename T>
class LayerNorm {
 public:
  LayerNorm() = default;
  /// Normalizes over `shape` (all non-batch axes) with element-wise gain and bias.
  explicit LayerNorm(Shape shape, T eps = T(1e-5));

  Tensor<T> operator()(const Tensor<T>& x) const;
  void collect(const std::string& prefix, ParamList<T>& out) const;

  Tensor<T> gain, bias;
  T eps = T(1e-5);
};

}  // namespace ldwm
