#pragma once

#include <span>
#include <vector>

#include "ldwm/numerics/tensor.hpp"

// Differentiable operator catalog. Image tensors are NCHW; "axis 1" is the
// channel/class axis for softmax-family operators.
namespace ldwm::ops {

template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> add_scalar(const Tensor<T>& a, T s);
template <typename T> Tensor<T> mul_scalar(const Tensor<T>& a, T s);
template <typename T> Tensor<T> exp(const Tensor<T>& a);
template <typename T> Tensor<T> log(const Tensor<T>& a);
/// Gradient passes where lo <= x <= hi.
template <typename T> Tensor<T> clamp(const Tensor<T>& a, T lo, T hi);
/// Element-wise min; ties route the gradient to `a`.
template <typename T> Tensor<T> minimum(const Tensor<T>& a, const Tensor<T>& b);

template <typename T> Tensor<T> leaky_relu(const Tensor<T>& x, T slope);
template <typename T> Tensor<T> sigmoid(const Tensor<T>& x);
template <typename T> Tensor<T> tanh(const Tensor<T>& x);

template <typename T> Tensor<T> softmax(const Tensor<T>& x);
template <typename T> Tensor<T> log_softmax(const Tensor<T>& x);
/// Mean of -log softmax(logits)[target] over every (sample, position).
/// Targets are laid out like logits with the class axis removed.
template <typename T> Tensor<T> softmax_cross_entropy(const Tensor<T>& logits, std::span<const int> targets);
/// out[n] = x[n, index[n]] for x of shape [N, C].
template <typename T> Tensor<T> pick(const Tensor<T>& x, std::span<const int> index);

template <typename T> Tensor<T> sum(const Tensor<T>& x);
template <typename T> Tensor<T> mean(const Tensor<T>& x);

template <typename T> Tensor<T> reshape(const Tensor<T>& x, Shape shape);
template <typename T> Tensor<T> concat_channels(const std::vector<Tensor<T>>& parts);
template <typename T> Tensor<T> slice_channels(const Tensor<T>& x, std::size_t begin, std::size_t count);
/// [N, A] -> [N, A, H, W], each vector entry repeated over the plane.
template <typename T> Tensor<T> broadcast_spatial(const Tensor<T>& v, std::size_t height, std::size_t width);

/// x [N, Cin, H, W], weight [Cout, Cin, kh, kw], optional bias [Cout].
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, int stride, int padding);
/// x [N, Cin, H, W], weight [Cin, Cout, kh, kw]; output (H-1)*stride - 2*padding + kh.
template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, int stride,
                           int padding);
/// x [N, in], weight [out, in], optional bias [out].
template <typename T> Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

/// Per-channel normalization of [N, C] or [N, C, H, W]. In training mode the
/// batch statistics are used and the running buffers are updated as
/// running = momentum * running + (1 - momentum) * batch.
template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, Tensor<T>& running_mean,
                     Tensor<T>& running_var, bool training, T momentum, T eps);
/// Per-sample normalization over all non-batch axes; gain and bias have shape x.shape[1:].
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias, T eps);

/// table [K, E] gathered by an index grid [N, H, W] -> [N, E, H, W].
template <typename T>
Tensor<T> embedding(const Tensor<T>& table, std::span<const int> indices, std::size_t n, std::size_t height,
                    std::size_t width);

/// Forward value of `quantized`, gradient routed unchanged to `features`.
template <typename T> Tensor<T> straight_through(const Tensor<T>& features, const Tensor<T>& quantized);

}  // namespace ldwm::ops
