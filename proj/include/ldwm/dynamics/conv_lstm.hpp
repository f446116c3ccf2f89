#pragma once

#include <utility>

#include "ldwm/numerics/layers.hpp"

namespace ldwm {

template <typename T>
struct LstmState {
  Tensor<T> hidden;  // [N, C, h, w]
  Tensor<T> cell;
};

/// Convolutional LSTM cell. The four gate pre-activations come from one
/// convolution over [input, hidden] and are layer-normalized jointly.
template <typename T>
class ConvLstmCell {
 public:
  ConvLstmCell() = default;
  ConvLstmCell(std::size_t in_channels, std::size_t hidden_channels, std::size_t kernel, std::size_t grid_h,
               std::size_t grid_w, Rng& rng);

  /// Returns the new state; its hidden tensor is the cell output.
  LstmState<T> operator()(const Tensor<T>& input, const LstmState<T>& state) const;
  LstmState<T> zero_state(std::size_t n) const;

  void collect(const std::string& prefix, ParamList<T>& out) const;
  std::size_t hidden_channels() const { return hidden_; }

  Conv2d<T> gates;
  LayerNorm<T> norm;

 private:
  std::size_t in_ = 0, hidden_ = 0, grid_h_ = 0, grid_w_ = 0;
};

}  // namespace ldwm
