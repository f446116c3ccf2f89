#include "ldwm/dynamics/conv_lstm.hpp"

#include <string>

#include "ldwm/numerics/ops.hpp"

namespace ldwm {

template <typename T>
ConvLstmCell<T>::ConvLstmCell(std::size_t in_channels, std::size_t hidden_channels, std::size_t kernel,
                              std::size_t grid_h, std::size_t grid_w, Rng& rng)
    : gates(in_channels + hidden_channels, 4 * hidden_channels, kernel, 1, static_cast<int>(kernel / 2), false, rng),
      norm(Shape{4 * hidden_channels, grid_h, grid_w}),
      in_(in_channels),
      hidden_(hidden_channels),
      grid_h_(grid_h),
      grid_w_(grid_w) {
  if (kernel % 2 == 0) throw std::invalid_argument("conv lstm: kernel size must be odd to preserve the grid");
}

template <typename T>
LstmState<T> ConvLstmCell<T>::zero_state(std::size_t n) const {
  return {Tensor<T>({n, hidden_, grid_h_, grid_w_}), Tensor<T>({n, hidden_, grid_h_, grid_w_})};
}

template <typename T>
LstmState<T> ConvLstmCell<T>::operator()(const Tensor<T>& input, const LstmState<T>& state) const {
  const Shape expect_in{input.defined() && input.dim() == 4 ? input.size(0) : 0, in_, grid_h_, grid_w_};
  if (!input.defined() || input.shape() != expect_in) {
    throw ShapeError("conv lstm: input " + (input.defined() ? shape_str(input.shape()) : std::string("<undefined>")) +
                     " does not match [N, " + std::to_string(in_) + ", " + std::to_string(grid_h_) + ", " +
                     std::to_string(grid_w_) + "]");
  }
  const Shape expect_state{input.size(0), hidden_, grid_h_, grid_w_};
  if (!state.hidden.defined() || !state.cell.defined() || state.hidden.shape() != expect_state ||
      state.cell.shape() != expect_state) {
    throw ShapeError("conv lstm: state does not match " + shape_str(expect_state));
  }
  Tensor<T> pre = norm(gates(ops::concat_channels<T>({input, state.hidden})));
  const std::size_t c = hidden_;
  Tensor<T> i = ops::sigmoid(ops::slice_channels(pre, 0, c));
  Tensor<T> f = ops::sigmoid(ops::slice_channels(pre, c, c));
  Tensor<T> o = ops::sigmoid(ops::slice_channels(pre, 2 * c, c));
  Tensor<T> g = ops::tanh(ops::slice_channels(pre, 3 * c, c));
  Tensor<T> cell = ops::add(ops::mul(f, state.cell), ops::mul(i, g));
  Tensor<T> hidden = ops::mul(o, ops::tanh(cell));
  return {hidden, cell};
}

template <typename T>
void ConvLstmCell<T>::collect(const std::string& prefix, ParamList<T>& out) const {
  gates.collect(prefix + ".gates", out);
  norm.collect(prefix + ".norm", out);
}

template class ConvLstmCell<float>;
template class ConvLstmCell<double>;

}  // namespace ldwm
