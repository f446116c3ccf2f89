#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ldwm {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Raised by any operator whose operand shapes do not satisfy its contract.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Thread-local switch that controls whether operators record tape nodes.
class GradMode {
 public:
  static bool enabled();
  static void set_enabled(bool enabled);
};

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

template <typename T>
struct TensorImpl;

template <typename T>
using ImplPtr = std::shared_ptr<TensorImpl<T>>;

// Backward rule: reads the gradient of the node's output and accumulates into
// the gradients of its inputs.
template <typename T>
using BackwardFn = std::function<void(std::span<const T> grad_out,
                                      std::span<const ImplPtr<T>> inputs)>;

/// One recorded operation. Ids are assigned from a global monotone counter, so
/// sorting by id yields a topological order of any tape.
template <typename T>
struct TapeNode {
  std::string_view op_kind;
  std::uint64_t id = 0;
  std::vector<ImplPtr<T>> inputs;
  BackwardFn<T> backward;
};

template <typename T>
struct TensorImpl {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty when no accumulator has been allocated
  bool requires_grad = false;
  std::shared_ptr<TapeNode<T>> grad_fn;

  /// Returns the gradient accumulator, allocating it zero-filled on first use.
  std::span<T> grad_buffer() {
    if (grad.size() != data.size()) grad.assign(data.size(), T(0));
    return grad;
  }
};

/// Dense row-major n-dimensional array with reverse-mode gradient tracking.
/// Copies are shallow: two Tensor handles may refer to the same storage.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0));
  Tensor(Shape shape, std::vector<T> data);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), T(0)); }
  static Tensor ones(Shape shape) { return Tensor(std::move(shape), T(1)); }
  static Tensor full(Shape shape, T value) { return Tensor(std::move(shape), value); }
  static Tensor scalar(T value) { return Tensor(Shape{}, value); }

  bool defined() const { return static_cast<bool>(impl_); }
  const Shape& shape() const { return impl_->shape; }
  std::size_t dim() const { return impl_->shape.size(); }
  std::size_t size(std::size_t axis) const;
  std::size_t numel() const { return impl_->data.size(); }

  std::span<T> data() { return impl_->data; }
  std::span<const T> data() const { return impl_->data; }
  T item() const;

  bool requires_grad() const { return impl_ && impl_->requires_grad; }
  Tensor& set_requires_grad(bool flag);
  bool is_leaf() const { return !impl_->grad_fn; }
  bool has_grad() const { return impl_ && impl_->grad.size() == impl_->data.size() && !impl_->data.empty(); }
  std::span<const T> grad() const { return impl_->grad; }
  std::span<T> mutable_grad() { return impl_->grad_buffer(); }
  /// Resets the accumulator to zeros (allocating it if absent).
  void zero_grad();

  /// Copy of the values with no tape history (gradient stop).
  Tensor detach() const;
  /// Runs reverse-mode accumulation from this scalar.
  void backward() const;

  std::string_view op_kind() const;
  const ImplPtr<T>& impl() const { return impl_; }
  static Tensor from_impl(ImplPtr<T> impl) {
    Tensor t;
    t.impl_ = std::move(impl);
    return t;
  }

 private:
  ImplPtr<T> impl_;
};

/// Builds the result of an operator and, when gradients are enabled and any
/// input requires them, records a tape node with the given backward rule.
template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> data, std::string_view op_kind,
                      std::vector<Tensor<T>> inputs, BackwardFn<T> backward);

/// Central helper for backward rules: the accumulator of input `i` or an empty
/// span if it does not take gradients.
template <typename T>
std::span<T> input_grad(std::span<const ImplPtr<T>> inputs, std::size_t i) {
  auto& impl = inputs[i];
  if (!impl->requires_grad) return {};
  return impl->grad_buffer();
}

template <typename T>
void backward(const Tensor<T>& loss);

}  // namespace ldwm
