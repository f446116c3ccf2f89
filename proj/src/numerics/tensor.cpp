#include "ldwm/numerics/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <sstream>
#include <unordered_set>

namespace ldwm {

namespace {
thread_local bool g_grad_enabled = true;
std::atomic<std::uint64_t> g_node_counter{0};
}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

bool GradMode::enabled() { return g_grad_enabled; }
void GradMode::set_enabled(bool enabled) { g_grad_enabled = enabled; }

NoGradGuard::NoGradGuard() : previous_(GradMode::enabled()) { GradMode::set_enabled(false); }
NoGradGuard::~NoGradGuard() { GradMode::set_enabled(previous_); }

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : impl_(std::make_shared<TensorImpl<T>>()) {
  impl_->data.assign(shape_numel(shape), fill);
  impl_->shape = std::move(shape);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data) : impl_(std::make_shared<TensorImpl<T>>()) {
  if (data.size() != shape_numel(shape)) {
    throw ShapeError("tensor: data length " + std::to_string(data.size()) +
                     " does not match shape " + shape_str(shape));
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
}

template <typename T>
std::size_t Tensor<T>::size(std::size_t axis) const {
  if (axis >= impl_->shape.size()) {
    throw ShapeError("tensor: axis " + std::to_string(axis) + " out of range for shape " +
                     shape_str(impl_->shape));
  }
  return impl_->shape[axis];
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw ShapeError("item: tensor of shape " + shape_str(shape()) + " is not a scalar");
  return impl_->data[0];
}

template <typename T>
Tensor<T>& Tensor<T>::set_requires_grad(bool flag) {
  impl_->requires_grad = flag;
  return *this;
}

template <typename T>
void Tensor<T>::zero_grad() {
  impl_->grad.assign(impl_->data.size(), T(0));
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return Tensor(impl_->shape, impl_->data);
}

template <typename T>
void Tensor<T>::backward() const {
  ldwm::backward(*this);
}

template <typename T>
std::string_view Tensor<T>::op_kind() const {
  return impl_->grad_fn ? impl_->grad_fn->op_kind : std::string_view("leaf");
}

template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> data, std::string_view op_kind,
                      std::vector<Tensor<T>> inputs, BackwardFn<T> backward) {
  Tensor<T> out(std::move(shape), std::move(data));
  if (!GradMode::enabled()) return out;
  bool any = false;
  for (const auto& in : inputs) any = any || in.requires_grad();
  if (!any) return out;
  auto node = std::make_shared<TapeNode<T>>();
  node->op_kind = op_kind;
  node->id = ++g_node_counter;
  node->inputs.reserve(inputs.size());
  for (auto& in : inputs) node->inputs.push_back(in.impl());
  node->backward = std::move(backward);
  out.impl()->requires_grad = true;
  out.impl()->grad_fn = std::move(node);
  return out;
}

template <typename T>
void backward(const Tensor<T>& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ShapeError("backward: loss must be a scalar, got shape " +
                     (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
  }
  if (!loss.requires_grad()) {
    throw std::invalid_argument("backward: loss was not produced by taped operations");
  }
  TensorImpl<T>* root = loss.impl().get();
  if (!root->grad_fn) {
    // A leaf scalar: d(loss)/d(loss) = 1.
    root->grad_buffer()[0] += T(1);
    return;
  }

  std::vector<TensorImpl<T>*> order;
  std::unordered_set<const TensorImpl<T>*> seen;
  std::vector<TensorImpl<T>*> stack{root};
  seen.insert(root);
  while (!stack.empty()) {
    auto* cur = stack.back();
    stack.pop_back();
    order.push_back(cur);
    for (const auto& in : cur->grad_fn->inputs) {
      if (in->grad_fn && in->requires_grad && seen.insert(in.get()).second) stack.push_back(in.get());
    }
  }
  std::sort(order.begin(), order.end(),
            [](const TensorImpl<T>* a, const TensorImpl<T>* b) { return a->grad_fn->id > b->grad_fn->id; });

  for (auto* node : order) node->grad.assign(node->data.size(), T(0));
  root->grad[0] = T(1);
  for (auto* node : order) {
    node->grad_fn->backward(node->grad, node->grad_fn->inputs);
  }
  for (auto* node : order) {
    node->grad.clear();
    node->grad.shrink_to_fit();
  }
}

template class Tensor<float>;
template class Tensor<double>;
template Tensor<float> make_result(Shape, std::vector<float>, std::string_view, std::vector<Tensor<float>>,
                                   BackwardFn<float>);
template Tensor<double> make_result(Shape, std::vector<double>, std::string_view, std::vector<Tensor<double>>,
                                    BackwardFn<double>);
template void backward(const Tensor<float>&);
template void backward(const Tensor<double>&);

}  // namespace ldwm
