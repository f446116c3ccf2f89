#include "ldwm/numerics/adam.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace ldwm {

template <typename T>
void Adam<T>::add_group(const ParamList<T>& params, double lr_scale) {
  for (const auto& p : params) {
    Slot s;
    s.param = p;
    s.lr_scale = lr_scale;
    s.m.assign(p.tensor.numel(), T(0));
    s.v.assign(p.tensor.numel(), T(0));
    slots_.push_back(std::move(s));
  }
}

template <typename T>
void Adam<T>::step() {
  for (const auto& s : slots_) {
    if (!s.param.tensor.has_grad()) {
      throw std::invalid_argument("adam: parameter '" + s.param.name + "' has no gradient");
    }
  }
  ++step_count_;
  const double t = static_cast<double>(step_count_);
  const double bc1 = 1.0 - std::pow(cfg_.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg_.beta2, t);
  const T b1 = static_cast<T>(cfg_.beta1), b2 = static_cast<T>(cfg_.beta2);
  for (auto& s : slots_) {
    const double lr = cfg_.lr * s.lr_scale;
    if (lr == 0.0) {
      // Moments still advance so that the step count stays meaningful.
      auto g = s.param.tensor.grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        s.m[i] = b1 * s.m[i] + (T(1) - b1) * g[i];
        s.v[i] = b2 * s.v[i] + (T(1) - b2) * g[i] * g[i];
      }
      continue;
    }
    auto g = s.param.tensor.grad();
    auto w = s.param.tensor.impl()->data.data();
    for (std::size_t i = 0; i < g.size(); ++i) {
      s.m[i] = b1 * s.m[i] + (T(1) - b1) * g[i];
      s.v[i] = b2 * s.v[i] + (T(1) - b2) * g[i] * g[i];
      const double mhat = s.m[i] / bc1;
      const double vhat = s.v[i] / bc2;
      w[i] -= static_cast<T>(lr * mhat / (std::sqrt(vhat) + cfg_.eps));
    }
  }
}

template <typename T>
void Adam<T>::zero_grad() {
  for (auto& s : slots_) s.param.tensor.zero_grad();
}

template <typename T>
std::vector<T> Adam<T>::export_moments() const {
  std::vector<T> out;
  for (const auto& s : slots_) {
    out.insert(out.end(), s.m.begin(), s.m.end());
    out.insert(out.end(), s.v.begin(), s.v.end());
  }
  return out;
}

template <typename T>
void Adam<T>::import_moments(std::uint64_t step_count, const std::vector<T>& moments) {
  std::size_t need = 0;
  for (const auto& s : slots_) need += 2 * s.m.size();
  if (moments.size() != need) {
    throw std::invalid_argument("adam: moment buffer has " + std::to_string(moments.size()) + " values, expected " +
                                std::to_string(need));
  }
  std::size_t off = 0;
  for (auto& s : slots_) {
    std::copy_n(moments.begin() + off, s.m.size(), s.m.begin());
    off += s.m.size();
    std::copy_n(moments.begin() + off, s.v.size(), s.v.begin());
    off += s.v.size();
  }
  step_count_ = step_count;
}

template class Adam<float>;
template class Adam<double>;

}  // namespace ldwm
