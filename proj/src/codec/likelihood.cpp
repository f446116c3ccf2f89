#include "ldwm/codec/likelihood.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace ldwm {

namespace {

// Below this |logit| the closed forms cancel badly; the series are exact to
// double precision there.
constexpr double kSeriesCut = 1e-2;

double softplus(double l) { return std::max(l, 0.0) + std::log1p(std::exp(-std::abs(l))); }

double sigmoid(double l) {
  if (l >= 0) return 1.0 / (1.0 + std::exp(-l));
  const double e = std::exp(l);
  return e / (1.0 + e);
}

// d log C / d logit = 1/l - 1/sinh(l).
double log_normalizer_grad(double l) {
  if (std::abs(l) < kSeriesCut) {
    const double l2 = l * l;
    return l * (1.0 / 6.0 - l2 * (7.0 / 360.0 - l2 * (31.0 / 15120.0)));
  }
  return 1.0 / l - 1.0 / std::sinh(l);
}

}  // namespace

double cb_mean(double l) {
  if (std::abs(l) < kSeriesCut) return 0.5 + l / 12.0 - l * l * l / 720.0;
  if (l < 0) return 1.0 - cb_mean(-l);
  return 1.0 / -std::expm1(-l) - 1.0 / l;
}

double cb_log_normalizer(double l) {
  // C = l / tanh(l/2), even in l.
  const double a = std::abs(l);
  if (a < kSeriesCut) {
    const double l2 = l * l;
    return std::log(2.0 + l2 / 6.0 - l2 * l2 / 360.0);
  }
  const double e = std::exp(-a);
  const double log_tanh_half = std::log1p(-e) - std::log1p(e);
  return std::log(a) - log_tanh_half;
}

template <typename T>
Tensor<T> cb_log_likelihood(const Tensor<T>& logits, const Tensor<T>& target) {
  if (!logits.defined() || !target.defined() || logits.shape() != target.shape()) {
    throw ShapeError("cb_log_likelihood: logits and target shapes differ");
  }
  const std::size_t n = logits.numel();
  if (n == 0) throw ShapeError("cb_log_likelihood: empty input");
  auto l = logits.data();
  auto x = target.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double xi = x[i];
    if (!(xi >= 0.0 && xi <= 1.0)) {
      throw std::invalid_argument("cb_log_likelihood: target value " + std::to_string(xi) + " at " +
                                  std::to_string(i) + " outside [0, 1]");
    }
    const double li = l[i];
    acc += xi * li - softplus(li) + cb_log_normalizer(li);
  }
  const T value = static_cast<T>(acc / static_cast<double>(n));
  return make_result<T>(Shape{}, {value}, "cb_log_likelihood", {logits, target},
                        [n](std::span<const T> g, std::span<const ImplPtr<T>> in) {
                          auto gl = input_grad<T>(in, 0);
                          if (gl.empty()) return;
                          const auto& lv = in[0]->data;
                          const auto& xv = in[1]->data;
                          const double scale = static_cast<double>(g[0]) / static_cast<double>(n);
                          for (std::size_t i = 0; i < n; ++i) {
                            const double li = lv[i];
                            gl[i] += static_cast<T>(scale * (xv[i] - sigmoid(li) + log_normalizer_grad(li)));
                          }
                        });
}

template Tensor<float> cb_log_likelihood<float>(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> cb_log_likelihood<double>(const Tensor<double>&, const Tensor<double>&);

}  // namespace ldwm
