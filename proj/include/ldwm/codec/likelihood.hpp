#pragma once

#include "ldwm/numerics/tensor.hpp"

namespace ldwm {

/// log C(lambda) of the continuous Bernoulli with lambda = sigmoid(logit).
double cb_log_normalizer(double logit);

/// Mean of the continuous Bernoulli with density proportional to exp(logit * x).
double cb_mean(double logit);

/// Mean per-pixel continuous-Bernoulli log-density of `target` under
/// lambda = sigmoid(logits). Targets must lie in [0, 1].
template <typename T>
Tensor<T> cb_log_likelihood(const Tensor<T>& logits, const Tensor<T>& target);

}  // namespace ldwm
