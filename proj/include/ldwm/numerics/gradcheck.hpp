#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ldwm/numerics/tensor.hpp"

namespace ldwm {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t probes = 0;
  std::string worst;  // "<input>[<index>]" of the worst probe
  bool passed = true;
};

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  // Denominator floor for the relative error, so that gradients that are
  // numerically zero compare on an absolute scale.
  double floor = 1e-6;
  // Probe at most this many elements per input (0 = all), chosen evenly.
  std::size_t max_probes_per_input = 0;
};

/// Compares the reverse-mode gradient of `loss_fn` with central differences.
/// `loss_fn` must rebuild its graph from the current values of `inputs` and
/// return a scalar.
GradCheckReport finite_difference_check(const std::function<Tensor<double>()>& loss_fn,
                                        std::vector<Tensor<double>> inputs, const GradCheckOptions& opts = {});

/// sum(out * R) with R a fixed pseudo-random tensor in [-1, 1]; reduces a
/// non-scalar operator output to a scalar with a generic gradient.
Tensor<double> random_projection(const Tensor<double>& out, std::uint64_t seed);

}  // namespace ldwm
