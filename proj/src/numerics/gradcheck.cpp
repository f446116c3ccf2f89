#include "ldwm/numerics/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "ldwm/core/rng.hpp"
#include "ldwm/numerics/ops.hpp"

namespace ldwm {

GradCheckReport finite_difference_check(const std::function<Tensor<double>()>& loss_fn,
                                        std::vector<Tensor<double>> inputs, const GradCheckOptions& opts) {
  for (auto& in : inputs) {
    in.set_requires_grad(true);
    in.zero_grad();
  }
  Tensor<double> loss = loss_fn();
  loss.backward();
  std::vector<std::vector<double>> analytic;
  for (auto& in : inputs) analytic.emplace_back(in.grad().begin(), in.grad().end());

  GradCheckReport report;
  NoGradGuard no_grad;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto data = inputs[k].data();
    const std::size_t n = data.size();
    const std::size_t probes = opts.max_probes_per_input == 0 ? n : std::min(n, opts.max_probes_per_input);
    for (std::size_t p = 0; p < probes; ++p) {
      const std::size_t i = probes == n ? p : p * n / probes;
      const double saved = data[i];
      data[i] = saved + opts.step;
      const double up = loss_fn().item();
      data[i] = saved - opts.step;
      const double down = loss_fn().item();
      data[i] = saved;
      const double numeric = (up - down) / (2.0 * opts.step);
      const double a = analytic[k][i];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), opts.floor});
      ++report.probes;
      if (rel > report.max_rel_error || report.worst.empty()) {
        if (rel >= report.max_rel_error) {
          report.max_rel_error = rel;
          report.worst = "input" + std::to_string(k) + "[" + std::to_string(i) + "]";
        }
      }
    }
  }
  report.passed = report.max_rel_error < opts.tolerance;
  return report;
}

Tensor<double> random_projection(const Tensor<double>& out, std::uint64_t seed) {
  Rng rng(seed);
  Tensor<double> r(out.shape());
  for (auto& v : r.data()) v = rng.uniform(-1.0, 1.0);
  return ops::sum(ops::mul(out, r));
}

}  // namespace ldwm
