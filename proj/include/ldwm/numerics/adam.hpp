#pragma once

#include <cstdint>
#include <vector>

#include "ldwm/numerics/layers.hpp"

namespace ldwm {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction. Parameters are registered in groups, each with
/// a multiplier on the base learning rate.
template <typename T>
class Adam {
 public:
  Adam() = default;
  explicit Adam(AdamConfig cfg) : cfg_(cfg) {}

  void add_group(const ParamList<T>& params, double lr_scale = 1.0);

  /// Applies one update. Every registered parameter must hold a gradient;
  /// gradients are left in place.
  void step();
  void zero_grad();

  double lr() const { return cfg_.lr; }
  void set_lr(double lr) { cfg_.lr = lr; }
  const AdamConfig& config() const { return cfg_; }
  std::uint64_t step_count() const { return step_count_; }

  struct Slot {
    NamedTensor<T> param;
    double lr_scale = 1.0;
    std::vector<T> m, v;
  };
  const std::vector<Slot>& slots() const { return slots_; }

  /// Moment buffers flattened in registration order (for checkpoints).
  std::vector<T> export_moments() const;
  void import_moments(std::uint64_t step_count, const std::vector<T>& moments);

 private:
  AdamConfig cfg_;
  std::uint64_t step_count_ = 0;
  std::vector<Slot> slots_;
};

}  // namespace ldwm
