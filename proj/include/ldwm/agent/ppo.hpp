#pragma once

#include <span>
#include <vector>

#include "ldwm/agent/policy.hpp"
#include "ldwm/numerics/adam.hpp"

namespace ldwm {

struct PPOConfig {
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double clip_eps = 0.2;
  double entropy_coef = 0.01;
  double value_coef = 0.5;
  std::size_t epochs = 4;
  std::size_t minibatch = 256;

  void validate() const;
};

/// Time-major rollout of `envs` parallel slots over `horizon` steps; entry
/// t * envs + e belongs to slot e at step t. Episodes are cut by step count
/// only, so the last step of every slot is a truncation bootstrapped with
/// bootstrap_values[e].
struct TrajectoryBatch {
  std::size_t envs = 0;
  std::size_t horizon = 0;
  std::vector<LatentBatch> latents;  // per step, `envs` grids
  std::vector<int> actions;
  std::vector<double> logp_old;
  std::vector<double> rewards;
  std::vector<double> values_old;
  std::vector<double> bootstrap_values;
  std::vector<bool> truncated;

  std::size_t size() const { return envs * horizon; }
};

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;
};

/// delta_t = r_t + gamma V_{t+1} - V_t; A_t = sum_k (gamma lambda)^k delta_{t+k}
/// over one slot's sequence, with V_T = bootstrap_value.
GaeResult compute_gae(std::span<const double> rewards, std::span<const double> values, double bootstrap_value,
                      double gamma, double lambda);

struct PPOStats {
  double policy_loss = 0;
  double value_loss = 0;
  double entropy = 0;
  double clip_fraction = 0;
  double approx_kl = 0;
};

/// One minibatch of flattened transitions with precomputed targets.
struct PPOMinibatch {
  LatentBatch latents;
  std::vector<int> actions;
  std::vector<double> logp_old;
  std::vector<double> advantages;
  std::vector<double> returns;
};

/// -mean(min(rho A, clip(rho) A)) + value_coef mean((V - R)^2) - entropy_coef mean(H).
template <typename T>
Tensor<T> ppo_loss(const Policy<T>& policy, const Codebook<T>& codebook, const PPOMinibatch& mb,
                   const PPOConfig& cfg, PPOStats& stats);

/// GAE, per-batch advantage normalization, then cfg.epochs passes over
/// shuffled minibatches. Returns statistics averaged over all minibatch steps.
template <typename T>
PPOStats ppo_update(const Policy<T>& policy, const Codebook<T>& codebook, const TrajectoryBatch& batch,
                    const PPOConfig& cfg, Adam<T>& opt, Rng& rng);

}  // namespace ldwm
