#pragma once

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "ldwm/agent/ppo.hpp"
#include "ldwm/codec/encoder.hpp"
#include "ldwm/dynamics/dynamics.hpp"

// Simulated rollouts entirely in latent space: real observations seed the
// grid, the dynamics network samples rewards and next grids. Nothing here
// reconstructs pixels.

namespace ldwm {

/// Indexable store of real stacked observations [S x H x W].
struct InitialPool {
  std::size_t count = 0;
  std::size_t observation_size = 0;
  std::function<void(std::size_t index, std::span<float> out)> fetch;

  /// Pool over a flat copy of `n` observations.
  static InitialPool from_observations(std::vector<float> data, std::size_t observation_size);
};

struct DreamConfig {
  std::size_t horizon = 32;
  // Real frames replayed through the dynamics before dreaming starts. Only 0
  // (start from a zero recurrent state) is implemented.
  std::size_t burn_in = 0;
};

/// A batch of dream slots.
template <typename T>
struct DreamBatch {
  LatentBatch z;
  RecurrentState<T> h;
  std::vector<std::size_t> step;    // per slot, in [0, horizon]
  std::vector<std::size_t> origin;  // pool index each slot started from
};

struct DreamStepResult {
  std::vector<int> rewards;  // in {-1, 0, 1}
  std::vector<bool> truncated;
};

/// Draws one pool observation per slot (slot b uses rngs[b]), encodes the
/// draws with the encoder in evaluation mode and starts from h = 0.
template <typename T>
DreamBatch<T> dream_reset(const InitialPool& pool, Encoder<T>& encoder, const Codebook<T>& codebook,
                          const DynamicsNetwork<T>& dynamics, std::span<Rng> rngs);
/// Single-stream variant: every slot draws from `rng` in slot order.
template <typename T>
DreamBatch<T> dream_reset(const InitialPool& pool, Encoder<T>& encoder, const Codebook<T>& codebook,
                          const DynamicsNetwork<T>& dynamics, std::size_t batch, Rng& rng);

/// One dynamics step for every slot: reward category and next grid are both
/// sampled, slot b drawing from rngs[b] (reward first, then the cells).
/// Throws std::logic_error when a slot is already at the horizon.
template <typename T>
DreamStepResult dream_step(DreamBatch<T>& state, std::span<const int> actions, const DynamicsNetwork<T>& dynamics,
                           const Codebook<T>& codebook, std::size_t horizon, std::span<Rng> rngs);

/// n_envs = rngs.size() slots rolled for cfg.horizon steps under `policy`.
/// At every step the grid held in the state is the one fed to both the
/// policy and the dynamics. Bootstrap values come from V(z_horizon).
template <typename T>
TrajectoryBatch rollout_dreams(const Policy<T>& policy, const DynamicsNetwork<T>& dynamics, Encoder<T>& encoder,
                               const Codebook<T>& codebook, const InitialPool& pool, const DreamConfig& cfg,
                               std::span<Rng> rngs);

}  // namespace ldwm
