#pragma once

#include "ldwm/orchestrator/trainer.hpp"

namespace ldwm {

struct FidelityReport {
  double cell_accuracy = 0;    // argmax next-grid cells equal to the encoded next grid
  double reward_accuracy = 0;  // argmax reward category equal to the clipped real reward
  std::size_t transitions = 0;
  std::size_t codes_used = 0;  // distinct codebook entries among the encoded held-out grids
};

/// Teacher-forced one-step prediction accuracy on `held_out`, unrolled over
/// consecutive non-overlapping windows of `window` transitions from a zero
/// recurrent state. Targets are the encoder's grids of the real next frames.
FidelityReport world_model_fidelity(Trainer& trainer, const ReplayBuffer& held_out, std::size_t window);

struct ConsistencyReport {
  double real_reward_per_step = 0;
  double dream_reward_per_step = 0;
};

/// Per-step mean reward of the current policy in the real environment
/// (`episodes` full episodes) against dreams of `horizon` steps seeded from
/// the trainer's replay buffer (`slots` parallel dreams).
ConsistencyReport dream_real_consistency(Trainer& trainer, std::size_t episodes, std::size_t slots,
                                         std::size_t horizon, std::uint64_t seed);

}  // namespace ldwm
