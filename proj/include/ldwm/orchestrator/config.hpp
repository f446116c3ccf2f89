#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ldwm/agent/ppo.hpp"
#include "ldwm/codec/config.hpp"
#include "ldwm/dynamics/dynamics.hpp"
#include "ldwm/envs/preprocess.hpp"

namespace ldwm {

/// Everything a training run depends on. Grid size, codebook size and
/// embedding width of the dynamics and policy are derived from the codec
/// block, and the action count from the environment (see finalize()).
struct RunConfig {
  std::string preset = "desk";
  std::string env = "catcher";
  std::uint64_t seed = 1;

  std::size_t iterations = 3;
  std::size_t steps_first_iter = 2048;
  std::size_t steps_per_iter = 1024;
  std::size_t dream_horizon = 32;
  std::size_t eval_episodes = 32;
  std::size_t warmup_epochs = 10;
  double warmup_lr_scale = 10;
  std::size_t vq_update_period = 2;

  std::size_t wm_steps = 500;     // world-model steps per iteration
  std::size_t wm_batch = 32;      // sequences per world-model step
  std::size_t wm_seq_len = 16;    // unrolled transitions per sequence
  std::size_t codec_batch = 32;   // observations per VQ-VAE step
  std::size_t ppo_updates = 300;  // dream rollouts + PPO updates per iteration
  std::size_t dream_envs = 16;

  double codec_lr = 1e-4;
  double dynamics_lr = 1e-4;
  double ppo_lr = 2.5e-4;
  // When >= 0, ppo.entropy_coef moves linearly to this value by the last iteration.
  double ppo_entropy_final = -1;

  bool record_wall_time = false;

  CodecConfig codec;
  DynamicsConfig dynamics;
  PolicyConfig policy;
  PPOConfig ppo;

  PreprocessConfig preprocess() const;
  /// Copies the shared sizes into the dynamics and policy blocks.
  void finalize(std::size_t actions);
  /// Throws std::invalid_argument naming the offending key.
  void validate() const;

  /// Total real interactions: steps_first_iter + steps_per_iter * (iterations - 1).
  std::size_t interaction_budget() const;
  /// Interactions collected in each iteration.
  std::vector<std::size_t> schedule() const;
  /// Entropy bonus used by PPO in iteration k (1-based).
  double entropy_coef_at(std::size_t k) const;

  /// Canonical key=value text, one key per line in a fixed order.
  std::string to_text() const;
};

/// "paper" or "desk".
RunConfig preset_config(const std::string& name);

/// Applies one key=value assignment. Unknown keys and malformed values throw
/// std::invalid_argument.
void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value);

/// Parses config text: '#' starts a comment, blank lines are ignored. A
/// `preset` key, if present, must come first and resets every other field.
RunConfig parse_config(const std::string& text, RunConfig base);
RunConfig load_config_file(const std::string& path, RunConfig base);

/// Sorted list of every accepted key.
std::vector<std::string> config_keys();

}  // namespace ldwm
