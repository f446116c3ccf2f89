#pragma once

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "ldwm/envs/env.hpp"
#include "ldwm/envs/preprocess.hpp"
#include "ldwm/envs/replay.hpp"

namespace ldwm {

/// Maps a stacked observation [S x H x W] to an action.
using ActionSource = std::function<int(std::span<const float> observation, Rng& rng)>;

/// Uniform random actions over M.
ActionSource random_actions(std::size_t actions);

/// Steps one real environment and feeds a replay buffer. Episodes continue
/// across collect calls; a finished episode is reset on the next step.
class Collector {
 public:
  Collector(std::unique_ptr<Environment> env, PreprocessConfig pre);

  /// Exactly n_steps environment steps; returns n_steps.
  std::size_t collect(const ActionSource& source, std::size_t n_steps, ReplayBuffer& buffer, Rng& rng);

  const Environment& env() const { return *env_; }
  std::size_t total_steps() const { return total_; }

  void serialize(ByteWriter& w) const;
  void deserialize(ByteReader& r);

 private:
  void start_episode(ReplayBuffer& buffer);

  std::unique_ptr<Environment> env_;
  PreprocessConfig pre_;
  FrameStack stack_;
  bool in_episode_ = false;
  std::size_t total_ = 0;
};

struct EpisodeStats {
  double mean = 0;
  double std = 0;  // population standard deviation
  std::vector<double> returns;
  std::size_t steps = 0;  // environment steps over all episodes
};

/// Runs `episodes` complete real episodes (environment-defined termination)
/// and reports the cumulative unclipped reward.
EpisodeStats run_episodes(Environment& env, const PreprocessConfig& pre, const ActionSource& source,
                          std::size_t episodes, Rng& rng);

}  // namespace ldwm
