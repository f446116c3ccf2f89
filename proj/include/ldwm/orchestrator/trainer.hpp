#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "ldwm/agent/ppo.hpp"
#include "ldwm/codec/codec.hpp"
#include "ldwm/dream/dream.hpp"
#include "ldwm/envs/collect.hpp"
#include "ldwm/orchestrator/checkpoint.hpp"
#include "ldwm/orchestrator/config.hpp"

namespace ldwm {

struct MetricsRow {
  std::size_t iteration = 0;
  std::size_t interactions = 0;
  double codec_recon_nll = 0;
  double codec_cb_loss = 0;
  double codec_commit_loss = 0;
  double dyn_latent_ce = 0;
  double dyn_reward_ce = 0;
  double ppo_policy_loss = 0;
  double ppo_value_loss = 0;
  double ppo_entropy = 0;
  double ppo_clip_frac = 0;
  double eval_mean_reward = 0;
  double eval_std_reward = 0;
  double wall_time_s = 0;
};

/// Column names in file order.
const std::vector<std::string>& metrics_columns();
std::string metrics_csv(const std::vector<MetricsRow>& rows);

/// Interaction schedule, observed per world-model step.
struct WorldModelStepInfo {
  std::size_t iteration;
  std::size_t step;  // 1-based within the iteration
  bool codec_updated;
};

/// Wall-clock seconds spent in each phase of run_iteration since construction
/// (not checkpointed).
struct PhaseSeconds {
  double collect = 0;
  double warm_up = 0;
  double world_model = 0;
  double policy = 0;
  double evaluate = 0;
};

/// The iterative loop: collect real experience, warm up the autoencoder once,
/// train the world model, train the policy on dreams, evaluate, checkpoint.
class Trainer {
 public:
  explicit Trainer(RunConfig cfg);
  /// Restores a run from a checkpoint file written by save_checkpoint.
  static std::unique_ptr<Trainer> resume(const std::string& path);

  /// Runs the remaining iterations. With a non-empty out_dir, metrics.csv is
  /// rewritten and checkpoint_iter<k>.ldwm plus checkpoint.ldwm are saved
  /// after every iteration.
  void run(const std::string& out_dir);
  /// One full iteration; returns its metrics row.
  MetricsRow run_iteration();

  // Individual phases, exposed for tests.
  std::size_t collect(std::size_t n_steps, bool random_policy);
  void warm_up();
  void train_world_model(std::size_t steps, MetricsRow& row);
  void train_policy(MetricsRow& row);
  EpisodeStats evaluate(std::size_t episodes, std::uint64_t seed);

  Checkpoint make_checkpoint() const;
  void restore(const Checkpoint& ckpt);
  void save_checkpoint(const std::string& path) const { make_checkpoint().save(path); }

  /// Action source that encodes the observation and samples the policy.
  ActionSource policy_actions();
  /// Every stacked real observation collected so far.
  InitialPool initial_pool() const;
  /// Teacher-forced sequences of wm_seq_len transitions, encoded with the
  /// current encoder.
  SequenceBatch sample_sequences(std::size_t batch, std::size_t len, Rng& rng);
  Tensor<float> observation_batch(const std::vector<std::size_t>& frames) const;

  const RunConfig& config() const { return cfg_; }
  std::size_t iterations_done() const { return iteration_; }
  std::size_t interactions() const { return interactions_; }
  const std::vector<MetricsRow>& rows() const { return rows_; }
  const ReplayBuffer& buffer() const { return buffer_; }
  bool warmed_up() const { return warmed_up_; }
  const PhaseSeconds& phase_seconds() const { return phase_; }

  Codec<float>& codec() { return codec_; }
  DynamicsNetwork<float>& dynamics() { return dynamics_; }
  Policy<float>& policy() { return policy_; }

  std::function<void(const WorldModelStepInfo&)> on_world_model_step;

 private:
  RunConfig cfg_;
  Rng rng_;
  Codec<float> codec_;
  DynamicsNetwork<float> dynamics_;
  Policy<float> policy_;
  Adam<float> codec_opt_, dynamics_opt_, policy_opt_;
  ReplayBuffer buffer_;
  std::unique_ptr<Collector> collector_;
  std::vector<MetricsRow> rows_;
  std::size_t iteration_ = 0;
  std::size_t interactions_ = 0;
  bool warmed_up_ = false;
  std::size_t dynamics_updates_ = 0;
  PhaseSeconds phase_;
};

}  // namespace ldwm
