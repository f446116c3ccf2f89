#pragma once

#include <span>
#include <vector>

#include "ldwm/codec/codebook.hpp"
#include "ldwm/dynamics/conv_lstm.hpp"
#include "ldwm/numerics/adam.hpp"

namespace ldwm {

struct DynamicsConfig {
  std::size_t grid_h = 4;
  std::size_t grid_w = 4;
  std::size_t embed_dim = 16;       // E
  std::size_t codebook_size = 64;   // K
  std::size_t actions = 3;          // M
  std::size_t action_channels = 4;  // A >= M
  std::size_t hidden = 32;          // C, both cells
  std::size_t kernel = 3;
  std::size_t latent_kernel = 3;
  std::size_t reward_channels = 16;
  std::size_t reward_hidden = 64;
  double leaky_slope = 0.01;
  double reward_loss_scale = 0.1;  // lambda_r
  double reward_lr_scale = 10.0;   // kappa

  std::size_t y_channels() const { return hidden + action_channels; }
  void validate() const;
};

/// Hidden and cell activations of both recurrent cells.
template <typename T>
struct RecurrentState {
  LstmState<T> first;
  LstmState<T> second;
};

/// Embeddings of z in channels [0, E) and one-hot(a) broadcast over the grid
/// in channels [E, E + A). `embeddings` is the [K, E] table.
template <typename T>
Tensor<T> build_input(const LatentBatch& z, std::span<const int> actions, const Tensor<T>& embeddings,
                      std::size_t action_channels);

template <typename T>
struct DynamicsOutput {
  Tensor<T> y;  // [N, C + A, h, w]
  RecurrentState<T> state;
};

template <typename T>
class DynamicsNetwork {
 public:
  DynamicsNetwork() = default;
  DynamicsNetwork(const DynamicsConfig& cfg, Rng& rng);

  RecurrentState<T> zero_state(std::size_t n) const;

  /// One recurrent step: cell1(build_input) -> concat action -> cell2 -> concat action -> y.
  /// The embedding table is read without gradient.
  DynamicsOutput<T> forward(const LatentBatch& z, std::span<const int> actions, const RecurrentState<T>& prev,
                            const Codebook<T>& codebook) const;
  /// Same step on a prepared build_input tensor.
  DynamicsOutput<T> forward_input(const Tensor<T>& input, std::span<const int> actions,
                                  const RecurrentState<T>& prev) const;

  /// Unnormalized next-latent scores [N, K, h, w].
  Tensor<T> predict_next_latent(const Tensor<T>& y) const;
  /// Reward-category scores [N, 3] for categories {1, 2, 3}.
  Tensor<T> predict_reward(const Tensor<T>& y) const;

  ParamList<T> parameters() const;
  ParamList<T> trunk_parameters() const;        // cells and latent head
  ParamList<T> reward_head_parameters() const;  // reward head only
  const DynamicsConfig& config() const { return cfg_; }

  ConvLstmCell<T> cell1, cell2;
  Conv2d<T> latent_conv;
  LayerNorm<T> latent_norm;
  Conv2d<T> reward_conv;
  LayerNorm<T> reward_norm;
  Linear<T> reward_fc1, reward_fc2;

 private:
  Tensor<T> action_planes(std::span<const int> actions, std::size_t n) const;
  DynamicsConfig cfg_;
};

/// Registers trunk parameters at the base rate and the reward head at
/// reward_lr_scale times the base rate.
template <typename T>
void register_dynamics(Adam<T>& opt, const DynamicsNetwork<T>& net);

/// Independent per-cell categorical draws from softmax over the K axis.
template <typename T>
LatentBatch sample_next_latent(const Tensor<T>& logits, Rng& rng);
/// Sample b uses rngs[b], so each sample's draws do not depend on the batch.
template <typename T>
LatentBatch sample_next_latent(const Tensor<T>& logits, std::span<Rng> rngs);

/// Teacher-forced training sequences. latents has steps + 1 entries (z_1..z_{T+1});
/// actions and reward categories have `steps` entries of `batch` values each.
struct SequenceBatch {
  std::size_t steps = 0;
  std::size_t batch = 0;
  std::vector<LatentBatch> latents;
  std::vector<std::vector<int>> actions;
  std::vector<std::vector<int>> reward_categories;  // values in {1, 2, 3}
};

struct DynamicsLosses {
  double latent_ce = 0;
  double reward_ce = 0;
};

/// Loss graph: mean latent CE + reward_loss_scale * mean reward CE over the unroll.
template <typename T>
Tensor<T> dynamics_loss(const DynamicsNetwork<T>& net, const Codebook<T>& codebook, const SequenceBatch& batch,
                        DynamicsLosses& losses);

/// One optimizer step on dynamics_loss; returns the losses before the step.
template <typename T>
DynamicsLosses dynamics_train_step(const DynamicsNetwork<T>& net, const Codebook<T>& codebook,
                                   const SequenceBatch& batch, Adam<T>& opt);

}  // namespace ldwm
