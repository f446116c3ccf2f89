#pragma once

#include <span>
#include <vector>

#include "ldwm/codec/codebook.hpp"
#include "ldwm/numerics/layers.hpp"

namespace ldwm {

struct PolicyConfig {
  std::size_t grid_h = 4;
  std::size_t grid_w = 4;
  std::size_t embed_dim = 16;
  std::size_t actions = 3;
  std::size_t conv1 = 32;
  std::size_t conv2 = 32;
  std::size_t kernel = 3;
  std::size_t hidden = 128;
  double leaky_slope = 0.01;
};

template <typename T>
struct PolicyOutput {
  Tensor<T> logits;  // [N, M]
  Tensor<T> value;   // [N]
};

/// Latent-space actor-critic: embeddings -> (conv + layer norm + leaky ReLU) x2
/// -> flatten -> dense -> action logits and a scalar value. It sees only the
/// latent grid and the codebook.
template <typename T>
class Policy {
 public:
  Policy() = default;
  Policy(const PolicyConfig& cfg, Rng& rng);

  PolicyOutput<T> operator()(const LatentBatch& z, const Codebook<T>& codebook) const;

  ParamList<T> parameters() const;
  const PolicyConfig& config() const { return cfg_; }

  Conv2d<T> conv1, conv2;
  LayerNorm<T> norm1, norm2;
  Linear<T> trunk, policy_head, value_head;

 private:
  PolicyConfig cfg_;
};

struct ActResult {
  std::vector<int> actions;
  std::vector<double> logp;
  std::vector<double> values;
};

/// Samples a ~ softmax(logits) per grid; sample b draws from rngs[b].
template <typename T>
ActResult act(const Policy<T>& policy, const Codebook<T>& codebook, const LatentBatch& z, std::span<Rng> rngs);
/// Single-generator variant for sequential use.
template <typename T>
ActResult act(const Policy<T>& policy, const Codebook<T>& codebook, const LatentBatch& z, Rng& rng);

}  // namespace ldwm
