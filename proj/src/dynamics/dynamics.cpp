#include "ldwm/dynamics/dynamics.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "ldwm/numerics/ops.hpp"

namespace ldwm {

void DynamicsConfig::validate() const {
  if (actions < 2) throw std::invalid_argument("dynamics: need at least 2 actions");
  if (actions > action_channels) {
    throw std::invalid_argument("dynamics: " + std::to_string(actions) + " actions exceed " +
                                std::to_string(action_channels) + " action channels");
  }
  if (codebook_size < 2 || embed_dim == 0 || hidden == 0 || grid_h == 0 || grid_w == 0) {
    throw std::invalid_argument("dynamics: empty layer dimension");
  }
  if (kernel % 2 == 0 || latent_kernel % 2 == 0) throw std::invalid_argument("dynamics: kernels must be odd");
  if (!(reward_loss_scale > 0) || !(reward_lr_scale > 0)) {
    throw std::invalid_argument("dynamics: reward scales must be positive");
  }
}

template <typename T>
Tensor<T> build_input(const LatentBatch& z, std::span<const int> actions, const Tensor<T>& embeddings,
                      std::size_t action_channels) {
  if (actions.size() != z.count) {
    throw ShapeError("build_input: " + std::to_string(actions.size()) + " actions for " + std::to_string(z.count) +
                     " grids");
  }
  const std::size_t k = embeddings.size(0), e = embeddings.size(1), plane = z.cells();
  const std::size_t ch = e + action_channels;
  std::vector<T> out(z.count * ch * plane, T(0));
  auto tab = embeddings.data();
  for (std::size_t b = 0; b < z.count; ++b) {
    const int a = actions[b];
    if (a < 0 || static_cast<std::size_t>(a) >= action_channels) {
      throw std::invalid_argument("build_input: action " + std::to_string(a) + " outside [0, " +
                                  std::to_string(action_channels) + ")");
    }
    for (std::size_t p = 0; p < plane; ++p) {
      const int idx = z.indices[b * plane + p];
      if (idx < 0 || static_cast<std::size_t>(idx) >= k) {
        throw std::out_of_range("build_input: latent index " + std::to_string(idx) + " outside [0, " +
                                std::to_string(k) + ")");
      }
      for (std::size_t j = 0; j < e; ++j) out[(b * ch + j) * plane + p] = tab[static_cast<std::size_t>(idx) * e + j];
      out[(b * ch + e + static_cast<std::size_t>(a)) * plane + p] = T(1);
    }
  }
  return Tensor<T>(Shape{z.count, ch, z.height, z.width}, std::move(out));
}

template <typename T>
DynamicsNetwork<T>::DynamicsNetwork(const DynamicsConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg.validate();
  const std::size_t a = cfg.action_channels, c = cfg.hidden, h = cfg.grid_h, w = cfg.grid_w;
  cell1 = ConvLstmCell<T>(cfg.embed_dim + a, c, cfg.kernel, h, w, rng);
  cell2 = ConvLstmCell<T>(c + a, c, cfg.kernel, h, w, rng);
  const int lp = static_cast<int>(cfg.latent_kernel / 2);
  latent_conv = Conv2d<T>(c + a, cfg.codebook_size, cfg.latent_kernel, 1, lp, true, rng);
  latent_norm = LayerNorm<T>(Shape{cfg.codebook_size, h, w});
  reward_conv = Conv2d<T>(c + a, cfg.reward_channels, 3, 1, 1, true, rng);
  reward_norm = LayerNorm<T>(Shape{cfg.reward_channels, h, w});
  reward_fc1 = Linear<T>(cfg.reward_channels * h * w, cfg.reward_hidden, true, rng);
  reward_fc2 = Linear<T>(cfg.reward_hidden, 3, true, rng);
}

template <typename T>
RecurrentState<T> DynamicsNetwork<T>::zero_state(std::size_t n) const {
  return {cell1.zero_state(n), cell2.zero_state(n)};
}

template <typename T>
Tensor<T> DynamicsNetwork<T>::action_planes(std::span<const int> actions, std::size_t n) const {
  const std::size_t a = cfg_.action_channels, plane = cfg_.grid_h * cfg_.grid_w;
  std::vector<T> out(n * a * plane, T(0));
  for (std::size_t b = 0; b < n; ++b) {
    const std::size_t act = static_cast<std::size_t>(actions[b]);
    std::fill_n(out.begin() + (b * a + act) * plane, plane, T(1));
  }
  return Tensor<T>(Shape{n, a, cfg_.grid_h, cfg_.grid_w}, std::move(out));
}

template <typename T>
DynamicsOutput<T> DynamicsNetwork<T>::forward_input(const Tensor<T>& input, std::span<const int> actions,
                                                    const RecurrentState<T>& prev) const {
  const std::size_t n = input.size(0);
  if (actions.size() != n) throw ShapeError("dynamics: action count does not match the batch");
  for (int a : actions) {
    if (a < 0 || static_cast<std::size_t>(a) >= cfg_.actions) {
      throw std::invalid_argument("dynamics: action " + std::to_string(a) + " outside [0, " +
                                  std::to_string(cfg_.actions) + ")");
    }
  }
  Tensor<T> planes = action_planes(actions, n);
  DynamicsOutput<T> out;
  out.state.first = cell1(input, prev.first);
  out.state.second = cell2(ops::concat_channels<T>({out.state.first.hidden, planes}), prev.second);
  out.y = ops::concat_channels<T>({out.state.second.hidden, planes});
  return out;
}

template <typename T>
DynamicsOutput<T> DynamicsNetwork<T>::forward(const LatentBatch& z, std::span<const int> actions,
                                              const RecurrentState<T>& prev, const Codebook<T>& codebook) const {
  if (z.height != cfg_.grid_h || z.width != cfg_.grid_w) throw ShapeError("dynamics: latent grid size mismatch");
  if (codebook.entries() != cfg_.codebook_size || codebook.dim() != cfg_.embed_dim) {
    throw ShapeError("dynamics: codebook shape does not match the configuration");
  }
  Tensor<T> input = build_input(z, actions, codebook.embeddings, cfg_.action_channels);
  return forward_input(input, actions, prev);
}

template <typename T>
Tensor<T> DynamicsNetwork<T>::predict_next_latent(const Tensor<T>& y) const {
  return ops::leaky_relu(latent_norm(latent_conv(y)), static_cast<T>(cfg_.leaky_slope));
}

template <typename T>
Tensor<T> DynamicsNetwork<T>::predict_reward(const Tensor<T>& y) const {
  const T slope = static_cast<T>(cfg_.leaky_slope);
  Tensor<T> h = ops::leaky_relu(reward_norm(reward_conv(y)), slope);
  h = ops::reshape(h, {h.size(0), h.numel() / h.size(0)});
  return reward_fc2(ops::leaky_relu(reward_fc1(h), slope));
}

template <typename T>
ParamList<T> DynamicsNetwork<T>::trunk_parameters() const {
  ParamList<T> out;
  cell1.collect("dynamics.cell1", out);
  cell2.collect("dynamics.cell2", out);
  latent_conv.collect("dynamics.latent.conv", out);
  latent_norm.collect("dynamics.latent.norm", out);
  return out;
}

template <typename T>
ParamList<T> DynamicsNetwork<T>::reward_head_parameters() const {
  ParamList<T> out;
  reward_conv.collect("dynamics.reward.conv", out);
  reward_norm.collect("dynamics.reward.norm", out);
  reward_fc1.collect("dynamics.reward.fc1", out);
  reward_fc2.collect("dynamics.reward.fc2", out);
  return out;
}

template <typename T>
ParamList<T> DynamicsNetwork<T>::parameters() const {
  ParamList<T> out = trunk_parameters();
  ParamList<T> head = reward_head_parameters();
  out.insert(out.end(), head.begin(), head.end());
  return out;
}

template <typename T>
void register_dynamics(Adam<T>& opt, const DynamicsNetwork<T>& net) {
  opt.add_group(net.trunk_parameters(), 1.0);
  opt.add_group(net.reward_head_parameters(), net.config().reward_lr_scale);
}

namespace {

// Softmax over axis 1 of row (b, p) into `w`.
template <typename T>
void cell_weights(std::span<const T> lg, std::size_t b, std::size_t p, std::size_t k, std::size_t plane,
                  std::vector<double>& w) {
  w.resize(k);
  double mx = -INFINITY;
  for (std::size_t c = 0; c < k; ++c) {
    const double v = lg[(b * k + c) * plane + p];
    if (!std::isfinite(v)) throw std::invalid_argument("sample_next_latent: non-finite logit");
    mx = std::max(mx, v);
  }
  for (std::size_t c = 0; c < k; ++c) w[c] = std::exp(static_cast<double>(lg[(b * k + c) * plane + p]) - mx);
}

template <typename T>
LatentBatch sample_impl(const Tensor<T>& logits, const std::function<Rng&(std::size_t)>& rng_for) {
  if (!logits.defined() || logits.dim() != 4) throw ShapeError("sample_next_latent: logits must be [N, K, h, w]");
  const std::size_t n = logits.size(0), k = logits.size(1), plane = logits.size(2) * logits.size(3);
  LatentBatch out{n, logits.size(2), logits.size(3), std::vector<int>(n * plane)};
  auto lg = logits.data();
  std::vector<double> w;
  for (std::size_t b = 0; b < n; ++b) {
    Rng& rng = rng_for(b);
    for (std::size_t p = 0; p < plane; ++p) {
      cell_weights(lg, b, p, k, plane, w);
      out.indices[b * plane + p] = static_cast<int>(rng.categorical(w));
    }
  }
  return out;
}

}  // namespace

template <typename T>
LatentBatch sample_next_latent(const Tensor<T>& logits, Rng& rng) {
  return sample_impl<T>(logits, [&](std::size_t) -> Rng& { return rng; });
}

template <typename T>
LatentBatch sample_next_latent(const Tensor<T>& logits, std::span<Rng> rngs) {
  if (logits.defined() && logits.dim() == 4 && rngs.size() != logits.size(0)) {
    throw ShapeError("sample_next_latent: one generator per sample required");
  }
  return sample_impl<T>(logits, [&](std::size_t b) -> Rng& { return rngs[b]; });
}

template <typename T>
Tensor<T> dynamics_loss(const DynamicsNetwork<T>& net, const Codebook<T>& codebook, const SequenceBatch& batch,
                        DynamicsLosses& losses) {
  if (batch.steps == 0 || batch.batch == 0) throw std::invalid_argument("dynamics: empty training batch");
  if (batch.latents.size() != batch.steps + 1 || batch.actions.size() != batch.steps ||
      batch.reward_categories.size() != batch.steps) {
    throw ShapeError("dynamics: sequence batch lengths are inconsistent");
  }
  const auto& cfg = net.config();
  RecurrentState<T> state = net.zero_state(batch.batch);
  Tensor<T> latent_sum, reward_sum;
  std::vector<int> reward_targets(batch.batch);
  for (std::size_t t = 0; t < batch.steps; ++t) {
    auto out = net.forward(batch.latents[t], batch.actions[t], state, codebook);
    state = out.state;
    Tensor<T> lce = ops::softmax_cross_entropy(net.predict_next_latent(out.y), batch.latents[t + 1].indices);
    for (std::size_t b = 0; b < batch.batch; ++b) {
      const int c = batch.reward_categories[t][b];
      if (c < 1 || c > 3) throw std::invalid_argument("dynamics: reward category " + std::to_string(c));
      reward_targets[b] = c - 1;
    }
    Tensor<T> rce = ops::softmax_cross_entropy(net.predict_reward(out.y), reward_targets);
    latent_sum = t == 0 ? lce : ops::add(latent_sum, lce);
    reward_sum = t == 0 ? rce : ops::add(reward_sum, rce);
  }
  const T inv = T(1) / static_cast<T>(batch.steps);
  Tensor<T> latent_mean = ops::mul_scalar(latent_sum, inv);
  Tensor<T> reward_mean = ops::mul_scalar(reward_sum, inv);
  losses.latent_ce = latent_mean.item();
  losses.reward_ce = reward_mean.item();
  return ops::add(latent_mean, ops::mul_scalar(reward_mean, static_cast<T>(cfg.reward_loss_scale)));
}

template <typename T>
DynamicsLosses dynamics_train_step(const DynamicsNetwork<T>& net, const Codebook<T>& codebook,
                                   const SequenceBatch& batch, Adam<T>& opt) {
  DynamicsLosses losses;
  Tensor<T> loss = dynamics_loss(net, codebook, batch, losses);
  opt.zero_grad();
  loss.backward();
  opt.step();
  return losses;
}

#define LDWM_INSTANTIATE_DYNAMICS(T)                                                                         \
  template Tensor<T> build_input<T>(const LatentBatch&, std::span<const int>, const Tensor<T>&, std::size_t); \
  template class DynamicsNetwork<T>;                                                                         \
  template void register_dynamics<T>(Adam<T>&, const DynamicsNetwork<T>&);                                   \
  template LatentBatch sample_next_latent<T>(const Tensor<T>&, Rng&);                                        \
  template LatentBatch sample_next_latent<T>(const Tensor<T>&, std::span<Rng>);                              \
  template Tensor<T> dynamics_loss<T>(const DynamicsNetwork<T>&, const Codebook<T>&, const SequenceBatch&,   \
                                      DynamicsLosses&);                                                      \
  template DynamicsLosses dynamics_train_step<T>(const DynamicsNetwork<T>&, const Codebook<T>&,              \
                                                 const SequenceBatch&, Adam<T>&);

LDWM_INSTANTIATE_DYNAMICS(float)
LDWM_INSTANTIATE_DYNAMICS(double)

}  // namespace ldwm
