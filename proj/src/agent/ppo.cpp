#include "ldwm/agent/ppo.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "ldwm/numerics/ops.hpp"

namespace ldwm {

void PPOConfig::validate() const {
  if (!(gamma > 0 && gamma <= 1)) throw std::invalid_argument("ppo: gamma must lie in (0, 1]");
  if (!(gae_lambda >= 0 && gae_lambda <= 1)) throw std::invalid_argument("ppo: gae_lambda must lie in [0, 1]");
  if (!(clip_eps > 0)) throw std::invalid_argument("ppo: clip_eps must be positive");
  if (epochs == 0 || minibatch == 0) throw std::invalid_argument("ppo: epochs and minibatch must be positive");
}

GaeResult compute_gae(std::span<const double> rewards, std::span<const double> values, double bootstrap_value,
                      double gamma, double lambda) {
  if (rewards.size() != values.size()) {
    throw std::invalid_argument("compute_gae: " + std::to_string(rewards.size()) + " rewards vs " +
                                std::to_string(values.size()) + " values");
  }
  const std::size_t n = rewards.size();
  GaeResult r{std::vector<double>(n), std::vector<double>(n)};
  double acc = 0;
  for (std::size_t t = n; t-- > 0;) {
    const double next = t + 1 < n ? values[t + 1] : bootstrap_value;
    const double delta = rewards[t] + gamma * next - values[t];
    acc = delta + gamma * lambda * acc;
    r.advantages[t] = acc;
    r.returns[t] = acc + values[t];
  }
  return r;
}

template <typename T>
Tensor<T> ppo_loss(const Policy<T>& policy, const Codebook<T>& codebook, const PPOMinibatch& mb, const PPOConfig& cfg,
                   PPOStats& stats) {
  const std::size_t n = mb.actions.size();
  if (n == 0) throw std::invalid_argument("ppo: empty minibatch");
  if (mb.latents.count != n || mb.logp_old.size() != n || mb.advantages.size() != n || mb.returns.size() != n) {
    throw ShapeError("ppo: minibatch fields have inconsistent lengths");
  }
  auto out = policy(mb.latents, codebook);
  Tensor<T> logsm = ops::log_softmax(out.logits);
  Tensor<T> logp = ops::pick(logsm, mb.actions);

  auto constant = [n](const std::vector<double>& v) {
    return Tensor<T>(Shape{n}, std::vector<T>(v.begin(), v.end()));
  };
  Tensor<T> ratio = ops::exp(ops::sub(logp, constant(mb.logp_old)));
  Tensor<T> adv = constant(mb.advantages);
  const T eps = static_cast<T>(cfg.clip_eps);
  Tensor<T> surr = ops::minimum(ops::mul(ratio, adv), ops::mul(ops::clamp(ratio, T(1) - eps, T(1) + eps), adv));
  Tensor<T> policy_loss = ops::mul_scalar(ops::mean(surr), T(-1));

  Tensor<T> verr = ops::sub(out.value, constant(mb.returns));
  Tensor<T> value_loss = ops::mean(ops::mul(verr, verr));

  // Mean entropy per sample: -sum_a p log p, averaged over the batch.
  Tensor<T> entropy = ops::mul_scalar(ops::sum(ops::mul(ops::exp(logsm), logsm)), T(-1) / static_cast<T>(n));

  Tensor<T> total = ops::add(ops::add(policy_loss, ops::mul_scalar(value_loss, static_cast<T>(cfg.value_coef))),
                             ops::mul_scalar(entropy, static_cast<T>(-cfg.entropy_coef)));

  double clipped = 0, kl = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double rho = ratio.data()[i];
    if (std::abs(rho - 1.0) > cfg.clip_eps) clipped += 1;
    kl += (rho - 1.0) - std::log(rho);
  }
  stats.policy_loss = policy_loss.item();
  stats.value_loss = value_loss.item();
  stats.entropy = entropy.item();
  stats.clip_fraction = clipped / static_cast<double>(n);
  stats.approx_kl = kl / static_cast<double>(n);
  return total;
}

template <typename T>
PPOStats ppo_update(const Policy<T>& policy, const Codebook<T>& codebook, const TrajectoryBatch& batch,
                    const PPOConfig& cfg, Adam<T>& opt, Rng& rng) {
  cfg.validate();
  const std::size_t total = batch.size();
  if (total == 0) throw std::invalid_argument("ppo: empty trajectory batch");
  if (batch.latents.size() != batch.horizon || batch.actions.size() != total || batch.logp_old.size() != total ||
      batch.rewards.size() != total || batch.values_old.size() != total ||
      batch.bootstrap_values.size() != batch.envs) {
    throw ShapeError("ppo: trajectory batch fields have inconsistent lengths");
  }

  std::vector<double> adv(total), ret(total);
  std::vector<double> r(batch.horizon), v(batch.horizon);
  for (std::size_t e = 0; e < batch.envs; ++e) {
    for (std::size_t t = 0; t < batch.horizon; ++t) {
      r[t] = batch.rewards[t * batch.envs + e];
      v[t] = batch.values_old[t * batch.envs + e];
    }
    auto g = compute_gae(r, v, batch.bootstrap_values[e], cfg.gamma, cfg.gae_lambda);
    for (std::size_t t = 0; t < batch.horizon; ++t) {
      adv[t * batch.envs + e] = g.advantages[t];
      ret[t * batch.envs + e] = g.returns[t];
    }
  }
  const double mean = std::accumulate(adv.begin(), adv.end(), 0.0) / static_cast<double>(total);
  double var = 0;
  for (double a : adv) var += (a - mean) * (a - mean);
  const double sd = std::sqrt(var / static_cast<double>(total));
  for (double& a : adv) a = (a - mean) / (sd + 1e-8);

  const std::size_t cells = batch.latents.front().cells();
  std::vector<std::size_t> order(total);
  PPOStats sum;
  std::size_t updates = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = total; i > 1; --i) std::swap(order[i - 1], order[rng.uniform_index(i)]);
    for (std::size_t start = 0; start < total; start += cfg.minibatch) {
      const std::size_t end = std::min(total, start + cfg.minibatch);
      PPOMinibatch mb;
      mb.latents = {end - start, batch.latents.front().height, batch.latents.front().width, {}};
      mb.latents.indices.reserve((end - start) * cells);
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t idx = order[k];
        const LatentBatch& step = batch.latents[idx / batch.envs];
        const std::size_t e = idx % batch.envs;
        mb.latents.indices.insert(mb.latents.indices.end(), step.indices.begin() + e * cells,
                                  step.indices.begin() + (e + 1) * cells);
        mb.actions.push_back(batch.actions[idx]);
        mb.logp_old.push_back(batch.logp_old[idx]);
        mb.advantages.push_back(adv[idx]);
        mb.returns.push_back(ret[idx]);
      }
      PPOStats s;
      Tensor<T> loss = ppo_loss(policy, codebook, mb, cfg, s);
      opt.zero_grad();
      loss.backward();
      opt.step();
      sum.policy_loss += s.policy_loss;
      sum.value_loss += s.value_loss;
      sum.entropy += s.entropy;
      sum.clip_fraction += s.clip_fraction;
      sum.approx_kl += s.approx_kl;
      ++updates;
    }
  }
  const double inv = 1.0 / static_cast<double>(updates);
  sum.policy_loss *= inv;
  sum.value_loss *= inv;
  sum.entropy *= inv;
  sum.clip_fraction *= inv;
  sum.approx_kl *= inv;
  return sum;
}

#define LDWM_INSTANTIATE_PPO(T)                                                                              \
  template Tensor<T> ppo_loss<T>(const Policy<T>&, const Codebook<T>&, const PPOMinibatch&, const PPOConfig&, \
                                 PPOStats&);                                                                 \
  template PPOStats ppo_update<T>(const Policy<T>&, const Codebook<T>&, const TrajectoryBatch&,              \
                                  const PPOConfig&, Adam<T>&, Rng&);

LDWM_INSTANTIATE_PPO(float)
LDWM_INSTANTIATE_PPO(double)

}  // namespace ldwm
