#include "ldwm/dream/dream.hpp"

#include <stdexcept>

#include "ldwm/dynamics/reward.hpp"

namespace ldwm {

InitialPool InitialPool::from_observations(std::vector<float> data, std::size_t observation_size) {
  if (observation_size == 0 || data.size() % observation_size != 0) {
    throw std::invalid_argument("initial pool: data is not a whole number of observations");
  }
  auto shared = std::make_shared<const std::vector<float>>(std::move(data));
  InitialPool pool;
  pool.count = shared->size() / observation_size;
  pool.observation_size = observation_size;
  pool.fetch = [shared, observation_size](std::size_t i, std::span<float> out) {
    std::copy_n(shared->begin() + static_cast<std::ptrdiff_t>(i * observation_size), observation_size, out.begin());
  };
  return pool;
}

namespace {

template <typename T>
DreamBatch<T> reset_from(const InitialPool& pool, Encoder<T>& encoder, const Codebook<T>& codebook,
                         const DynamicsNetwork<T>& dynamics, std::size_t batch,
                         const std::function<Rng&(std::size_t)>& rng_for) {
  if (pool.count == 0) throw std::invalid_argument("dream_reset: empty initial pool");
  if (batch == 0) throw std::invalid_argument("dream_reset: empty batch");
  const auto& cc = encoder.config();
  if (pool.observation_size != cc.stack * cc.height * cc.width) {
    throw ShapeError("dream_reset: pool observations do not match the encoder input");
  }
  DreamBatch<T> s;
  s.origin.resize(batch);
  std::vector<T> obs(batch * pool.observation_size);
  std::vector<float> tmp(pool.observation_size);
  for (std::size_t b = 0; b < batch; ++b) {
    s.origin[b] = rng_for(b).uniform_index(pool.count);
    pool.fetch(s.origin[b], tmp);
    std::copy(tmp.begin(), tmp.end(), obs.begin() + static_cast<std::ptrdiff_t>(b * pool.observation_size));
  }
  s.z = encode_latents(encoder, codebook, Tensor<T>(Shape{batch, cc.stack, cc.height, cc.width}, std::move(obs)));
  s.h = dynamics.zero_state(batch);
  s.step.assign(batch, 0);
  return s;
}

}  // namespace

template <typename T>
DreamBatch<T> dream_reset(const InitialPool& pool, Encoder<T>& encoder, const Codebook<T>& codebook,
                          const DynamicsNetwork<T>& dynamics, std::span<Rng> rngs) {
  return reset_from<T>(pool, encoder, codebook, dynamics, rngs.size(),
                       [&](std::size_t b) -> Rng& { return rngs[b]; });
}

template <typename T>
DreamBatch<T> dream_reset(const InitialPool& pool, Encoder<T>& encoder, const Codebook<T>& codebook,
                          const DynamicsNetwork<T>& dynamics, std::size_t batch, Rng& rng) {
  return reset_from<T>(pool, encoder, codebook, dynamics, batch, [&](std::size_t) -> Rng& { return rng; });
}

template <typename T>
DreamStepResult dream_step(DreamBatch<T>& state, std::span<const int> actions, const DynamicsNetwork<T>& dynamics,
                           const Codebook<T>& codebook, std::size_t horizon, std::span<Rng> rngs) {
  const std::size_t n = state.z.count;
  if (actions.size() != n || rngs.size() != n) throw ShapeError("dream_step: one action and generator per slot");
  for (std::size_t s : state.step) {
    if (s >= horizon) throw std::logic_error("dream_step: slot already reached the horizon");
  }
  NoGradGuard guard;
  auto out = dynamics.forward(state.z, actions, state.h, codebook);
  Tensor<T> rlogits = dynamics.predict_reward(out.y);
  Tensor<T> zlogits = dynamics.predict_next_latent(out.y);

  DreamStepResult r;
  r.rewards.resize(n);
  r.truncated.resize(n);
  for (std::size_t b = 0; b < n; ++b) {
    const std::size_t cat = rngs[b].categorical_logits(std::span<const T>(rlogits.data().subspan(b * 3, 3)));
    r.rewards[b] = category_to_reward(static_cast<int>(cat) + 1);
  }
  state.z = sample_next_latent(zlogits, rngs);
  state.h = out.state;
  for (std::size_t b = 0; b < n; ++b) {
    ++state.step[b];
    r.truncated[b] = state.step[b] == horizon;
  }
  return r;
}

template <typename T>
TrajectoryBatch rollout_dreams(const Policy<T>& policy, const DynamicsNetwork<T>& dynamics, Encoder<T>& encoder,
                               const Codebook<T>& codebook, const InitialPool& pool, const DreamConfig& cfg,
                               std::span<Rng> rngs) {
  if (cfg.horizon == 0) throw std::invalid_argument("rollout_dreams: horizon must be positive");
  if (cfg.burn_in != 0) throw std::invalid_argument("rollout_dreams: burn-in is not supported");
  const std::size_t n = rngs.size();
  DreamBatch<T> state = dream_reset(pool, encoder, codebook, dynamics, rngs);
  TrajectoryBatch tb;
  tb.envs = n;
  tb.horizon = cfg.horizon;
  tb.latents.reserve(cfg.horizon);
  for (std::size_t t = 0; t < cfg.horizon; ++t) {
    ActResult a = act(policy, codebook, state.z, rngs);
    tb.latents.push_back(state.z);
    DreamStepResult r = dream_step(state, a.actions, dynamics, codebook, cfg.horizon, rngs);
    for (std::size_t b = 0; b < n; ++b) {
      tb.actions.push_back(a.actions[b]);
      tb.logp_old.push_back(a.logp[b]);
      tb.values_old.push_back(a.values[b]);
      tb.rewards.push_back(r.rewards[b]);
      tb.truncated.push_back(r.truncated[b]);
    }
  }
  NoGradGuard guard;
  auto last = policy(state.z, codebook);
  tb.bootstrap_values.assign(last.value.data().begin(), last.value.data().end());
  return tb;
}

#define LDWM_INSTANTIATE_DREAM(T)                                                                                  \
  template DreamBatch<T> dream_reset<T>(const InitialPool&, Encoder<T>&, const Codebook<T>&,                       \
                                        const DynamicsNetwork<T>&, std::span<Rng>);                                \
  template DreamBatch<T> dream_reset<T>(const InitialPool&, Encoder<T>&, const Codebook<T>&,                       \
                                        const DynamicsNetwork<T>&, std::size_t, Rng&);                             \
  template DreamStepResult dream_step<T>(DreamBatch<T>&, std::span<const int>, const DynamicsNetwork<T>&,          \
                                         const Codebook<T>&, std::size_t, std::span<Rng>);                         \
  template TrajectoryBatch rollout_dreams<T>(const Policy<T>&, const DynamicsNetwork<T>&, Encoder<T>&,             \
                                             const Codebook<T>&, const InitialPool&, const DreamConfig&,           \
                                             std::span<Rng>);

LDWM_INSTANTIATE_DREAM(float)
LDWM_INSTANTIATE_DREAM(double)

}  // namespace ldwm
