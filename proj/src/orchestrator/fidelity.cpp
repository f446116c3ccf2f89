#include "ldwm/orchestrator/fidelity.hpp"

#include <algorithm>
#include <stdexcept>

#include "ldwm/numerics/ops.hpp"

namespace ldwm {

FidelityReport world_model_fidelity(Trainer& trainer, const ReplayBuffer& held_out, std::size_t window) {
  if (window == 0) throw std::invalid_argument("fidelity: window must be positive");
  std::vector<std::size_t> starts;
  for (std::size_t s = 0; s + window <= held_out.size();) {
    if (held_out.window_valid(s, window)) {
      starts.push_back(s);
      s += window;
    } else {
      ++s;
    }
  }
  if (starts.empty()) throw std::invalid_argument("fidelity: held-out data holds no complete window");
  auto& codec = trainer.codec();
  auto& dyn = trainer.dynamics();
  const std::size_t n = starts.size();
  const auto& cc = trainer.config().codec;
  const std::size_t os = held_out.observation_size();

  // Encode every needed frame, step-major.
  std::vector<float> data((window + 1) * n * os);
  for (std::size_t t = 0; t <= window; ++t) {
    for (std::size_t b = 0; b < n; ++b) {
      const std::size_t f = t < window ? held_out.at(starts[b] + t).frame : held_out.at(starts[b] + window - 1).frame + 1;
      held_out.frame_observation(f, std::span<float>(data.data() + (t * n + b) * os, os));
    }
  }
  LatentBatch all = encode_latents(codec.encoder, codec.codebook,
                                   Tensor<float>(Shape{(window + 1) * n, cc.stack, cc.height, cc.width}, std::move(data)));
  const std::size_t cells = all.cells();
  auto step_grids = [&](std::size_t t) {
    LatentBatch z{n, all.height, all.width, {}};
    z.indices.assign(all.indices.begin() + static_cast<std::ptrdiff_t>(t * n * cells),
                     all.indices.begin() + static_cast<std::ptrdiff_t>((t + 1) * n * cells));
    return z;
  };

  NoGradGuard guard;
  std::size_t cell_hits = 0, reward_hits = 0;
  RecurrentState<float> h = dyn.zero_state(n);
  const std::size_t K = dyn.config().codebook_size;
  for (std::size_t t = 0; t < window; ++t) {
    std::vector<int> actions(n);
    for (std::size_t b = 0; b < n; ++b) actions[b] = held_out.at(starts[b] + t).action;
    auto out = dyn.forward(step_grids(t), actions, h, codec.codebook);
    h = out.state;
    Tensor<float> zl = dyn.predict_next_latent(out.y);
    Tensor<float> rl = dyn.predict_reward(out.y);
    const LatentBatch target = step_grids(t + 1);
    auto zd = zl.data();
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t c = 0; c < cells; ++c) {
        std::size_t best = 0;
        for (std::size_t k = 1; k < K; ++k) {
          if (zd[(b * K + k) * cells + c] > zd[(b * K + best) * cells + c]) best = k;
        }
        cell_hits += static_cast<int>(best) == target.indices[b * cells + c];
      }
      std::size_t rbest = 0;
      for (std::size_t k = 1; k < 3; ++k) {
        if (rl.data()[b * 3 + k] > rl.data()[b * 3 + rbest]) rbest = k;
      }
      reward_hits += static_cast<int>(rbest) + 1 == held_out.at(starts[b] + t).reward + 2;
    }
  }
  FidelityReport r;
  r.transitions = n * window;
  std::vector<bool> seen(K, false);
  for (int i : all.indices) seen[static_cast<std::size_t>(i)] = true;
  r.codes_used = static_cast<std::size_t>(std::count(seen.begin(), seen.end(), true));
  r.cell_accuracy = static_cast<double>(cell_hits) / static_cast<double>(r.transitions * cells);
  r.reward_accuracy = static_cast<double>(reward_hits) / static_cast<double>(r.transitions);
  return r;
}

ConsistencyReport dream_real_consistency(Trainer& trainer, std::size_t episodes, std::size_t slots,
                                         std::size_t horizon, std::uint64_t seed) {
  ConsistencyReport r;
  const EpisodeStats real = trainer.evaluate(episodes, seed);
  double total = 0;
  for (double v : real.returns) total += v;
  r.real_reward_per_step = total / static_cast<double>(real.steps);

  std::vector<Rng> rngs;
  for (std::size_t e = 0; e < slots; ++e) rngs.emplace_back(mix_seed(seed, 1000 + e));
  DreamConfig dc;
  dc.horizon = horizon;
  TrajectoryBatch tb = rollout_dreams(trainer.policy(), trainer.dynamics(), trainer.codec().encoder,
                                      trainer.codec().codebook, trainer.initial_pool(), dc, rngs);
  double s = 0;
  for (double v : tb.rewards) s += v;
  r.dream_reward_per_step = s / static_cast<double>(tb.rewards.size());
  return r;
}

}  // namespace ldwm
