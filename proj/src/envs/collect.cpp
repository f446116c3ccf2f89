#include "ldwm/envs/collect.hpp"

#include <cmath>
#include <stdexcept>

#include "ldwm/dynamics/reward.hpp"

namespace ldwm {

ActionSource random_actions(std::size_t actions) {
  return [actions](std::span<const float>, Rng& rng) { return static_cast<int>(rng.uniform_index(actions)); };
}

Collector::Collector(std::unique_ptr<Environment> env, PreprocessConfig pre)
    : env_(std::move(env)), pre_(pre), stack_(pre.stack, pre.height * pre.width) {
  if (!env_) throw std::invalid_argument("collector: no environment");
}

void Collector::start_episode(ReplayBuffer& buffer) {
  auto frame = preprocess(env_->reset(), pre_);
  stack_.reset(frame);
  buffer.begin_episode(frame);
  in_episode_ = true;
}

std::size_t Collector::collect(const ActionSource& source, std::size_t n_steps, ReplayBuffer& buffer, Rng& rng) {
  if (n_steps == 0) throw std::invalid_argument("collect: n_steps must be positive");
  if (buffer.size() + n_steps > buffer.capacity()) throw std::length_error("collect: interaction budget exceeded");
  for (std::size_t i = 0; i < n_steps; ++i) {
    if (!in_episode_) start_episode(buffer);
    const auto obs = stack_.observation();
    const int a = source(obs, rng);
    StepResult r = env_->step(a);
    auto frame = preprocess(r.frame, pre_);
    stack_.push(frame);
    buffer.append(a, clip_reward(r.reward), frame);
    if (r.done) in_episode_ = false;
    ++total_;
  }
  return n_steps;
}

void Collector::serialize(ByteWriter& w) const {
  w.str(env_->save_state());
  w.u8(in_episode_);
  w.u64(total_);
  w.f32s(in_episode_ ? stack_.observation() : std::vector<float>{});
}

void Collector::deserialize(ByteReader& r) {
  env_->load_state(r.str());
  in_episode_ = r.u8() != 0;
  total_ = r.u64();
  auto obs = r.f32s<float>();
  if (in_episode_) {
    const std::size_t fs = pre_.height * pre_.width;
    if (obs.size() != pre_.stack * fs) throw std::invalid_argument("collector: stacked observation size mismatch");
    stack_.reset(std::span<const float>(obs.data(), fs));
    for (std::size_t s = 1; s < pre_.stack; ++s) stack_.push(std::span<const float>(obs.data() + s * fs, fs));
  }
}

EpisodeStats run_episodes(Environment& env, const PreprocessConfig& pre, const ActionSource& source,
                          std::size_t episodes, Rng& rng) {
  if (episodes == 0) throw std::invalid_argument("run_episodes: need at least one episode");
  EpisodeStats s;
  FrameStack stack(pre.stack, pre.height * pre.width);
  for (std::size_t e = 0; e < episodes; ++e) {
    stack.reset(preprocess(env.reset(), pre));
    double ret = 0;
    for (;;) {
      StepResult r = env.step(source(stack.observation(), rng));
      ret += r.reward;
      ++s.steps;
      if (r.done) break;
      stack.push(preprocess(r.frame, pre));
    }
    s.returns.push_back(ret);
  }
  for (double r : s.returns) s.mean += r;
  s.mean /= static_cast<double>(episodes);
  for (double r : s.returns) s.std += (r - s.mean) * (r - s.mean);
  s.std = std::sqrt(s.std / static_cast<double>(episodes));
  return s;
}

}  // namespace ldwm
