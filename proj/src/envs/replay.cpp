#include "ldwm/envs/replay.hpp"

#include <algorithm>
#include <stdexcept>

namespace ldwm {

ReplayBuffer::ReplayBuffer(std::size_t stack, std::size_t height, std::size_t width, std::size_t capacity)
    : stack_(stack), height_(height), width_(width), capacity_(capacity) {
  if (stack == 0 || height == 0 || width == 0) throw std::invalid_argument("replay: empty observation shape");
}

void ReplayBuffer::begin_episode(std::span<const float> frame) {
  if (frame.size() != frame_size()) throw std::invalid_argument("replay: frame size mismatch");
  episode_first_frame_.push_back(frame_episode_.size());
  frames_.insert(frames_.end(), frame.begin(), frame.end());
  frame_episode_.push_back(episodes_);
  ++episodes_;
}

void ReplayBuffer::append(int action, int reward, std::span<const float> next_frame) {
  if (episodes_ == 0) throw std::logic_error("replay: append before begin_episode");
  if (size() >= capacity_) throw std::length_error("replay: interaction budget exhausted");
  if (next_frame.size() != frame_size()) throw std::invalid_argument("replay: frame size mismatch");
  if (reward < -1 || reward > 1) throw std::invalid_argument("replay: reward must be clipped");
  const std::uint32_t ep = episodes_ - 1;
  const std::size_t f = frame_episode_.size() - 1;
  transitions_.push_back({action, reward, ep, static_cast<std::uint32_t>(f - episode_first_frame_[ep]), f});
  frames_.insert(frames_.end(), next_frame.begin(), next_frame.end());
  frame_episode_.push_back(ep);
}

void ReplayBuffer::frame_observation(std::size_t f, std::span<float> out) const {
  if (f >= frame_episode_.size()) throw std::out_of_range("replay: frame index");
  if (out.size() != observation_size()) throw std::invalid_argument("replay: output size mismatch");
  const std::size_t first = episode_first_frame_[frame_episode_[f]];
  const std::size_t fs = frame_size();
  for (std::size_t s = 0; s < stack_; ++s) {
    const std::size_t back = stack_ - 1 - s;
    const std::size_t src = f >= first + back ? f - back : first;
    std::copy_n(frames_.begin() + static_cast<std::ptrdiff_t>(src * fs), fs, out.begin() + static_cast<std::ptrdiff_t>(s * fs));
  }
}

std::vector<float> ReplayBuffer::observation(std::size_t i) const {
  std::vector<float> out(observation_size());
  frame_observation(at(i).frame, out);
  return out;
}

std::vector<float> ReplayBuffer::next_observation(std::size_t i) const {
  std::vector<float> out(observation_size());
  frame_observation(at(i).frame + 1, out);
  return out;
}

bool ReplayBuffer::window_valid(std::size_t start, std::size_t len) const {
  if (len == 0 || start + len > size()) return false;
  const Transition& a = transitions_[start];
  const Transition& b = transitions_[start + len - 1];
  return a.episode == b.episode && b.step - a.step == len - 1;
}

std::vector<std::size_t> ReplayBuffer::window_starts(std::size_t len) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i + len <= size(); ++i) {
    if (window_valid(i, len)) out.push_back(i);
  }
  return out;
}

void ReplayBuffer::serialize(ByteWriter& w) const {
  w.u64(stack_);
  w.u64(height_);
  w.u64(width_);
  w.u64(capacity_);
  w.u32(episodes_);
  w.u64(frames_.size());
  w.raw(frames_.data(), frames_.size() * sizeof(float));
  w.u64(frame_episode_.size());
  for (auto e : frame_episode_) w.u32(e);
  w.u64(episode_first_frame_.size());
  for (auto f : episode_first_frame_) w.u64(f);
  w.u64(transitions_.size());
  for (const auto& t : transitions_) {
    w.i32(t.action);
    w.i32(t.reward);
    w.u32(t.episode);
    w.u32(t.step);
    w.u64(t.frame);
  }
}

ReplayBuffer ReplayBuffer::deserialize(ByteReader& r) {
  ReplayBuffer b;
  b.stack_ = r.u64();
  b.height_ = r.u64();
  b.width_ = r.u64();
  b.capacity_ = r.u64();
  b.episodes_ = r.u32();
  const std::size_t nf = r.u64();
  if (nf > r.remaining() / sizeof(float)) throw TruncatedError("replay: truncated frames");
  b.frames_.resize(nf);
  std::memcpy(b.frames_.data(), r.raw(nf * sizeof(float)), nf * sizeof(float));
  b.frame_episode_.resize(r.u64());
  for (auto& e : b.frame_episode_) e = r.u32();
  b.episode_first_frame_.resize(r.u64());
  for (auto& f : b.episode_first_frame_) f = r.u64();
  b.transitions_.resize(r.u64());
  for (auto& t : b.transitions_) {
    t.action = r.i32();
    t.reward = r.i32();
    t.episode = r.u32();
    t.step = r.u32();
    t.frame = r.u64();
  }
  return b;
}

}  // namespace ldwm
