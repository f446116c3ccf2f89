#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ldwm/io/bytes.hpp"

namespace ldwm {

struct Transition {
  int action = 0;
  int reward = 0;  // clipped, in {-1, 0, 1}
  std::uint32_t episode = 0;
  std::uint32_t step = 0;    // index within the episode
  std::size_t frame = 0;     // frame index of the observation before the action

  bool operator==(const Transition&) const = default;
};

/// Append-only store of real experience. Frames are kept once each; the
/// stacked observation of a transition is rebuilt from the frames of its
/// episode (repeating the first frame at the start), and the next
/// observation of transition i is the stack ending at frame i.frame + 1.
class ReplayBuffer {
 public:
  ReplayBuffer() = default;
  ReplayBuffer(std::size_t stack, std::size_t height, std::size_t width, std::size_t capacity);

  /// Opens a new episode whose first frame is `frame`.
  void begin_episode(std::span<const float> frame);
  /// Records (action, clipped reward) and the frame that followed. Throws
  /// std::length_error at capacity.
  void append(int action, int reward, std::span<const float> next_frame);

  std::size_t size() const { return transitions_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::size_t stack() const { return stack_; }
  std::size_t frame_size() const { return height_ * width_; }
  std::size_t observation_size() const { return stack_ * frame_size(); }
  std::size_t frame_count() const { return frame_episode_.size(); }
  std::uint32_t episodes() const { return episodes_; }

  const Transition& at(std::size_t i) const { return transitions_.at(i); }
  /// Stacked observation ending at frame f, written to out (observation_size()).
  void frame_observation(std::size_t f, std::span<float> out) const;
  std::vector<float> observation(std::size_t i) const;
  std::vector<float> next_observation(std::size_t i) const;

  /// True when transitions [start, start + len) lie in one episode.
  bool window_valid(std::size_t start, std::size_t len) const;
  /// All starts of valid windows of `len` transitions, ascending.
  std::vector<std::size_t> window_starts(std::size_t len) const;

  void serialize(ByteWriter& w) const;
  static ReplayBuffer deserialize(ByteReader& r);

  bool operator==(const ReplayBuffer&) const = default;

 private:
  std::size_t stack_ = 1, height_ = 0, width_ = 0, capacity_ = 0;
  std::uint32_t episodes_ = 0;
  std::vector<float> frames_;
  std::vector<std::uint32_t> frame_episode_;
  std::vector<std::size_t> episode_first_frame_;
  std::vector<Transition> transitions_;
};

}  // namespace ldwm
