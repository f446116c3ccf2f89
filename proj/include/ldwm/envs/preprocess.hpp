#pragma once

#include <array>
#include <deque>
#include <span>
#include <vector>

#include "ldwm/io/image.hpp"

namespace ldwm {

struct PreprocessConfig {
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t stack = 4;  // S
  std::array<double, 3> luma{0.299, 0.587, 0.114};
};

/// Grayscale frame [H x W] in [0, 1]: luma, then area-average resampling
/// (each output pixel is the overlap-weighted mean of the source pixels it
/// covers), then clamp.
std::vector<float> preprocess(const Image& frame, const PreprocessConfig& cfg);

/// Rolling window of the last S preprocessed frames. The first frame of an
/// episode fills every slot.
class FrameStack {
 public:
  FrameStack() = default;
  FrameStack(std::size_t stack, std::size_t frame_size) : stack_(stack), frame_size_(frame_size) {}

  void reset(std::span<const float> first);
  void push(std::span<const float> frame);
  /// [S x H x W], oldest frame first.
  std::vector<float> observation() const;
  std::size_t stack() const { return stack_; }

 private:
  std::size_t stack_ = 1;
  std::size_t frame_size_ = 0;
  std::deque<std::vector<float>> frames_;
};

}  // namespace ldwm
