#include "ldwm/envs/preprocess.hpp"

#include <algorithm>
#include <stdexcept>

namespace ldwm {

namespace {

// Overlap of source interval [i, i+1) with target pixel o scaled to source
// coordinates [o*r, (o+1)*r).
struct Tap {
  std::size_t src;
  double weight;
};

std::vector<std::vector<Tap>> area_taps(std::size_t src, std::size_t dst) {
  std::vector<std::vector<Tap>> taps(dst);
  const double r = static_cast<double>(src) / static_cast<double>(dst);
  for (std::size_t o = 0; o < dst; ++o) {
    const double lo = o * r, hi = (o + 1) * r;
    for (auto i = static_cast<std::size_t>(lo); i < src && static_cast<double>(i) < hi; ++i) {
      const double w = std::min(hi, i + 1.0) - std::max(lo, static_cast<double>(i));
      if (w > 0) taps[o].push_back({i, w / r});
    }
  }
  return taps;
}

}  // namespace

std::vector<float> preprocess(const Image& frame, const PreprocessConfig& cfg) {
  if (frame.channels != 1 && frame.channels != 3) throw std::invalid_argument("preprocess: 1 or 3 channels");
  if (frame.width == 0 || frame.height == 0 || frame.pixels.size() != frame.width * frame.height * frame.channels) {
    throw std::invalid_argument("preprocess: malformed frame");
  }
  std::vector<double> gray(frame.width * frame.height);
  for (std::size_t i = 0; i < gray.size(); ++i) {
    const std::uint8_t* p = frame.pixels.data() + i * frame.channels;
    gray[i] = frame.channels == 1 ? p[0] / 255.0
                                  : (cfg.luma[0] * p[0] + cfg.luma[1] * p[1] + cfg.luma[2] * p[2]) / 255.0;
  }
  const auto ty = area_taps(frame.height, cfg.height);
  const auto tx = area_taps(frame.width, cfg.width);
  std::vector<float> out(cfg.height * cfg.width);
  for (std::size_t oy = 0; oy < cfg.height; ++oy) {
    for (std::size_t ox = 0; ox < cfg.width; ++ox) {
      double acc = 0;
      for (const Tap& a : ty[oy]) {
        for (const Tap& b : tx[ox]) acc += a.weight * b.weight * gray[a.src * frame.width + b.src];
      }
      out[oy * cfg.width + ox] = static_cast<float>(std::clamp(acc, 0.0, 1.0));
    }
  }
  return out;
}

void FrameStack::reset(std::span<const float> first) {
  if (first.size() != frame_size_) throw std::invalid_argument("frame stack: frame size mismatch");
  frames_.assign(stack_, std::vector<float>(first.begin(), first.end()));
}

void FrameStack::push(std::span<const float> frame) {
  if (frames_.empty()) throw std::logic_error("frame stack: push before reset");
  if (frame.size() != frame_size_) throw std::invalid_argument("frame stack: frame size mismatch");
  frames_.pop_front();
  frames_.emplace_back(frame.begin(), frame.end());
}

std::vector<float> FrameStack::observation() const {
  if (frames_.empty()) throw std::logic_error("frame stack: no frames");
  std::vector<float> out;
  out.reserve(stack_ * frame_size_);
  for (const auto& f : frames_) out.insert(out.end(), f.begin(), f.end());
  return out;
}

}  // namespace ldwm
