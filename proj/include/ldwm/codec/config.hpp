#pragma once

#include <cstddef>
#include <vector>

namespace ldwm {

struct CodecConfig {
  std::size_t stack = 4;  // frames per observation
  std::size_t height = 32;
  std::size_t width = 32;
  std::vector<std::size_t> channels{32, 64, 64};  // one stride-2 block per entry
  std::size_t embed_dim = 16;                     // E
  std::size_t codebook_size = 64;                 // K
  double beta = 0.25;                             // commitment weight
  double leaky_slope = 0.01;

  std::size_t grid_height() const { return height >> channels.size(); }
  std::size_t grid_width() const { return width >> channels.size(); }
  /// Throws std::invalid_argument on an inconsistent configuration.
  void validate() const;
};

}  // namespace ldwm
