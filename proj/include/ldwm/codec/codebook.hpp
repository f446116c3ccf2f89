#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ldwm/core/rng.hpp"
#include "ldwm/numerics/layers.hpp"

namespace ldwm {

/// One h x w grid of codebook indices.
struct LatentGrid {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<int> indices;  // row-major, each in [0, K)

  bool operator==(const LatentGrid&) const = default;
};

/// n grids stored contiguously; index (b, i, j) at b*h*w + i*w + j.
struct LatentBatch {
  std::size_t count = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<int> indices;

  std::size_t cells() const { return height * width; }
  LatentGrid grid(std::size_t b) const;
  static LatentBatch from_grids(std::span<const LatentGrid> grids);
  static LatentBatch single(const LatentGrid& g) { return from_grids(std::span<const LatentGrid>(&g, 1)); }

  bool operator==(const LatentBatch&) const = default;
};

/// K x E table of embedding vectors.
template <typename T>
class Codebook {
 public:
  Codebook() = default;
  /// Entries drawn from U(-1/K, 1/K).
  Codebook(std::size_t entries, std::size_t dim, Rng& rng);

  std::size_t entries() const { return embeddings.size(0); }
  std::size_t dim() const { return embeddings.size(1); }
  void collect(const std::string& prefix, ParamList<T>& out) const { out.push_back({prefix, embeddings}); }

  Tensor<T> embeddings;  // [K, E]
};

template <typename T>
struct Quantized {
  LatentBatch latents;
  Tensor<T> quantized;        // straight-through: value of the selected entries, gradient to the features
  Tensor<T> codebook_loss;    // sum ||sg(f) - e||^2 / cells
  Tensor<T> commitment_loss;  // sum ||f - sg(e)||^2 / cells
};

/// Nearest-entry assignment for every cell of features [N, E, h, w].
/// Ties go to the lowest index.
template <typename T>
Quantized<T> quantize(const Tensor<T>& features, const Codebook<T>& codebook);

/// Indices only, without building any graph.
template <typename T>
LatentBatch nearest_indices(const Tensor<T>& features, const Codebook<T>& codebook);

/// Gathers codebook rows into [N, E, h, w]; differentiable into the codebook.
template <typename T>
Tensor<T> lookup(const LatentBatch& z, const Codebook<T>& codebook);

/// Same gather from a frozen copy of the table (no gradient to the codebook).
template <typename T>
Tensor<T> lookup_detached(const LatentBatch& z, const Codebook<T>& codebook);

}  // namespace ldwm
