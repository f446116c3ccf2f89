#include "ldwm/codec/codebook.hpp"

#include <stdexcept>
#include <string>

#include "ldwm/numerics/ops.hpp"

namespace ldwm {

LatentGrid LatentBatch::grid(std::size_t b) const {
  if (b >= count) throw std::out_of_range("latent batch: grid " + std::to_string(b) + " of " + std::to_string(count));
  LatentGrid g{height, width, {}};
  g.indices.assign(indices.begin() + b * cells(), indices.begin() + (b + 1) * cells());
  return g;
}

LatentBatch LatentBatch::from_grids(std::span<const LatentGrid> grids) {
  LatentBatch out;
  if (grids.empty()) return out;
  out.height = grids[0].height;
  out.width = grids[0].width;
  out.count = grids.size();
  for (const auto& g : grids) {
    if (g.height != out.height || g.width != out.width || g.indices.size() != out.cells()) {
      throw ShapeError("latent batch: grids of mixed shape");
    }
    out.indices.insert(out.indices.end(), g.indices.begin(), g.indices.end());
  }
  return out;
}

template <typename T>
Codebook<T>::Codebook(std::size_t entries, std::size_t dim, Rng& rng) : embeddings(make_param<T>({entries, dim})) {
  if (entries < 2) throw std::invalid_argument("codebook: need at least 2 entries");
  const double bound = 1.0 / static_cast<double>(entries);
  for (auto& v : embeddings.data()) v = static_cast<T>(rng.uniform(-bound, bound));
}

namespace {

template <typename T>
void check_features(const Tensor<T>& features, const Codebook<T>& codebook) {
  if (!features.defined() || features.dim() != 4) throw ShapeError("quantize: features must be [N, E, h, w]");
  if (features.size(1) != codebook.dim()) {
    throw ShapeError("quantize: feature width " + std::to_string(features.size(1)) + " does not match codebook width " +
                     std::to_string(codebook.dim()));
  }
}

}  // namespace

template <typename T>
LatentBatch nearest_indices(const Tensor<T>& features, const Codebook<T>& codebook) {
  check_features(features, codebook);
  const std::size_t n = features.size(0), e = features.size(1), h = features.size(2), w = features.size(3);
  const std::size_t plane = h * w, k = codebook.entries();
  LatentBatch out{n, h, w, std::vector<int>(n * plane)};
  auto f = features.data();
  auto cb = codebook.embeddings.data();
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t p = 0; p < plane; ++p) {
      double best = 0;
      int best_k = -1;
      for (std::size_t c = 0; c < k; ++c) {
        double d = 0;
        for (std::size_t j = 0; j < e; ++j) {
          const double diff = static_cast<double>(f[(b * e + j) * plane + p]) - static_cast<double>(cb[c * e + j]);
          d += diff * diff;
        }
        if (best_k < 0 || d < best) {
          best = d;
          best_k = static_cast<int>(c);
        }
      }
      out.indices[b * plane + p] = best_k;
    }
  }
  return out;
}

template <typename T>
Quantized<T> quantize(const Tensor<T>& features, const Codebook<T>& codebook) {
  Quantized<T> r;
  r.latents = nearest_indices(features, codebook);
  const LatentBatch& z = r.latents;
  const T cells = static_cast<T>(z.count * z.cells());
  Tensor<T> selected = lookup(z, codebook);
  Tensor<T> d_cb = ops::sub(features.detach(), selected);
  r.codebook_loss = ops::mul_scalar(ops::sum(ops::mul(d_cb, d_cb)), T(1) / cells);
  Tensor<T> d_commit = ops::sub(features, selected.detach());
  r.commitment_loss = ops::mul_scalar(ops::sum(ops::mul(d_commit, d_commit)), T(1) / cells);
  r.quantized = ops::straight_through(features, selected.detach());
  return r;
}

template <typename T>
Tensor<T> lookup(const LatentBatch& z, const Codebook<T>& codebook) {
  return ops::embedding(codebook.embeddings, z.indices, z.count, z.height, z.width);
}

template <typename T>
Tensor<T> lookup_detached(const LatentBatch& z, const Codebook<T>& codebook) {
  NoGradGuard guard;
  return ops::embedding(codebook.embeddings, z.indices, z.count, z.height, z.width);
}

#define LDWM_INSTANTIATE_CODEBOOK(T)                                               \
  template class Codebook<T>;                                                      \
  template Quantized<T> quantize<T>(const Tensor<T>&, const Codebook<T>&);         \
  template LatentBatch nearest_indices<T>(const Tensor<T>&, const Codebook<T>&);   \
  template Tensor<T> lookup<T>(const LatentBatch&, const Codebook<T>&);            \
  template Tensor<T> lookup_detached<T>(const LatentBatch&, const Codebook<T>&);

LDWM_INSTANTIATE_CODEBOOK(float)
LDWM_INSTANTIATE_CODEBOOK(double)

}  // namespace ldwm
