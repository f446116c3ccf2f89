#include "ldwm/agent/policy.hpp"

#include <cmath>
#include <stdexcept>

#include "ldwm/numerics/ops.hpp"

namespace ldwm {

template <typename T>
Policy<T>::Policy(const PolicyConfig& cfg, Rng& rng) : cfg_(cfg) {
  if (cfg.actions < 2) throw std::invalid_argument("policy: need at least 2 actions");
  if (cfg.kernel % 2 == 0) throw std::invalid_argument("policy: kernel must be odd");
  const int pad = static_cast<int>(cfg.kernel / 2);
  const std::size_t h = cfg.grid_h, w = cfg.grid_w;
  conv1 = Conv2d<T>(cfg.embed_dim, cfg.conv1, cfg.kernel, 1, pad, true, rng);
  norm1 = LayerNorm<T>(Shape{cfg.conv1, h, w});
  conv2 = Conv2d<T>(cfg.conv1, cfg.conv2, cfg.kernel, 1, pad, true, rng);
  norm2 = LayerNorm<T>(Shape{cfg.conv2, h, w});
  trunk = Linear<T>(cfg.conv2 * h * w, cfg.hidden, true, rng);
  policy_head = Linear<T>(cfg.hidden, cfg.actions, true, rng);
  value_head = Linear<T>(cfg.hidden, 1, true, rng);
}

template <typename T>
PolicyOutput<T> Policy<T>::operator()(const LatentBatch& z, const Codebook<T>& codebook) const {
  if (z.height != cfg_.grid_h || z.width != cfg_.grid_w) throw ShapeError("policy: latent grid size mismatch");
  if (codebook.dim() != cfg_.embed_dim) throw ShapeError("policy: codebook width mismatch");
  const T slope = static_cast<T>(cfg_.leaky_slope);
  Tensor<T> x = lookup_detached(z, codebook);
  x = ops::leaky_relu(norm1(conv1(x)), slope);
  x = ops::leaky_relu(norm2(conv2(x)), slope);
  x = ops::reshape(x, {z.count, x.numel() / z.count});
  x = ops::leaky_relu(trunk(x), slope);
  return {policy_head(x), ops::reshape(value_head(x), {z.count})};
}

template <typename T>
ParamList<T> Policy<T>::parameters() const {
  ParamList<T> out;
  conv1.collect("policy.conv1", out);
  norm1.collect("policy.norm1", out);
  conv2.collect("policy.conv2", out);
  norm2.collect("policy.norm2", out);
  trunk.collect("policy.trunk", out);
  policy_head.collect("policy.logits", out);
  value_head.collect("policy.value", out);
  return out;
}

namespace {

template <typename T>
ActResult act_impl(const Policy<T>& policy, const Codebook<T>& codebook, const LatentBatch& z,
                   const std::function<Rng&(std::size_t)>& rng_for) {
  NoGradGuard guard;
  auto out = policy(z, codebook);
  const std::size_t n = z.count, m = out.logits.size(1);
  ActResult r;
  r.actions.resize(n);
  r.logp.resize(n);
  r.values.resize(n);
  auto lg = out.logits.data();
  for (std::size_t b = 0; b < n; ++b) {
    std::span<const T> row = lg.subspan(b * m, m);
    const std::size_t a = rng_for(b).categorical_logits(row);
    double mx = -INFINITY;
    for (T v : row) mx = std::max(mx, static_cast<double>(v));
    double s = 0;
    for (T v : row) s += std::exp(static_cast<double>(v) - mx);
    r.actions[b] = static_cast<int>(a);
    r.logp[b] = static_cast<double>(row[a]) - mx - std::log(s);
    r.values[b] = out.value.data()[b];
  }
  return r;
}

}  // namespace

template <typename T>
ActResult act(const Policy<T>& policy, const Codebook<T>& codebook, const LatentBatch& z, std::span<Rng> rngs) {
  if (rngs.size() != z.count) throw ShapeError("act: one generator per grid required");
  return act_impl<T>(policy, codebook, z, [&](std::size_t b) -> Rng& { return rngs[b]; });
}

template <typename T>
ActResult act(const Policy<T>& policy, const Codebook<T>& codebook, const LatentBatch& z, Rng& rng) {
  return act_impl<T>(policy, codebook, z, [&](std::size_t) -> Rng& { return rng; });
}

template class Policy<float>;
template class Policy<double>;
template ActResult act<float>(const Policy<float>&, const Codebook<float>&, const LatentBatch&, std::span<Rng>);
template ActResult act<double>(const Policy<double>&, const Codebook<double>&, const LatentBatch&, std::span<Rng>);
template ActResult act<float>(const Policy<float>&, const Codebook<float>&, const LatentBatch&, Rng&);
template ActResult act<double>(const Policy<double>&, const Codebook<double>&, const LatentBatch&, Rng&);

}  // namespace ldwm
