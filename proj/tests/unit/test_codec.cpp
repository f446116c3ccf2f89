#include <cmath>
#include <vector>

#include "doctest.h"
#include "ldwm/codec/codec.hpp"
#include "ldwm/codec/likelihood.hpp"
#include "ldwm/numerics/gradcheck.hpp"
#include "ldwm/numerics/ops.hpp"

using namespace ldwm;

namespace {

template <typename T>
Tensor<T> random_obs(Shape shape, std::uint64_t seed) {
  Rng rng(seed);
  Tensor<T> t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<T>(rng.uniform());
  return t;
}

CodecConfig micro_config() {
  CodecConfig c;
  c.stack = 1;
  c.height = 8;
  c.width = 8;
  c.channels = {2, 3};
  c.embed_dim = 2;
  c.codebook_size = 3;
  return c;
}

double ll_single(double logit, double x) {
  Tensor<double> l({1}, std::vector<double>{logit});
  Tensor<double> t({1}, std::vector<double>{x});
  return cb_log_likelihood(l, t).item();
}

// Normalizer from the lambda-space formula 2 atanh(1 - 2 lambda) / (1 - 2 lambda).
double oracle_log_c(double lambda) {
  const double u = 1.0 - 2.0 * lambda;
  return std::log(2.0 * std::atanh(u) / u);
}

void zero_all(const ParamList<float>& params) {
  for (auto p : params) {
    auto d = p.tensor.data();
    std::fill(d.begin(), d.end(), 0.0f);
  }
}

}  // namespace

TEST_CASE("encoder and decoder shapes for both layer stacks") {
  Rng rng(1);
  CodecConfig desk;
  Codec<float> codec(desk, rng);
  auto obs = random_obs<float>({2, 4, 32, 32}, 2);
  auto f = codec.encoder(obs, false);
  CHECK(f.shape() == Shape{2, 16, 4, 4});
  CHECK(codec.decoder(f).shape() == Shape{2, 4, 32, 32});

  CodecConfig paper;
  paper.height = paper.width = 96;
  paper.channels = {64, 64, 128, 128};
  paper.embed_dim = 32;
  paper.codebook_size = 128;
  Codec<float> big(paper, rng);
  auto fp = big.encoder(random_obs<float>({1, 4, 96, 96}, 3), false);
  CHECK(fp.shape() == Shape{1, 32, 6, 6});
  CHECK(big.decoder(fp).shape() == Shape{1, 4, 96, 96});
}

TEST_CASE("encoder rejects a mismatched observation") {
  Rng rng(1);
  Codec<float> codec(CodecConfig{}, rng);
  CHECK_THROWS_AS(codec.encoder(random_obs<float>({1, 3, 32, 32}, 1), false), ShapeError);
  CHECK_THROWS_AS(codec.decoder(Tensor<float>({1, 16, 5, 4})), ShapeError);
}

TEST_CASE("zeroed networks produce zero features and uniform pixels") {
  Rng rng(4);
  Codec<float> codec(CodecConfig{}, rng);
  ParamList<float> enc, dec;
  codec.encoder.collect(enc);
  codec.decoder.collect(dec);
  zero_all(enc);
  zero_all(dec);
  auto f = codec.encoder(random_obs<float>({1, 4, 32, 32}, 5), false);
  for (float v : f.data()) CHECK(v == 0.0f);
  auto logits = codec.decoder(f);
  for (float v : logits.data()) CHECK(v == 0.0f);
}

TEST_CASE("quantize examples") {
  Codebook<double> cb;
  cb.embeddings = Tensor<double>({2, 2}, std::vector<double>{1, 0, 0, 1});
  Tensor<double> f({1, 2, 1, 1}, std::vector<double>{0.9, 0.2});
  CHECK(quantize(f, cb).latents.indices[0] == 0);

  Rng rng(6);
  Codebook<double> cb5(5, 3, rng);
  auto e = cb5.embeddings.data();
  Tensor<double> exact({1, 3, 1, 1}, std::vector<double>{e[9], e[10], e[11]});
  auto q = quantize(exact, cb5);
  CHECK(q.latents.indices[0] == 3);
  CHECK(q.codebook_loss.item() == 0.0);
  CHECK(q.commitment_loss.item() == 0.0);

  // Zero is equidistant from entries 1 (-1) and 4 (+1).
  Codebook<double> sym;
  sym.embeddings = Tensor<double>({5, 1}, std::vector<double>{5, -1, 7, 9, 1});
  Tensor<double> zero({1, 1, 1, 1});
  CHECK(quantize(zero, sym).latents.indices[0] == 1);
}

TEST_CASE("quantize then lookup is idempotent") {
  Rng rng(7);
  Codebook<float> cb(8, 4, rng);
  auto f = random_obs<float>({2, 4, 3, 3}, 8);
  auto q = quantize(f, cb);
  auto looked = lookup(q.latents, cb);
  for (std::size_t i = 0; i < looked.numel(); ++i) CHECK(looked.data()[i] == q.quantized.data()[i]);
  auto again = quantize(looked.detach(), cb);
  CHECK(again.latents == q.latents);
  CHECK(again.codebook_loss.item() == 0.0f);
  CHECK(again.commitment_loss.item() == 0.0f);
}

TEST_CASE("quantize losses are mean squared distances per cell") {
  Codebook<double> cb;
  cb.embeddings = Tensor<double>({2, 2}, std::vector<double>{0, 0, 1, 1});
  Tensor<double> f({1, 2, 1, 2}, std::vector<double>{0.1, 0.8, 0.2, 0.9});
  auto q = quantize(f, cb);
  CHECK(q.latents.indices == std::vector<int>{0, 1});
  const double expect = ((0.01 + 0.04) + (0.04 + 0.01)) / 2.0;
  CHECK(q.codebook_loss.item() == doctest::Approx(expect).epsilon(1e-14));
  CHECK(q.commitment_loss.item() == doctest::Approx(expect).epsilon(1e-14));
}

TEST_CASE("straight-through gradient identity is exact") {
  Rng rng(9);
  Codebook<double> cb(6, 3, rng);
  auto f = random_obs<double>({2, 3, 2, 2}, 10);
  f.set_requires_grad(true);
  auto q = quantize(f, cb);
  // Loss defined on the quantized tensor only.
  auto sq = ops::mul(q.quantized, q.quantized);
  Tensor<double> probe = q.quantized.detach();
  probe.set_requires_grad(true);
  ops::sum(ops::mul(ops::mul(probe, probe), random_obs<double>({2, 3, 2, 2}, 11))).backward();
  ops::sum(ops::mul(sq, random_obs<double>({2, 3, 2, 2}, 11))).backward();
  for (std::size_t i = 0; i < f.numel(); ++i) CHECK(f.grad()[i] == probe.grad()[i]);
}

TEST_CASE("lookup gradient counts cell assignments") {
  Rng rng(12);
  Codebook<double> cb(4, 2, rng);
  LatentBatch z{1, 2, 3, {0, 2, 2, 3, 2, 0}};
  ops::sum(lookup(z, cb)).backward();
  const std::vector<double> counts{2, 0, 3, 1};
  for (std::size_t k = 0; k < 4; ++k) {
    CHECK(cb.embeddings.grad()[k * 2] == counts[k]);
    CHECK(cb.embeddings.grad()[k * 2 + 1] == counts[k]);
  }
  GradCheckOptions opts;
  auto r = finite_difference_check([&] { return ops::sum(lookup(z, cb)); }, {cb.embeddings}, opts);
  CHECK(r.passed);

  LatentBatch one{1, 1, 1, {3}};
  auto row = lookup(one, cb);
  CHECK(row.data()[0] == cb.embeddings.data()[6]);
  CHECK(row.data()[1] == cb.embeddings.data()[7]);

  LatentBatch bad{1, 1, 1, {4}};
  CHECK_THROWS_AS(lookup(bad, cb), std::out_of_range);
}

TEST_CASE("continuous Bernoulli log-density") {
  Rng rng(13);
  for (int i = 0; i < 100; ++i) CHECK(std::abs(ll_single(0.0, rng.uniform())) < 1e-12);

  for (double l : {-3.0, -0.5, -1e-4, 1e-3, 0.02, 1.7, 6.0}) {
    for (double x : {0.0, 0.13, 0.5, 0.77, 1.0}) {
      CHECK(std::abs(ll_single(l, x) - ll_single(-l, 1.0 - x)) < 1e-12);
    }
  }

  const double lam = 1.0 / (1.0 + std::exp(-1.0));
  CHECK(std::abs(ll_single(1.0, 1.0) - (std::log(lam) + oracle_log_c(lam))) < 1e-12);

  // Normalizer agrees with the lambda-space formula across regimes.
  for (double l : {-20.0, -2.0, -0.3, -0.011, 0.009, 0.05, 0.9, 4.0, 20.0}) {
    const double lm = 1.0 / (1.0 + std::exp(-l));
    CHECK(cb_log_normalizer(l) == doctest::Approx(oracle_log_c(lm)).epsilon(1e-9));
  }
  CHECK(cb_log_normalizer(0.0) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
}

TEST_CASE("continuous Bernoulli density integrates to one") {
  for (double lam : {0.1, 0.3, 0.7, 0.9}) {
    const double l = std::log(lam / (1 - lam));
    const int n = 2000;  // Simpson's rule
    double s = 0;
    for (int i = 0; i <= n; ++i) {
      const double x = static_cast<double>(i) / n;
      const double w = (i == 0 || i == n) ? 1 : (i % 2 ? 4 : 2);
      s += w * std::exp(ll_single(l, x));
    }
    s /= 3.0 * n;
    CHECK(std::abs(s - 1.0) < 1e-4);
  }
}

TEST_CASE("continuous Bernoulli gradient and range checks") {
  Tensor<double> l({2, 3}, std::vector<double>{-2.0, -0.004, 0.0, 0.003, 0.6, 3.0});
  Tensor<double> x({2, 3}, std::vector<double>{0.1, 0.9, 0.5, 0.0, 1.0, 0.42});
  GradCheckOptions opts;
  auto r = finite_difference_check([&] { return cb_log_likelihood(l, x); }, {l}, opts);
  INFO(r.max_rel_error);
  CHECK(r.passed);
  Tensor<double> bad({1}, std::vector<double>{1.2});
  CHECK_THROWS_AS(cb_log_likelihood(Tensor<double>({1}), bad), std::invalid_argument);
}

TEST_CASE("vqvae step decreases the loss on a repeated batch") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed);
    Codec<float> codec(CodecConfig{}, rng);
    Adam<float> opt(AdamConfig{1e-3});
    opt.add_group(codec.parameters());
    auto batch = random_obs<float>({8, 4, 32, 32}, 100 + seed);
    auto first = vqvae_train_step(codec, batch, opt);
    auto second = vqvae_train_step(codec, batch, opt);
    CHECK(second.total < first.total);
    CHECK(first.total == doctest::Approx(first.recon_nll + first.codebook_loss + 0.25 * first.commitment_loss));
  }
}

TEST_CASE("vqvae step with zero learning rate leaves parameters bit-identical") {
  Rng rng(3);
  Codec<float> codec(CodecConfig{}, rng);
  Adam<float> opt(AdamConfig{0.0});
  opt.add_group(codec.parameters());
  std::vector<std::vector<float>> before;
  for (const auto& p : codec.parameters()) before.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
  vqvae_train_step(codec, random_obs<float>({4, 4, 32, 32}, 4), opt);
  auto params = codec.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    CHECK(std::vector<float>(params[i].tensor.data().begin(), params[i].tensor.data().end()) == before[i]);
  }
}

TEST_CASE("vqvae gradient matches a relaxed surrogate and finite differences") {
  // The straight-through gradient equals the exact gradient of the loss with
  // the assignment frozen and quantized = features + (fixed offset).
  Rng rng(21);
  Codec<double> codec(micro_config(), rng);
  auto obs = random_obs<double>({3, 1, 8, 8}, 22);
  auto params = codec.parameters();

  CodecLosses losses;
  for (auto& p : params) p.tensor.zero_grad();
  vqvae_loss(codec, obs, losses).backward();
  std::vector<std::vector<double>> st;
  for (auto& p : params) st.emplace_back(p.tensor.grad().begin(), p.tensor.grad().end());

  // Stop-gradient operands become constants taken at the base point.
  LatentBatch frozen;
  Tensor<double> offset, f_base, sel_base;
  {
    NoGradGuard g;
    f_base = codec.encoder(obs, true);
    frozen = nearest_indices(f_base, codec.codebook);
    sel_base = lookup(frozen, codec.codebook);
    offset = ops::sub(sel_base, f_base);
  }
  auto relaxed = [&] {
    auto f = codec.encoder(obs, true);
    auto sel = lookup(frozen, codec.codebook);
    const double cells = static_cast<double>(frozen.count * frozen.cells());
    auto dcb = ops::sub(f_base, sel);
    auto dcm = ops::sub(f, sel_base);
    auto logits = codec.decoder(ops::add(f, offset));
    auto nll = ops::mul_scalar(cb_log_likelihood(logits, obs), -1.0);
    return ops::add(ops::add(nll, ops::mul_scalar(ops::sum(ops::mul(dcb, dcb)), 1.0 / cells)),
                    ops::mul_scalar(ops::sum(ops::mul(dcm, dcm)), 0.25 / cells));
  };
  for (auto& p : params) p.tensor.zero_grad();
  relaxed().backward();
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (std::size_t j = 0; j < st[i].size(); ++j) {
      CHECK(params[i].tensor.grad()[j] == doctest::Approx(st[i][j]).epsilon(1e-12).scale(1e-12));
    }
  }

  std::vector<Tensor<double>> inputs;
  for (auto& p : params) inputs.push_back(p.tensor);
  GradCheckOptions opts;
  opts.tolerance = 1e-4;
  auto r = finite_difference_check(relaxed, inputs, opts);
  INFO("worst " << r.worst << " rel " << r.max_rel_error);
  CHECK(r.passed);
}

TEST_CASE("parameter counts follow the layer stack") {
  Rng rng(30);
  CodecConfig cfg;
  Codec<float> codec(cfg, rng);
  // Encoder: conv(4->32,4x4) + bn(32) + conv(32->64) + bn(64) + conv(64->64) + bn(64) + proj(64->16) with bias.
  const std::size_t enc = 4 * 32 * 16 + 2 * 32 + 32 * 64 * 16 + 2 * 64 + 64 * 64 * 16 + 2 * 64 + 64 * 16 + 16;
  // Decoder: proj(16->64) + up(64->64) + up(64->32) + up(32->4), all with bias.
  const std::size_t dec = 16 * 64 + 64 + 64 * 64 * 16 + 64 + 64 * 32 * 16 + 32 + 32 * 4 * 16 + 4;
  const std::size_t cb = 64 * 16;
  CHECK(count_params(codec, CodecPart::Codebook) == cb);
  CHECK(count_params(codec, CodecPart::Encoder) == enc + cb);
  CHECK(count_params(codec, CodecPart::Decoder) == dec + cb);
  CHECK(count_params(codec, CodecPart::VqVae) == enc + dec + cb);
  CHECK(count_params(codec, CodecPart::Encoder) + count_params(codec, CodecPart::Decoder) -
            count_params(codec, CodecPart::Codebook) ==
        count_params(codec, CodecPart::VqVae));
}
