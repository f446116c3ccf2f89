#include <cmath>
#include <vector>

#include "doctest.h"
#include "ldwm/core/rng.hpp"
#include "ldwm/numerics/adam.hpp"
#include "ldwm/numerics/gradcheck.hpp"
#include "ldwm/numerics/layers.hpp"
#include "ldwm/numerics/ops.hpp"

using namespace ldwm;
using T = Tensor<double>;

namespace {

T random_tensor(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Rng rng(seed);
  T t(std::move(shape));
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

// Pushes values away from zero so piecewise-linear ops are probed off the kink.
T away_from_zero(Shape shape, std::uint64_t seed) {
  T t = random_tensor(std::move(shape), seed);
  for (auto& v : t.data()) v = v < 0 ? v - 0.05 : v + 0.05;
  return t;
}

void check(const std::function<T()>& f, std::vector<T> inputs, double tol = 1e-4) {
  GradCheckOptions opts;
  opts.tolerance = tol;
  auto report = finite_difference_check(f, std::move(inputs), opts);
  INFO("worst probe " << report.worst << " rel " << report.max_rel_error);
  CHECK(report.passed);
}

}  // namespace

TEST_CASE("conv2d closed-form examples") {
  T x = random_tensor({2, 3, 5, 4}, 1);
  T id({3, 3, 1, 1});
  for (std::size_t c = 0; c < 3; ++c) id.data()[c * 3 + c] = 1.0;
  T y = ops::conv2d(x, id, T(), 1, 0);
  CHECK(y.shape() == x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(y.data()[i] == x.data()[i]);

  T twos = T::full({1, 1, 3, 3}, 2.0);
  T ones = T::ones({1, 1, 3, 3});
  T s = ops::conv2d(twos, ones, T(), 1, 0);
  CHECK(s.shape() == Shape{1, 1, 1, 1});
  CHECK(s.item() == 18.0);

  Tensor<float> big({1, 1, 96, 96});
  Tensor<float> k({1, 1, 4, 4});
  CHECK(ops::conv2d(big, k, Tensor<float>(), 2, 1).shape() == Shape{1, 1, 48, 48});
}

TEST_CASE("conv2d shape errors name the dimension") {
  T x({1, 2, 3, 3});
  T k({1, 3, 3, 3});
  CHECK_THROWS_WITH_AS(ops::conv2d(x, k, T(), 1, 0), doctest::Contains("input channels"), ShapeError);
  T k2({1, 2, 5, 5});
  CHECK_THROWS_WITH_AS(ops::conv2d(x, k2, T(), 1, 0), doctest::Contains("height"), ShapeError);
  T k3({1, 2, 3, 3});
  CHECK_THROWS_AS(ops::conv2d(x, k3, T(), 0, 0), ShapeError);
}

TEST_CASE("conv_transpose2d inverts the stride-2 geometry") {
  T x = random_tensor({2, 3, 6, 6}, 2);
  T w = random_tensor({3, 5, 4, 4}, 3);
  CHECK(ops::conv_transpose2d(x, w, T(), 2, 1).shape() == Shape{2, 5, 12, 12});
}

TEST_CASE("conv_transpose2d is the adjoint of conv2d") {
  // <conv(x), y> == <x, convT(y)> with the same kernel.
  T x = random_tensor({1, 2, 8, 8}, 4);
  T w = random_tensor({3, 2, 4, 4}, 5);
  T y = random_tensor({1, 3, 4, 4}, 6);
  T cx = ops::conv2d(x, w, T(), 2, 1);
  T ty = ops::conv_transpose2d(y, w, T(), 2, 1);
  double lhs = 0, rhs = 0;
  for (std::size_t i = 0; i < y.numel(); ++i) lhs += cx.data()[i] * y.data()[i];
  for (std::size_t i = 0; i < x.numel(); ++i) rhs += x.data()[i] * ty.data()[i];
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("conv2d forward is independent of batch composition") {
  Tensor<float> x({3, 2, 6, 6});
  Rng rng(7);
  for (auto& v : x.data()) v = static_cast<float>(rng.uniform());
  Tensor<float> w({4, 2, 3, 3});
  for (auto& v : w.data()) v = static_cast<float>(rng.uniform(-1, 1));
  auto full = ops::conv2d(x, w, Tensor<float>(), 1, 1);
  Tensor<float> one({1, 2, 6, 6}, std::vector<float>(x.data().begin() + 72, x.data().begin() + 144));
  auto single = ops::conv2d(one, w, Tensor<float>(), 1, 1);
  for (std::size_t i = 0; i < single.numel(); ++i) CHECK(single.data()[i] == full.data()[single.numel() + i]);
}

TEST_CASE("layer_norm closed-form examples") {
  T g = T::ones({4});
  T b = T::zeros({4});
  T c = T::full({1, 4}, 3.5);
  auto zc = ops::layer_norm(c, g, b, 1e-5);
  for (double v : zc.data()) CHECK(v == 0.0);

  T pm({1, 2}, std::vector<double>{1.0, -1.0});
  auto y = ops::layer_norm(pm, T::ones({2}), T::zeros({2}), 1e-12);
  CHECK(y.data()[0] == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(y.data()[1] == doctest::Approx(-1.0).epsilon(1e-9));

  T x = random_tensor({3, 4}, 8);
  auto z = ops::layer_norm(x, T::zeros({4}), T::full({4}, 0.7), 1e-5);
  for (double v : z.data()) CHECK(v == 0.7);

  CHECK_THROWS_AS(ops::layer_norm(x, g, b, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(ops::layer_norm(x, T::ones({3}), b, 1e-5), ShapeError);
}

TEST_CASE("softmax_cross_entropy examples") {
  T u({1, 3});
  std::vector<int> t0{0};
  CHECK(ops::softmax_cross_entropy(u, t0).item() == doctest::Approx(std::log(3.0)).epsilon(1e-14));

  T sat({1, 2}, std::vector<double>{1000.0, -1000.0});
  double l = ops::softmax_cross_entropy(sat, t0).item();
  CHECK(std::isfinite(l));
  CHECK(l == doctest::Approx(0.0));

  // Independent log-sum-exp oracle on a random 5-class instance.
  T x = random_tensor({1, 5}, 9, -3.0, 3.0);
  std::vector<int> t3{3};
  double mx = -1e300;
  for (double v : x.data()) mx = std::max(mx, v);
  double s = 0;
  for (double v : x.data()) s += std::exp(v - mx);
  const double oracle = mx + std::log(s) - x.data()[3];
  CHECK(std::abs(ops::softmax_cross_entropy(x, t3).item() - oracle) <= 1e-10 * std::abs(oracle));

  std::vector<int> bad{5};
  CHECK_THROWS_AS(ops::softmax_cross_entropy(x, bad), std::invalid_argument);
}

TEST_CASE("softmax family is overflow-safe at magnitude 1e4") {
  T x({2, 3}, std::vector<double>{1e4, -1e4, 0.0, -1e4, -1e4, -1e4});
  auto p = ops::softmax(x);
  for (double v : p.data()) CHECK(std::isfinite(v));
  CHECK(p.data()[0] == 1.0);
  CHECK(p.data()[3] == doctest::Approx(1.0 / 3.0));
  std::vector<int> t{1, 2};
  CHECK(std::isfinite(ops::softmax_cross_entropy(x, t).item()));
}

TEST_CASE("backward examples") {
  T x = random_tensor({2, 3}, 10);
  x.set_requires_grad(true);
  ops::sum(x).backward();
  for (double g : x.grad()) CHECK(g == 1.0);

  T s = T::full({1}, 3.0);
  s.set_requires_grad(true);
  ops::sum(ops::mul(s, s)).backward();
  CHECK(s.grad()[0] == 6.0);

  T a = random_tensor({4}, 11);
  a.set_requires_grad(true);
  auto loss = ops::sum(ops::mul(a, a));
  loss.backward();
  std::vector<double> first(a.grad().begin(), a.grad().end());
  loss.backward();
  for (std::size_t i = 0; i < 4; ++i) CHECK(a.grad()[i] == 2.0 * first[i]);

  CHECK_THROWS_AS(ops::mul(a, a).backward(), ShapeError);
}

TEST_CASE("backward leaves unreachable tensors untouched") {
  T a = random_tensor({3}, 12);
  T b = random_tensor({3}, 13);
  a.set_requires_grad(true);
  b.set_requires_grad(true);
  ops::sum(a).backward();
  CHECK_FALSE(b.has_grad());
}

TEST_CASE("backward is bit-deterministic") {
  auto run = [] {
    T x = random_tensor({2, 2, 6, 6}, 14);
    T w = random_tensor({3, 2, 3, 3}, 15);
    w.set_requires_grad(true);
    auto y = ops::leaky_relu(ops::conv2d(x, w, T(), 1, 1), 0.01);
    random_projection(y, 16).backward();
    return std::vector<double>(w.grad().begin(), w.grad().end());
  };
  CHECK(run() == run());
}

TEST_CASE("batch_norm eval mode is a fixed affine map") {
  BatchNorm2d<double> bn(2);
  bn.running_mean.data()[0] = 0.5;
  bn.running_var.data()[1] = 4.0;
  bn.gamma.data()[1] = 2.0;
  bn.beta.data()[0] = -1.0;
  T x = random_tensor({3, 2, 2, 2}, 17);
  auto y1 = bn(x, false);
  auto y2 = bn(x, false);
  CHECK(std::vector<double>(y1.data().begin(), y1.data().end()) ==
        std::vector<double>(y2.data().begin(), y2.data().end()));
  const double eps = 1e-5;
  CHECK(y1.data()[0] == doctest::Approx((x.data()[0] - 0.5) / std::sqrt(1 + eps) - 1.0));
  CHECK(y1.data()[4] == doctest::Approx(2.0 * x.data()[4] / std::sqrt(4 + eps)));
}

TEST_CASE("batch_norm training updates running statistics with momentum 0.9") {
  BatchNorm2d<double> bn(1);
  T x({2, 1, 1, 2}, std::vector<double>{1, 2, 3, 4});
  bn(x, true);
  CHECK(bn.running_mean.data()[0] == doctest::Approx(0.1 * 2.5));
  // Unbiased batch variance of {1,2,3,4} is 5/3.
  CHECK(bn.running_var.data()[0] == doctest::Approx(0.9 + 0.1 * 5.0 / 3.0));
}

TEST_CASE("gradient check: element-wise and activations") {
  T a = random_tensor({2, 3}, 20);
  T b = random_tensor({2, 3}, 21);
  check([&] { return random_projection(ops::add(a, b), 1); }, {a, b});
  check([&] { return random_projection(ops::sub(a, b), 1); }, {a, b});
  check([&] { return random_projection(ops::mul(a, b), 1); }, {a, b});
  check([&] { return random_projection(ops::exp(a), 2); }, {a});
  T pos = random_tensor({2, 3}, 22, 0.5, 2.0);
  check([&] { return random_projection(ops::log(pos), 3); }, {pos});
  check([&] { return random_projection(ops::sigmoid(a), 4); }, {a});
  check([&] { return random_projection(ops::tanh(a), 5); }, {a});
  check([&] { return random_projection(ops::mul_scalar(ops::add_scalar(a, 0.3), -2.0), 6); }, {a});
  T c = away_from_zero({2, 3}, 23);
  check([&] { return random_projection(ops::clamp(c, -0.5, 0.5), 7); }, {c});
  T d = away_from_zero({2, 3}, 24);
  check([&] { return random_projection(ops::minimum(ops::add_scalar(c, 0.01), d), 8); }, {c, d});
}

TEST_CASE("gradient check: leaky relu away from the kink") {
  T x = away_from_zero({3, 5}, 25);
  GradCheckOptions opts;
  opts.tolerance = 1e-6;
  auto r = finite_difference_check([&] { return random_projection(ops::leaky_relu(x, 0.01), 9); }, {x}, opts);
  CHECK(r.max_rel_error < 1e-6);
}

TEST_CASE("gradient check: softmax family and reductions") {
  T x = random_tensor({2, 4, 2, 3}, 26, -2, 2);
  check([&] { return random_projection(ops::softmax(x), 10); }, {x});
  check([&] { return random_projection(ops::log_softmax(x), 11); }, {x});
  std::vector<int> tgt{0, 1, 2, 3, 3, 2, 1, 0, 1, 1, 2, 0};
  check([&] { return ops::softmax_cross_entropy(x, tgt); }, {x});
  T m = random_tensor({3, 4}, 27);
  std::vector<int> idx{2, 0, 3};
  check([&] { return random_projection(ops::pick(m, idx), 12); }, {m});
  check([&] { return ops::mean(ops::mul(m, m)); }, {m});
  check([&] { return ops::sum(ops::mul(m, m)); }, {m});
}

TEST_CASE("gradient check: structural ops") {
  T a = random_tensor({2, 2, 3, 3}, 28);
  T b = random_tensor({2, 3, 3, 3}, 29);
  check([&] { return random_projection(ops::concat_channels<double>({a, b}), 13); }, {a, b});
  check([&] { return random_projection(ops::slice_channels(b, 1, 2), 14); }, {b});
  check([&] { return random_projection(ops::reshape(a, {2, 18}), 15); }, {a});
  T v = random_tensor({2, 3}, 30);
  check([&] { return random_projection(ops::broadcast_spatial(v, 2, 3), 16); }, {v});
  T table = random_tensor({5, 3}, 31);
  std::vector<int> grid{0, 4, 4, 2, 1, 0, 3, 3};
  check([&] { return random_projection(ops::embedding(table, grid, 2, 2, 2), 17); }, {table});
}

TEST_CASE("gradient check: dense layer with 4x3 weights") {
  T x = random_tensor({5, 3}, 32);
  T w = random_tensor({4, 3}, 33);
  T bias = random_tensor({4}, 34);
  check([&] { return random_projection(ops::linear(x, w, bias), 18); }, {x, w, bias});
}

TEST_CASE("gradient check: conv2d two-channel 5x5") {
  T x = random_tensor({2, 2, 5, 5}, 35);
  T w = random_tensor({3, 2, 3, 3}, 36);
  T bias = random_tensor({3}, 37);
  check([&] { return random_projection(ops::conv2d(x, w, bias, 1, 1), 19); }, {x, w, bias});
  check([&] { return random_projection(ops::conv2d(x, w, bias, 2, 0), 20); }, {x, w, bias});
}

TEST_CASE("gradient check: transposed convolution") {
  T x = random_tensor({2, 2, 3, 3}, 38);
  T w = random_tensor({2, 3, 4, 4}, 39);
  T bias = random_tensor({3}, 40);
  check([&] { return random_projection(ops::conv_transpose2d(x, w, bias, 2, 1), 21); }, {x, w, bias});
}

TEST_CASE("gradient check: normalization") {
  T x = random_tensor({3, 2, 2, 2}, 41);
  T g = random_tensor({2}, 42, 0.5, 1.5);
  T b = random_tensor({2}, 43);
  T rm = T::zeros({2}), rv = T::ones({2});
  check([&] { return random_projection(ops::batch_norm(x, g, b, rm, rv, true, 0.9, 1e-5), 22); }, {x, g, b});
  check([&] { return random_projection(ops::batch_norm(x, g, b, rm, rv, false, 0.9, 1e-5), 23); }, {x, g, b});
  T lg = random_tensor({2, 2, 2}, 44, 0.5, 1.5);
  T lb = random_tensor({2, 2, 2}, 45);
  check([&] { return random_projection(ops::layer_norm(x, lg, lb, 1e-5), 24); }, {x, lg, lb});
}

TEST_CASE("straight-through forwards the quantized value and passes the gradient unchanged") {
  T f = random_tensor({2, 3}, 46);
  T q = random_tensor({2, 3}, 47);
  f.set_requires_grad(true);
  T st = ops::straight_through(f, q);
  for (std::size_t i = 0; i < q.numel(); ++i) CHECK(st.data()[i] == q.data()[i]);
  T r = random_tensor({2, 3}, 48);
  ops::sum(ops::mul(st, r)).backward();
  for (std::size_t i = 0; i < r.numel(); ++i) CHECK(f.grad()[i] == r.data()[i]);
}

TEST_CASE("adam examples") {
  SUBCASE("zero gradient leaves parameters unchanged") {
    auto p = make_param<double>({3});
    p.data()[1] = 0.25;
    Adam<double> opt(AdamConfig{0.1});
    opt.add_group({{"p", p}});
    opt.zero_grad();
    opt.step();
    CHECK(p.data()[1] == 0.25);
    CHECK(opt.step_count() == 1);
  }
  SUBCASE("first step moves by lr against the gradient sign") {
    auto p = make_param<double>({2});
    Adam<double> opt(AdamConfig{0.01});
    opt.add_group({{"p", p}});
    p.mutable_grad()[0] = 3.0;
    p.mutable_grad()[1] = -0.002;
    opt.step();
    CHECK(p.data()[0] == doctest::Approx(-0.01).epsilon(1e-6));
    CHECK(p.data()[1] == doctest::Approx(0.01).epsilon(1e-4));
    // Gradients are left intact.
    CHECK(p.grad()[0] == 3.0);
  }
  SUBCASE("ten steps on x^2 agree with an independent recurrence") {
    auto p = make_param<double>({1});
    p.data()[0] = 1.0;
    Adam<double> opt(AdamConfig{0.1});
    opt.add_group({{"x", p}});
    double x = 1.0, m = 0.0, v = 0.0, prev = 1.0;
    for (int t = 1; t <= 10; ++t) {
      opt.zero_grad();
      ops::sum(ops::mul(p, p)).backward();
      opt.step();
      const double g = 2.0 * x;
      m = 0.9 * m + 0.1 * g;
      v = 0.999 * v + 0.001 * g * g;
      x -= 0.1 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
      CHECK(p.data()[0] == doctest::Approx(x).epsilon(1e-12));
      CHECK(std::abs(x) < std::abs(prev));
      prev = x;
    }
  }
  SUBCASE("missing gradient names the parameter") {
    auto p = make_param<double>({2});
    Adam<double> opt;
    opt.add_group({{"decoder.up0.weight", p}});
    CHECK_THROWS_WITH(opt.step(), doctest::Contains("decoder.up0.weight"));
  }
  SUBCASE("lr scale multiplies the step of one group") {
    auto a = make_param<double>({1});
    auto b = make_param<double>({1});
    Adam<double> opt(AdamConfig{0.01});
    opt.add_group({{"a", a}});
    opt.add_group({{"b", b}}, 10.0);
    a.mutable_grad()[0] = 1.0;
    b.mutable_grad()[0] = 1.0;
    opt.step();
    CHECK(b.data()[0] == doctest::Approx(10.0 * a.data()[0]));
  }
}

TEST_CASE("tape records nothing under NoGradGuard") {
  T a = random_tensor({3}, 48);
  a.set_requires_grad(true);
  NoGradGuard guard;
  auto y = ops::mul(a, a);
  CHECK(y.is_leaf());
  CHECK_FALSE(y.requires_grad());
}
