#include "ldwm/numerics/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "ldwm/core/parallel.hpp"

namespace ldwm::ops {

namespace {

template <typename T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapR = Eigen::Map<MatR<T>>;
template <typename T>
using CMapR = Eigen::Map<const MatR<T>>;
template <typename T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

void require(bool ok, const std::string& msg) {
  if (!ok) throw ShapeError(msg);
}

template <typename T>
void require_same_shape(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  require(a.shape() == b.shape(),
          std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

template <typename T>
void require_rank(const char* op, const char* what, const Tensor<T>& t, std::size_t rank) {
  require(t.defined() && t.dim() == rank, std::string(op) + ": " + what + " must be rank " + std::to_string(rank) +
                                              ", got " + (t.defined() ? shape_str(t.shape()) : "<undefined>"));
}

// Element-wise unary op with derivative expressed through input x and output y.
template <typename T, typename F, typename D>
Tensor<T> unary(const char* op, const Tensor<T>& x, F f, D dfdx) {
  const auto xs = x.data();
  std::vector<T> out(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) out[i] = f(xs[i]);
  auto saved_out = std::make_shared<std::vector<T>>(out);
  return make_result<T>(x.shape(), std::move(out), op, {x},
                        [dfdx, saved_out](std::span<const T> g, std::span<const ImplPtr<T>> in) {
                          auto gx = input_grad<T>(in, 0);
                          if (gx.empty()) return;
                          const auto& xv = in[0]->data;
                          const auto& yv = *saved_out;
                          for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * dfdx(xv[i], yv[i]);
                        });
}

// [N, C, inner] view for softmax-family ops.
struct ClassView {
  std::size_t n, c, inner;
};

template <typename T>
ClassView class_view(const char* op, const Tensor<T>& x) {
  require(x.defined() && x.dim() >= 2, std::string(op) + ": expected at least [N, C], got " +
                                           (x.defined() ? shape_str(x.shape()) : "<undefined>"));
  ClassView v{x.size(0), x.size(1), 1};
  for (std::size_t d = 2; d < x.dim(); ++d) v.inner *= x.size(d);
  require(v.c > 0, std::string(op) + ": class axis is empty");
  return v;
}

template <typename T>
void log_softmax_into(const ClassView& v, std::span<const T> x, std::vector<T>& out) {
  out.resize(x.size());
  for (std::size_t n = 0; n < v.n; ++n) {
    for (std::size_t s = 0; s < v.inner; ++s) {
      const std::size_t base = n * v.c * v.inner + s;
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t c = 0; c < v.c; ++c) mx = std::max(mx, x[base + c * v.inner]);
      double acc = 0.0;
      for (std::size_t c = 0; c < v.c; ++c) acc += std::exp(static_cast<double>(x[base + c * v.inner] - mx));
      const T lse = mx + static_cast<T>(std::log(acc));
      for (std::size_t c = 0; c < v.c; ++c) out[base + c * v.inner] = x[base + c * v.inner] - lse;
    }
  }
}

// Gathers conv patches of one sample into cols [Cin*kh*kw, Ho*Wo] with row
// stride `ld` (so several samples can share one matrix).
template <typename T>
void im2col(const T* x, std::size_t cin, std::size_t h, std::size_t w, std::size_t kh, std::size_t kw, int stride,
            int pad, std::size_t ho, std::size_t wo, T* cols, std::size_t ld) {
  for (std::size_t c = 0; c < cin; ++c) {
    for (std::size_t ki = 0; ki < kh; ++ki) {
      for (std::size_t kj = 0; kj < kw; ++kj) {
        T* row = cols + ((c * kh + ki) * kw + kj) * ld;
        for (std::size_t oi = 0; oi < ho; ++oi) {
          const long ii = static_cast<long>(oi) * stride - pad + static_cast<long>(ki);
          for (std::size_t oj = 0; oj < wo; ++oj) {
            const long jj = static_cast<long>(oj) * stride - pad + static_cast<long>(kj);
            row[oi * wo + oj] = (ii >= 0 && ii < static_cast<long>(h) && jj >= 0 && jj < static_cast<long>(w))
                                    ? x[(c * h + ii) * w + jj]
                                    : T(0);
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatters-adds cols back into an image.
template <typename T>
void col2im(const T* cols, std::size_t ld, std::size_t cin, std::size_t h, std::size_t w, std::size_t kh,
            std::size_t kw, int stride, int pad, std::size_t ho, std::size_t wo, T* x) {
  for (std::size_t c = 0; c < cin; ++c) {
    for (std::size_t ki = 0; ki < kh; ++ki) {
      for (std::size_t kj = 0; kj < kw; ++kj) {
        const T* row = cols + ((c * kh + ki) * kw + kj) * ld;
        for (std::size_t oi = 0; oi < ho; ++oi) {
          const long ii = static_cast<long>(oi) * stride - pad + static_cast<long>(ki);
          if (ii < 0 || ii >= static_cast<long>(h)) continue;
          for (std::size_t oj = 0; oj < wo; ++oj) {
            const long jj = static_cast<long>(oj) * stride - pad + static_cast<long>(kj);
            if (jj < 0 || jj >= static_cast<long>(w)) continue;
            x[(c * h + ii) * w + jj] += row[oi * wo + oj];
          }
        }
      }
    }
  }
}

std::size_t conv_out(const char* op, const char* axis, std::size_t in, std::size_t k, int stride, int pad) {
  const long span = static_cast<long>(in) + 2L * pad - static_cast<long>(k);
  require(span >= 0, std::string(op) + ": kernel " + std::to_string(k) + " exceeds padded " + axis + " " +
                         std::to_string(in + 2 * pad));
  return static_cast<std::size_t>(span / stride) + 1;
}

}  // namespace

// ---------------------------------------------------------------- element-wise

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape("add", a, b);
  std::vector<T> out(a.numel());
  auto av = a.data(), bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return make_result<T>(a.shape(), std::move(out), "add", {a, b},
                        [](std::span<const T> g, std::span<const ImplPtr<T>> in) {
                          for (std::size_t k = 0; k < 2; ++k) {
                            auto gx = input_grad<T>(in, k);
                            for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
                          }
                        });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape("sub", a, b);
  std::vector<T> out(a.numel());
  auto av = a.data(), bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  return make_result<T>(a.shape(), std::move(out), "sub", {a, b},
                        [](std::span<const T> g, std::span<const ImplPtr<T>> in) {
                          auto ga = input_grad<T>(in, 0);
                          for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i];
                          auto gb = input_grad<T>(in, 1);
                          for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= g[i];
                        });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape("mul", a, b);
  std::vector<T> out(a.numel());
  auto av = a.data(), bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return make_result<T>(a.shape(), std::move(out), "mul", {a, b},
                        [](std::span<const T> g, std::span<const ImplPtr<T>> in) {
                          const auto& av = in[0]->data;
                          const auto& bv = in[1]->data;
                          auto ga = input_grad<T>(in, 0);
                          for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * bv[i];
                          auto gb = input_grad<T>(in, 1);
                          for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[i] * av[i];
                        });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T s) {
  return unary<T>("add_scalar", a, [s](T x) { return x + s; }, [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& a, T s) {
  return unary<T>("mul_scalar", a, [s](T x) { return x * s; }, [s](T, T) { return s; });
}

template <typename T>
Tensor<T> exp(const Tensor<T>& a) {
  return unary<T>("exp", a, [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}

template <typename T>
Tensor<T> log(const Tensor<T>& a) {
  return unary<T>("log", a, [](T x) { return std::log(x); }, [](T x, T) { return T(1) / x; });
}

template <typename T>
Tensor<T> clamp(const Tensor<T>& a, T lo, T hi) {
  if (!(lo <= hi)) throw std::invalid_argument("clamp: lower bound exceeds upper bound");
  return unary<T>("clamp", a, [lo, hi](T x) { return std::clamp(x, lo, hi); },
                  [lo, hi](T x, T) { return (x >= lo && x <= hi) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> minimum(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape("minimum", a, b);
  std::vector<T> out(a.numel());
  auto av = a.data(), bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] <= bv[i] ? av[i] : bv[i];
  return make_result<T>(a.shape(), std::move(out), "minimum", {a, b},
                        [](std::span<const T> g, std::span<const ImplPtr<T>> in) {
                          const auto& av = in[0]->data;
                          const auto& bv = in[1]->data;
                          auto ga = input_grad<T>(in, 0);
                          auto gb = input_grad<T>(in, 1);
                          for (std::size_t i = 0; i < g.size(); ++i) {
                            if (av[i] <= bv[i]) {
                              if (!ga.empty()) ga[i] += g[i];
                            } else if (!gb.empty()) {
                              gb[i] += g[i];
                            }
                          }
                        });
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope) {
  return unary<T>("leaky_relu", x, [slope](T v) { return v > T(0) ? v : slope * v; },
                  [slope](T v, T) { return v > T(0) ? T(1) : slope; });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return unary<T>(
      "sigmoid", x,
      [](T v) {
        if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
        const T e = std::exp(v);
        return e / (T(1) + e);
      },
      [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& x) {
  return unary<T>("tanh", x, [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
}

// --------------------------------------------------------------- softmax family

template <typename T>
Tensor<T> softmax(const Tensor<T>& x) {
  const ClassView v = class_view("softmax", x);
  std::vector<T> out;
  log_softmax_into<T>(v, x.data(), out);
  for (auto& o : out) o = std::exp(o);
  auto saved = std::make_shared<std::vector<T>>(out);
  return make_result<T>(x.shape(), std::move(out), "softmax", {x},
                        [v, saved](std::span<const T> g, std::span<const ImplPtr<T>> in) {
                          auto gx = input_grad<T>(in, 0);
                          if (gx.empty()) return;
                          const auto& y = *saved;
                          for (std::size_t n = 0; n < v.n; ++n) {
                            for (std::size_t s = 0; s < v.inner; ++s) {
                              const std::size_t base = n * v.c * v.inner + s;
                              T dot = 0;
                              for (std::size_t c = 0; c < v.c; ++c) dot += g[base + c * v.inner] * y[base + c * v.inner];
                              for (std::size_t c = 0; c < v.c; ++c) {
                                const std::size_t i = base + c * v.inner;
                                gx[i] += y[i] * (g[i] - dot);
                              }
                            }
                          }
                        });
}

template <typename T>
Tensor<T> log_softmax(const Tensor<T>& x) {
  const ClassView v = class_view("log_softmax", x);
  std::vector<T> out;
  log_softmax_into<T>(v, x.data(), out);
  auto saved = std::make_shared<std::vector<T>>(out);
  return make_result<T>(x.shape(), std::move(out), "log_softmax", {x},
                        [v, saved](std::span<const T> g, std::span<const ImplPtr<T>> in) {
                          auto gx = input_grad<T>(in, 0);
                          if (gx.empty()) return;
                          const auto& ls = *saved;
                          for (std::size_t n = 0; n < v.n; ++n) {
                            for (std::size_t s = 0; s < v.inner; ++s) {
                              const std::size_t base = n * v.c * v.inner + s;
                              T gsum = 0;
                              for (std::size_t c = 0; c < v.c; ++c) gsum += g[base + c * v.inner];
                              for (std::size_t c = 0; c < v.c; ++c) {
                                const std::size_t i = base + c * v.inner;
                                gx[i] += g[i] - std::exp(ls[i]) * gsum;
                              }
                            }
                          }
                        });
}

template <typename T>
Tensor<T> softmax_cross_entropy(const Tensor<T>& logits, std::span<const int> targets) {
  const ClassView v = class_view("softmax_cross_entropy", logits);
  const std::size_t count = v.n * v.inner;
  require(targets.size() == count, "softmax_cross_entropy: expected " + std::to_string(count) + " targets, got " +
                                       std::to_string(targets.size()));
  for (std::size_t i = 0; i < count; ++i) {
    if (targets[i] < 0 || static_cast<std::size_t>(targets[i]) >= v.c) {
      throw std::invalid_argument("softmax_cross_entropy: target " + std::to_string(targets[i]) + " at position " +
                                  std::to_string(i) + " outside [0, " + std::to_string(v.c) + ")");
    }
  }
  std::vector<T> ls;
  log_softmax_into<T>(v, logits.data(), ls);
  double acc = 0.0;
  for (std::size_t n = 0; n < v.n; ++n) {
    for (std::size_t s = 0; s < v.inner; ++s) {
      acc -= ls[(n * v.c + static_cast<std::size_t>(targets[n * v.inner + s])) * v.inner + s];
    }
  }
  const T loss = static_cast<T>(acc / static_cast<double>(count));
  auto saved = std::make_shared<std::vector<T>>(std::move(ls));
  auto tgt = std::make_shared<std::vector<int>>(targets.begin(), targets.end());
  return make_result<T>(Shape{}, {loss}, "softmax_cross_entropy", {logits},
                        [v, count, saved, tgt](std::span<const T> g, std::span<const ImplPtr<T>> in) {
                          auto gx = input_grad<T>(in, 0);
                          if (gx.empty()) return;
                          const T scale = g[0] / static_cast<T>(count);
                          const auto& ls = *saved;
                          for (std::size_t n = 0; n < v.n; ++n) {
                            for (std::size_t s = 0; s < v.inner; ++s) {
                              const std::size_t t = static_cast<std::size_t>((*tgt)[n * v.inner + s]);
                              for (std::size_t c = 0; c < v.c; ++c) {
                                const std::size_t i = (n * v.c + c) * v.inner + s;
                                gx[i] += scale * (std::exp(ls[i]) - (c == t ? T(1) : T(0)));
                              }
                            }
                          }
                        });
}

template <typename T>
Tensor<T> pick(const Tensor<T>& x, std::span<const int> index) {
  require_rank("pick", "input", x, 2);
  const std::size_t n = x.size(0), c = x.size(1);
  require(index.size() == n, "pick: expected " + std::to_string(n) + " indices, got " + std::to_string(index.size()));
  std::vector<T> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (index[i] < 0 || static_cast<std::size_t>(index[i]) >= c) {
      throw std::invalid_argument("pick: index " + std::to_string(index[i]) + " outside [0, " + std::to_string(c) + ")");
    }
    out[i] = x.data()[i * c + static_cast<std::size_t>(index[i])];
  }
  auto idx = std::make_shared<std::vector<int>>(index.begin(), index.end());
  return make_result<T>(Shape{n}, std::move(out), "pick", {x},
                        [c, idx](std::span<const T> g, std::span<const ImplPtr<T>> in) {
                          auto gx = input_grad<T>(in, 0);
                          for (std::size_t i = 0; i < g.size() && !gx.empty(); ++i) {
                            gx[i * c + static_cast<std::size_t>((*idx)[i])] += g[i];
                          }
                        });
}

// ------------------------------------------------------------------ reductions

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  double acc = 0.0;
  for (T v : x.data()) acc += v;
  return make_result<T>(Shape{}, {static_cast<T>(acc)}, "sum", {x},
                        [](std::span<const T> g, std::span<const ImplPtr<T>> in) {
                          auto gx = input_grad<T>(in, 0);
                          for (auto& v : gx) v += g[0];
                        });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  require(x.numel() > 0, "mean: empty tensor");
  double acc = 0.0;
  for (T v : x.data()) acc += v;
  const std::size_t n = x.numel();
  return make_result<T>(Shape{}, {static_cast<T>(acc / static_cast<double>(n))}, "mean", {x},
                        [n](std::span<const T> g, std::span<const ImplPtr<T>> in) {
                          auto gx = input_grad<T>(in, 0);
                          const T s = g[0] / static_cast<T>(n);
                          for (auto& v : gx) v += s;
                        });
}

// ------------------------------------------------------------------ structural

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  require(shape_numel(shape) == x.numel(),
          "reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  std::vector<T> out(x.data().begin(), x.data().end());
  return make_result<T>(std::move(shape), std::move(out), "reshape", {x},
                        [](std::span<const T> g, std::span<const ImplPtr<T>> in) {
                          auto gx = input_grad<T>(in, 0);
                          for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
                        });
}

template <typename T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& parts) {
  require(!parts.empty(), "concat_channels: no inputs");
  const Shape& ref = parts[0].shape();
  require(ref.size() >= 2, "concat_channels: inputs must be at least [N, C], got " + shape_str(ref));
  std::size_t inner = 1;
  for (std::size_t d = 2; d < ref.size(); ++d) inner *= ref[d];
  std::size_t total_c = 0;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == ref.size() && s[0] == ref[0];
    for (std::size_t d = 2; ok && d < s.size(); ++d) ok = s[d] == ref[d];
    require(ok, "concat_channels: input " + shape_str(s) + " incompatible with " + shape_str(ref) +
                    " outside the channel axis");
    offsets.push_back(total_c);
    total_c += s[1];
  }
  const std::size_t n = ref[0];
  Shape out_shape = ref;
  out_shape[1] = total_c;
  std::vector<T> out(n * total_c * inner);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const std::size_t c = parts[k].size(1);
    auto src = parts[k].data();
    for (std::size_t b = 0; b < n; ++b) {
      std::copy_n(src.begin() + b * c * inner, c * inner, out.begin() + (b * total_c + offsets[k]) * inner);
    }
  }
  return make_result<T>(std::move(out_shape), std::move(out), "concat_channels", parts,
                        [n, inner, total_c, offsets](std::span<const T> g, std::span<const ImplPtr<T>> in) {
                          for (std::size_t k = 0; k < in.size(); ++k) {
                            auto gx = input_grad<T>(in, k);
                            if (gx.empty()) continue;
                            const std::size_t c = in[k]->shape[1];
                            for (std::size_t b = 0; b < n; ++b) {
                              const T* src = g.data() + (b * total_c + offsets[k]) * inner;
                              T* dst = gx.data() + b * c * inner;
                              for (std::size_t i = 0; i < c * inner; ++i) dst[i] += src[i];
                            }
                          }
                        });
}

template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, std::size_t begin, std::size_t count) {
  require(x.defined() && x.dim() >= 2, "slice_channels: input must be at least [N, C]");
  const std::size_t c = x.size(1);
  require(begin + count <= c, "slice_channels: range [" + std::to_string(begin) + ", " +
                                  std::to_string(begin + count) + ") exceeds channel count " + std::to_string(c));
  std::size_t inner = 1;
  for (std::size_t d = 2; d < x.dim(); ++d) inner *= x.size(d);
  const std::size_t n = x.size(0);
  Shape out_shape = x.shape();
  out_shape[1] = count;
  std::vector<T> out(n * count * inner);
  auto src = x.data();
  for (std::size_t b = 0; b < n; ++b) {
    std::copy_n(src.begin() + (b * c + begin) * inner, count * inner, out.begin() + b * count * inner);
  }
  return make_result<T>(std::move(out_shape), std::move(out), "slice_channels", {x},
                        [n, c, inner, begin, count](std::span<const T> g, std::span<const ImplPtr<T>> in) {
                          auto gx = input_grad<T>(in, 0);
                          if (gx.empty()) return;
                          for (std::size_t b = 0; b < n; ++b) {
                            T* dst = gx.data() + (b * c + begin) * inner;
                            const T* s = g.data() + b * count * inner;
                            for (std::size_t i = 0; i < count * inner; ++i) dst[i] += s[i];
                          }
                        });
}

template <typename T>
Tensor<T> broadcast_spatial(const Tensor<T>& v, std::size_t height, std::size_t width) {
  require_rank("broadcast_spatial", "input", v, 2);
  const std::size_t n = v.size(0), a = v.size(1), plane = height * width;
  std::vector<T> out(n * a * plane);
  auto src = v.data();
  for (std::size_t i = 0; i < n * a; ++i) std::fill_n(out.begin() + i * plane, plane, src[i]);
  return make_result<T>(Shape{n, a, height, width}, std::move(out), "broadcast_spatial", {v},
                        [plane](std::span<const T> g, std::span<const ImplPtr<T>> in) {
                          auto gx = input_grad<T>(in, 0);
                          for (std::size_t i = 0; i < gx.size(); ++i) {
                            T acc = 0;
                            for (std::size_t p = 0; p < plane; ++p) acc += g[i * plane + p];
                            gx[i] += acc;
                          }
                        });
}

// ---------------------------------------------------------------- convolutions

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, int stride, int padding) {
  require_rank("conv2d", "input", x, 4);
  require_rank("conv2d", "kernel", weight, 4);
  require(stride >= 1, "conv2d: stride must be >= 1, got " + std::to_string(stride));
  require(padding >= 0, "conv2d: padding must be >= 0, got " + std::to_string(padding));
  const std::size_t n = x.size(0), cin = x.size(1), h = x.size(2), w = x.size(3);
  const std::size_t cout = weight.size(0), kh = weight.size(2), kw = weight.size(3);
  require(weight.size(1) == cin, "conv2d: kernel expects " + std::to_string(weight.size(1)) +
                                     " input channels, input has " + std::to_string(cin));
  if (bias.defined()) {
    require(bias.dim() == 1 && bias.size(0) == cout,
            "conv2d: bias shape " + shape_str(bias.shape()) + " does not match " + std::to_string(cout) + " outputs");
  }
  const std::size_t ho = conv_out("conv2d", "height", h, kh, stride, padding);
  const std::size_t wo = conv_out("conv2d", "width", w, kw, stride, padding);
  const std::size_t kdim = cin * kh * kw, plane = ho * wo;

  std::vector<T> out(n * cout * plane);
  const T* xp = x.data().data();
  const T* wp = weight.data().data();
  const T* bp = bias.defined() ? bias.data().data() : nullptr;
  parallel_for(n, [&](std::size_t b) {
    std::vector<T> cols(kdim * plane);
    im2col(xp + b * cin * h * w, cin, h, w, kh, kw, stride, padding, ho, wo, cols.data(), plane);
    MapR<T> y(out.data() + b * cout * plane, cout, plane);
    y.noalias() = CMapR<T>(wp, cout, kdim) * CMapR<T>(cols.data(), kdim, plane);
    if (bp) {
      for (std::size_t c = 0; c < cout; ++c) y.row(c).array() += bp[c];
    }
  });

  std::vector<Tensor<T>> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return make_result<T>(
      Shape{n, cout, ho, wo}, std::move(out), "conv2d", std::move(inputs),
      [=](std::span<const T> g, std::span<const ImplPtr<T>> in) {
        auto gx = input_grad<T>(in, 0);
        auto gw = input_grad<T>(in, 1);
        if (in.size() > 2) {
          auto gb = input_grad<T>(in, 2);
          for (std::size_t b = 0; b < n && !gb.empty(); ++b) {
            for (std::size_t c = 0; c < cout; ++c) {
              T acc = 0;
              const T* row = g.data() + (b * cout + c) * plane;
              for (std::size_t p = 0; p < plane; ++p) acc += row[p];
              gb[c] += acc;
            }
          }
        }
        const std::size_t ld = n * plane;
        // Gradient of all samples side by side: [Cout, N*plane].
        MatR<T> gbig(cout, ld);
        for (std::size_t b = 0; b < n; ++b) {
          gbig.middleCols(b * plane, plane) = CMapR<T>(g.data() + b * cout * plane, cout, plane);
        }
        if (!gw.empty()) {
          MatR<T> cols(kdim, ld);
          const T* xv = in[0]->data.data();
          for (std::size_t b = 0; b < n; ++b) {
            im2col(xv + b * cin * h * w, cin, h, w, kh, kw, stride, padding, ho, wo, cols.data() + b * plane, ld);
          }
          MapR<T>(gw.data(), cout, kdim).noalias() += gbig * cols.transpose();
        }
        if (!gx.empty()) {
          const T* wv = in[1]->data.data();
          MatR<T> dcols(kdim, ld);
          dcols.noalias() = CMapR<T>(wv, cout, kdim).transpose() * gbig;
          parallel_for(n, [&](std::size_t b) {
            col2im(dcols.data() + b * plane, ld, cin, h, w, kh, kw, stride, padding, ho, wo,
                   gx.data() + b * cin * h * w);
          });
        }
      });
}

template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, int stride,
                           int padding) {
  require_rank("conv_transpose2d", "input", x, 4);
  require_rank("conv_transpose2d", "kernel", weight, 4);
  require(stride >= 1, "conv_transpose2d: stride must be >= 1, got " + std::to_string(stride));
  require(padding >= 0, "conv_transpose2d: padding must be >= 0, got " + std::to_string(padding));
  const std::size_t n = x.size(0), cin = x.size(1), h = x.size(2), w = x.size(3);
  const std::size_t cout = weight.size(1), kh = weight.size(2), kw = weight.size(3);
  require(weight.size(0) == cin, "conv_transpose2d: kernel expects " + std::to_string(weight.size(0)) +
                                     " input channels, input has " + std::to_string(cin));
  if (bias.defined()) {
    require(bias.dim() == 1 && bias.size(0) == cout, "conv_transpose2d: bias shape " + shape_str(bias.shape()) +
                                                         " does not match " + std::to_string(cout) + " outputs");
  }
  const long ho_l = (static_cast<long>(h) - 1) * stride - 2L * padding + static_cast<long>(kh);
  const long wo_l = (static_cast<long>(w) - 1) * stride - 2L * padding + static_cast<long>(kw);
  require(ho_l > 0 && wo_l > 0, "conv_transpose2d: padding " + std::to_string(padding) + " leaves an empty output");
  const std::size_t ho = static_cast<std::size_t>(ho_l), wo = static_cast<std::size_t>(wo_l);
  // The output image is the "input" of the adjoint convolution, whose grid is h x w.
  require(conv_out("conv_transpose2d", "height", ho, kh, stride, padding) == h &&
              conv_out("conv_transpose2d", "width", wo, kw, stride, padding) == w,
          "conv_transpose2d: geometry is not invertible for stride " + std::to_string(stride));
  const std::size_t kdim = cout * kh * kw, plane = h * w, oplane = ho * wo;

  std::vector<T> out(n * cout * oplane, T(0));
  const T* xp = x.data().data();
  const T* wp = weight.data().data();
  const T* bp = bias.defined() ? bias.data().data() : nullptr;
  parallel_for(n, [&](std::size_t b) {
    MatR<T> cols(kdim, plane);
    cols.noalias() = CMapR<T>(wp, cin, kdim).transpose() * CMapR<T>(xp + b * cin * plane, cin, plane);
    T* y = out.data() + b * cout * oplane;
    col2im(cols.data(), plane, cout, ho, wo, kh, kw, stride, padding, h, w, y);
    if (bp) {
      for (std::size_t c = 0; c < cout; ++c) {
        for (std::size_t p = 0; p < oplane; ++p) y[c * oplane + p] += bp[c];
      }
    }
  });

  std::vector<Tensor<T>> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return make_result<T>(
      Shape{n, cout, ho, wo}, std::move(out), "conv_transpose2d", std::move(inputs),
      [=](std::span<const T> g, std::span<const ImplPtr<T>> in) {
        auto gx = input_grad<T>(in, 0);
        auto gw = input_grad<T>(in, 1);
        if (in.size() > 2) {
          auto gb = input_grad<T>(in, 2);
          for (std::size_t b = 0; b < n && !gb.empty(); ++b) {
            for (std::size_t c = 0; c < cout; ++c) {
              T acc = 0;
              const T* row = g.data() + (b * cout + c) * oplane;
              for (std::size_t p = 0; p < oplane; ++p) acc += row[p];
              gb[c] += acc;
            }
          }
        }
        const std::size_t ld = n * plane;
        MatR<T> dcols(kdim, ld);
        for (std::size_t b = 0; b < n; ++b) {
          im2col(g.data() + b * cout * oplane, cout, ho, wo, kh, kw, stride, padding, h, w, dcols.data() + b * plane,
                 ld);
        }
        if (!gw.empty()) {
          MatR<T> xbig(cin, ld);
          for (std::size_t b = 0; b < n; ++b) {
            xbig.middleCols(b * plane, plane) = CMapR<T>(in[0]->data.data() + b * cin * plane, cin, plane);
          }
          MapR<T>(gw.data(), cin, kdim).noalias() += xbig * dcols.transpose();
        }
        if (!gx.empty()) {
          MatR<T> gxbig(cin, ld);
          gxbig.noalias() = CMapR<T>(in[1]->data.data(), cin, kdim) * dcols;
          for (std::size_t b = 0; b < n; ++b) {
            MapR<T>(gx.data() + b * cin * plane, cin, plane) += gxbig.middleCols(b * plane, plane);
          }
        }
      });
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  require_rank("linear", "input", x, 2);
  require_rank("linear", "weight", weight, 2);
  const std::size_t n = x.size(0), in_f = x.size(1), out_f = weight.size(0);
  require(weight.size(1) == in_f, "linear: weight expects " + std::to_string(weight.size(1)) +
                                      " input features, input has " + std::to_string(in_f));
  if (bias.defined()) {
    require(bias.dim() == 1 && bias.size(0) == out_f,
            "linear: bias shape " + shape_str(bias.shape()) + " does not match " + std::to_string(out_f) + " outputs");
  }
  std::vector<T> out(n * out_f);
  CMapR<T> wm(weight.data().data(), out_f, in_f);
  for (std::size_t b = 0; b < n; ++b) {
    // Row-at-a-time products keep each sample's arithmetic independent of the batch size.
    Eigen::Map<Vec<T>> y(out.data() + b * out_f, out_f);
    y.noalias() = wm * Eigen::Map<const Vec<T>>(x.data().data() + b * in_f, in_f);
    if (bias.defined()) y += Eigen::Map<const Vec<T>>(bias.data().data(), out_f);
  }
  std::vector<Tensor<T>> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return make_result<T>(Shape{n, out_f}, std::move(out), "linear", std::move(inputs),
                        [n, in_f, out_f](std::span<const T> g, std::span<const ImplPtr<T>> in) {
                          CMapR<T> gm(g.data(), n, out_f);
                          auto gx = input_grad<T>(in, 0);
                          if (!gx.empty()) {
                            MapR<T>(gx.data(), n, in_f).noalias() += gm * CMapR<T>(in[1]->data.data(), out_f, in_f);
                          }
                          auto gw = input_grad<T>(in, 1);
                          if (!gw.empty()) {
                            MapR<T>(gw.data(), out_f, in_f).noalias() +=
                                gm.transpose() * CMapR<T>(in[0]->data.data(), n, in_f);
                          }
                          if (in.size() > 2) {
                            auto gb = input_grad<T>(in, 2);
                            for (std::size_t b = 0; b < n && !gb.empty(); ++b) {
                              for (std::size_t o = 0; o < out_f; ++o) gb[o] += g[b * out_f + o];
                            }
                          }
                        });
}

// --------------------------------------------------------------- normalization

template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, Tensor<T>& running_mean,
                     Tensor<T>& running_var, bool training, T momentum, T eps) {
  require(x.defined() && (x.dim() == 2 || x.dim() == 4),
          "batch_norm: input must be [N, C] or [N, C, H, W], got " + (x.defined() ? shape_str(x.shape()) : "<undefined>"));
  if (!(eps > T(0))) throw std::invalid_argument("batch_norm: eps must be positive");
  const std::size_t n = x.size(0), c = x.size(1), inner = x.dim() == 4 ? x.size(2) * x.size(3) : 1;
  for (const Tensor<T>* p : {&gamma, &beta, static_cast<const Tensor<T>*>(&running_mean),
                            static_cast<const Tensor<T>*>(&running_var)}) {
    require(p->defined() && p->dim() == 1 && p->size(0) == c,
            "batch_norm: per-channel parameter " + (p->defined() ? shape_str(p->shape()) : std::string("<undefined>")) +
                " does not match " + std::to_string(c) + " channels");
  }
  const std::size_t m = n * inner;
  if (training) require(m > 1, "batch_norm: training mode needs more than one value per channel");
  std::vector<T> mu(c), inv_std(c);
  auto xv = x.data();
  for (std::size_t ch = 0; ch < c; ++ch) {
    if (training) {
      double s = 0.0;
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t p = 0; p < inner; ++p) s += xv[(b * c + ch) * inner + p];
      const double mean_v = s / static_cast<double>(m);
      double sq = 0.0;
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t p = 0; p < inner; ++p) {
          const double d = xv[(b * c + ch) * inner + p] - mean_v;
          sq += d * d;
        }
      const double var = sq / static_cast<double>(m);
      mu[ch] = static_cast<T>(mean_v);
      inv_std[ch] = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
      auto rm = running_mean.data();
      auto rv = running_var.data();
      rm[ch] = momentum * rm[ch] + (T(1) - momentum) * static_cast<T>(mean_v);
      rv[ch] = momentum * rv[ch] + (T(1) - momentum) * static_cast<T>(sq / static_cast<double>(m - 1));
    } else {
      mu[ch] = running_mean.data()[ch];
      inv_std[ch] = T(1) / std::sqrt(running_var.data()[ch] + eps);
    }
  }
  std::vector<T> xhat(x.numel()), out(x.numel());
  auto gv = gamma.data(), bv = beta.data();
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t p = 0; p < inner; ++p) {
        const std::size_t i = (b * c + ch) * inner + p;
        xhat[i] = (xv[i] - mu[ch]) * inv_std[ch];
        out[i] = gv[ch] * xhat[i] + bv[ch];
      }
  auto saved_hat = std::make_shared<std::vector<T>>(std::move(xhat));
  return make_result<T>(
      x.shape(), std::move(out), "batch_norm", {x, gamma, beta},
      [=](std::span<const T> g, std::span<const ImplPtr<T>> in) {
        const auto& xh = *saved_hat;
        auto gx = input_grad<T>(in, 0);
        auto gg = input_grad<T>(in, 1);
        auto gb = input_grad<T>(in, 2);
        const auto& gam = in[1]->data;
        for (std::size_t ch = 0; ch < c; ++ch) {
          T sum_g = 0, sum_gx = 0;
          for (std::size_t b = 0; b < n; ++b)
            for (std::size_t p = 0; p < inner; ++p) {
              const std::size_t i = (b * c + ch) * inner + p;
              sum_g += g[i];
              sum_gx += g[i] * xh[i];
            }
          if (!gg.empty()) gg[ch] += sum_gx;
          if (!gb.empty()) gb[ch] += sum_g;
          if (gx.empty()) continue;
          const T k = gam[ch] * inv_std[ch];
          const T inv_m = T(1) / static_cast<T>(m);
          for (std::size_t b = 0; b < n; ++b)
            for (std::size_t p = 0; p < inner; ++p) {
              const std::size_t i = (b * c + ch) * inner + p;
              gx[i] += training ? k * (g[i] - inv_m * sum_g - xh[i] * inv_m * sum_gx) : k * g[i];
            }
        }
      });
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias, T eps) {
  if (!(eps > T(0))) throw std::invalid_argument("layer_norm: eps must be positive");
  require(x.defined() && x.dim() >= 2, "layer_norm: input must be at least [N, D]");
  const Shape norm_shape(x.shape().begin() + 1, x.shape().end());
  require(gain.defined() && gain.shape() == norm_shape,
          "layer_norm: gain shape " + (gain.defined() ? shape_str(gain.shape()) : std::string("<undefined>")) +
              " does not match normalized shape " + shape_str(norm_shape));
  require(bias.defined() && bias.shape() == norm_shape,
          "layer_norm: bias shape " + (bias.defined() ? shape_str(bias.shape()) : std::string("<undefined>")) +
              " does not match normalized shape " + shape_str(norm_shape));
  const std::size_t n = x.size(0), d = shape_numel(norm_shape);
  std::vector<T> xhat(x.numel()), out(x.numel()), inv_std(n);
  auto xv = x.data(), gv = gain.data(), bv = bias.data();
  for (std::size_t b = 0; b < n; ++b) {
    const T* row = xv.data() + b * d;
    double s = 0.0;
    for (std::size_t i = 0; i < d; ++i) s += row[i];
    const double mu = s / static_cast<double>(d);
    double sq = 0.0;
    for (std::size_t i = 0; i < d; ++i) sq += (row[i] - mu) * (row[i] - mu);
    const double is = 1.0 / std::sqrt(sq / static_cast<double>(d) + static_cast<double>(eps));
    inv_std[b] = static_cast<T>(is);
    for (std::size_t i = 0; i < d; ++i) {
      const T h = static_cast<T>((row[i] - mu) * is);
      xhat[b * d + i] = h;
      out[b * d + i] = gv[i] * h + bv[i];
    }
  }
  auto saved_hat = std::make_shared<std::vector<T>>(std::move(xhat));
  return make_result<T>(x.shape(), std::move(out), "layer_norm", {x, gain, bias},
                        [n, d, saved_hat, inv_std](std::span<const T> g, std::span<const ImplPtr<T>> in) {
                          const auto& xh = *saved_hat;
                          const auto& gain_v = in[1]->data;
                          auto gx = input_grad<T>(in, 0);
                          auto gg = input_grad<T>(in, 1);
                          auto gb = input_grad<T>(in, 2);
                          for (std::size_t b = 0; b < n; ++b) {
                            const T* gr = g.data() + b * d;
                            const T* hr = xh.data() + b * d;
                            if (!gg.empty())
                              for (std::size_t i = 0; i < d; ++i) gg[i] += gr[i] * hr[i];
                            if (!gb.empty())
                              for (std::size_t i = 0; i < d; ++i) gb[i] += gr[i];
                            if (gx.empty()) continue;
                            double m1 = 0.0, m2 = 0.0;
                            for (std::size_t i = 0; i < d; ++i) {
                              const double dh = static_cast<double>(gr[i]) * gain_v[i];
                              m1 += dh;
                              m2 += dh * hr[i];
                            }
                            m1 /= static_cast<double>(d);
                            m2 /= static_cast<double>(d);
                            for (std::size_t i = 0; i < d; ++i) {
                              const double dh = static_cast<double>(gr[i]) * gain_v[i];
                              gx[b * d + i] += static_cast<T>(inv_std[b] * (dh - m1 - hr[i] * m2));
                            }
                          }
                        });
}

// ------------------------------------------------------------------- embedding

template <typename T>
Tensor<T> embedding(const Tensor<T>& table, std::span<const int> indices, std::size_t n, std::size_t height,
                    std::size_t width) {
  require_rank("embedding", "table", table, 2);
  const std::size_t k = table.size(0), e = table.size(1), plane = height * width;
  require(indices.size() == n * plane, "embedding: expected " + std::to_string(n * plane) + " indices, got " +
                                           std::to_string(indices.size()));
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] < 0 || static_cast<std::size_t>(indices[i]) >= k) {
      throw std::out_of_range("embedding: index " + std::to_string(indices[i]) + " at position " +
                              std::to_string(i) + " outside [0, " + std::to_string(k) + ")");
    }
  }
  std::vector<T> out(n * e * plane);
  auto tv = table.data();
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t p = 0; p < plane; ++p) {
      const std::size_t row = static_cast<std::size_t>(indices[b * plane + p]);
      for (std::size_t j = 0; j < e; ++j) out[(b * e + j) * plane + p] = tv[row * e + j];
    }
  auto idx = std::make_shared<std::vector<int>>(indices.begin(), indices.end());
  return make_result<T>(Shape{n, e, height, width}, std::move(out), "embedding", {table},
                        [n, e, plane, idx](std::span<const T> g, std::span<const ImplPtr<T>> in) {
                          auto gt = input_grad<T>(in, 0);
                          if (gt.empty()) return;
                          for (std::size_t b = 0; b < n; ++b)
                            for (std::size_t p = 0; p < plane; ++p) {
                              const std::size_t row = static_cast<std::size_t>((*idx)[b * plane + p]);
                              for (std::size_t j = 0; j < e; ++j) gt[row * e + j] += g[(b * e + j) * plane + p];
                            }
                        });
}

template <typename T>
Tensor<T> straight_through(const Tensor<T>& features, const Tensor<T>& quantized) {
  require_same_shape("straight_through", features, quantized);
  std::vector<T> out(quantized.data().begin(), quantized.data().end());
  return make_result<T>(features.shape(), std::move(out), "straight_through", {features},
                        [](std::span<const T> g, std::span<const ImplPtr<T>> in) {
                          auto gx = input_grad<T>(in, 0);
                          for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
                        });
}

#define LDWM_INSTANTIATE_OPS(T)                                                                                   \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                                     \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                                     \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                                     \
  template Tensor<T> add_scalar(const Tensor<T>&, T);                                                             \
  template Tensor<T> mul_scalar(const Tensor<T>&, T);                                                             \
  template Tensor<T> exp(const Tensor<T>&);                                                                       \
  template Tensor<T> log(const Tensor<T>&);                                                                       \
  template Tensor<T> clamp(const Tensor<T>&, T, T);                                                               \
  template Tensor<T> minimum(const Tensor<T>&, const Tensor<T>&);                                                 \
  template Tensor<T> leaky_relu(const Tensor<T>&, T);                                                             \
  template Tensor<T> sigmoid(const Tensor<T>&);                                                                   \
  template Tensor<T> tanh(const Tensor<T>&);                                                                      \
  template Tensor<T> softmax(const Tensor<T>&);                                                                   \
  template Tensor<T> log_softmax(const Tensor<T>&);                                                               \
  template Tensor<T> softmax_cross_entropy(const Tensor<T>&, std::span<const int>);                               \
  template Tensor<T> pick(const Tensor<T>&, std::span<const int>);                                                \
  template Tensor<T> sum(const Tensor<T>&);                                                                       \
  template Tensor<T> mean(const Tensor<T>&);                                                                      \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                                            \
  template Tensor<T> concat_channels(const std::vector<Tensor<T>>&);                                              \
  template Tensor<T> slice_channels(const Tensor<T>&, std::size_t, std::size_t);                                  \
  template Tensor<T> broadcast_spatial(const Tensor<T>&, std::size_t, std::size_t);                               \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int, int);                      \
  template Tensor<T> conv_transpose2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int, int);            \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> batch_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Tensor<T>&, Tensor<T>&,     \
                                bool, T, T);                                                                      \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);                         \
  template Tensor<T> embedding(const Tensor<T>&, std::span<const int>, std::size_t, std::size_t, std::size_t);    \
  template Tensor<T> straight_through(const Tensor<T>&, const Tensor<T>&);

LDWM_INSTANTIATE_OPS(float)
LDWM_INSTANTIATE_OPS(double)

}  // namespace ldwm::ops
