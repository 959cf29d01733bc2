#include "lrd/tensor/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace lrd {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

void require(bool ok, const std::string& msg) {
  if (!ok) throw ShapeError(msg);
}

template <typename T>
void require_same_shape(const BasicTensor<T>& a, const BasicTensor<T>& b, const char* op) {
  require(a.shape() == b.shape(), std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                      " vs " + shape_str(b.shape()));
}

template <typename T>
void require_rank(const BasicTensor<T>& x, int rank, const char* op) {
  require(x.rank() == rank, std::string(op) + ": expected rank " + std::to_string(rank) +
                                " input, got " + shape_str(x.shape()));
}

// Stable log(1 + e^x).
template <typename T>
T softplus(T x) {
  return x > T{0} ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

template <typename T>
T sigmoid_scalar(T x) {
  if (x >= T{0}) return T{1} / (T{1} + std::exp(-x));
  const T e = std::exp(x);
  return e / (T{1} + e);
}

template <typename T, typename Forward, typename Derivative>
BasicTensor<T> unary(const BasicTensor<T>& x, std::string_view op, Forward f, Derivative dfdx) {
  const auto in = x.data();
  std::vector<T> out(in.size());
  std::transform(in.begin(), in.end(), out.begin(), f);
  return BasicTensor<T>::from_op(
      x.shape(), std::move(out), {x}, op,
      [x, dfdx](std::span<const T> y, std::span<const T> g, std::span<const std::span<T>> gi) {
        const auto xv = x.data();
        auto gx = gi[0];
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * dfdx(xv[i], y[i]);
      });
}

struct ConvGeometry {
  std::int64_t n, ci, h, w, co, kh, kw, ho, wo;
  int stride, pad;
  std::int64_t k() const { return ci * kh * kw; }
  std::int64_t p() const { return ho * wo; }
};

template <typename T>
void im2col(const T* x, const ConvGeometry& g, T* col) {
  const auto np = g.n * g.p();
  for (std::int64_t c = 0; c < g.ci; ++c) {
    for (std::int64_t ky = 0; ky < g.kh; ++ky) {
      for (std::int64_t kx = 0; kx < g.kw; ++kx) {
        T* row = col + ((c * g.kh + ky) * g.kw + kx) * np;
        for (std::int64_t n = 0; n < g.n; ++n) {
          const T* plane = x + (n * g.ci + c) * g.h * g.w;
          T* dst = row + n * g.p();
          for (std::int64_t oy = 0; oy < g.ho; ++oy) {
            const std::int64_t iy = oy * g.stride - g.pad + ky;
            T* d = dst + oy * g.wo;
            if (iy < 0 || iy >= g.h) {
              std::fill(d, d + g.wo, T{0});
              continue;
            }
            const T* src = plane + iy * g.w;
            for (std::int64_t ox = 0; ox < g.wo; ++ox) {
              const std::int64_t ix = ox * g.stride - g.pad + kx;
              d[ox] = (ix >= 0 && ix < g.w) ? src[ix] : T{0};
            }
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, const ConvGeometry& g, T* x) {
  const auto np = g.n * g.p();
  for (std::int64_t c = 0; c < g.ci; ++c) {
    for (std::int64_t ky = 0; ky < g.kh; ++ky) {
      for (std::int64_t kx = 0; kx < g.kw; ++kx) {
        const T* row = col + ((c * g.kh + ky) * g.kw + kx) * np;
        for (std::int64_t n = 0; n < g.n; ++n) {
          T* plane = x + (n * g.ci + c) * g.h * g.w;
          const T* src = row + n * g.p();
          for (std::int64_t oy = 0; oy < g.ho; ++oy) {
            const std::int64_t iy = oy * g.stride - g.pad + ky;
            if (iy < 0 || iy >= g.h) continue;
            T* dst = plane + iy * g.w;
            const T* s = src + oy * g.wo;
            for (std::int64_t ox = 0; ox < g.wo; ++ox) {
              const std::int64_t ix = ox * g.stride - g.pad + kx;
              if (ix >= 0 && ix < g.w) dst[ix] += s[ox];
            }
          }
        }
      }
    }
  }
}

Shape drop_axis_prefix(const Shape& s, std::size_t from) {
  return Shape(s.begin() + static_cast<std::ptrdiff_t>(from), s.end());
}

}  // namespace

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same_shape(a, b, "add");
  std::vector<T> out(a.data().begin(), a.data().end());
  const auto bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return BasicTensor<T>::from_op(a.shape(), std::move(out), {a, b}, "add",
                                 [](auto, std::span<const T> g, std::span<const std::span<T>> gi) {
                                   for (auto& gx : gi)
                                     for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
                                 });
}

template <typename T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same_shape(a, b, "sub");
  std::vector<T> out(a.data().begin(), a.data().end());
  const auto bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return BasicTensor<T>::from_op(a.shape(), std::move(out), {a, b}, "sub",
                                 [](auto, std::span<const T> g, std::span<const std::span<T>> gi) {
                                   for (std::size_t i = 0; i < gi[0].size(); ++i) gi[0][i] += g[i];
                                   for (std::size_t i = 0; i < gi[1].size(); ++i) gi[1][i] -= g[i];
                                 });
}

template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same_shape(a, b, "mul");
  const auto av = a.data();
  const auto bv = b.data();
  std::vector<T> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return BasicTensor<T>::from_op(
      a.shape(), std::move(out), {a, b}, "mul",
      [a, b](auto, std::span<const T> g, std::span<const std::span<T>> gi) {
        const auto av = a.data();
        const auto bv = b.data();
        for (std::size_t i = 0; i < gi[0].size(); ++i) gi[0][i] += g[i] * bv[i];
        for (std::size_t i = 0; i < gi[1].size(); ++i) gi[1][i] += g[i] * av[i];
      });
}

template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& x, T factor) {
  std::vector<T> out(x.data().begin(), x.data().end());
  for (auto& v : out) v *= factor;
  return BasicTensor<T>::from_op(
      x.shape(), std::move(out), {x}, "scale",
      [factor](auto, std::span<const T> g, std::span<const std::span<T>> gi) {
        for (std::size_t i = 0; i < gi[0].size(); ++i) gi[0][i] += factor * g[i];
      });
}

template <typename T>
BasicTensor<T> add_scalar(const BasicTensor<T>& x, T offset) {
  std::vector<T> out(x.data().begin(), x.data().end());
  for (auto& v : out) v += offset;
  return BasicTensor<T>::from_op(x.shape(), std::move(out), {x}, "add_scalar",
                                 [](auto, std::span<const T> g, std::span<const std::span<T>> gi) {
                                   for (std::size_t i = 0; i < gi[0].size(); ++i) gi[0][i] += g[i];
                                 });
}

template <typename T>
BasicTensor<T> broadcast_mul(const BasicTensor<T>& x, const BasicTensor<T>& w) {
  const auto& xs = x.shape();
  const auto& ws = w.shape();
  require(ws.size() <= xs.size() && std::equal(ws.begin(), ws.end(), xs.begin()),
          "broadcast_mul: " + shape_str(ws) + " is not a prefix of " + shape_str(xs));
  const std::int64_t inner = x.numel() / w.numel();
  const auto xv = x.data();
  const auto wv = w.data();
  std::vector<T> out(xv.size());
  for (std::int64_t j = 0; j < w.numel(); ++j)
    for (std::int64_t i = 0; i < inner; ++i) out[j * inner + i] = xv[j * inner + i] * wv[j];
  return BasicTensor<T>::from_op(
      xs, std::move(out), {x, w}, "broadcast_mul",
      [x, w, inner](auto, std::span<const T> g, std::span<const std::span<T>> gi) {
        const auto xv = x.data();
        const auto wv = w.data();
        for (std::int64_t j = 0; j < w.numel(); ++j) {
          T acc{0};
          for (std::int64_t i = 0; i < inner; ++i) {
            const auto k = j * inner + i;
            if (!gi[0].empty()) gi[0][k] += g[k] * wv[j];
            acc += g[k] * xv[k];
          }
          if (!gi[1].empty()) gi[1][j] += acc;
        }
      });
}

template <typename T>
BasicTensor<T> convex_mix(const BasicTensor<T>& a, const BasicTensor<T>& b, const BasicTensor<T>& w) {
  require(a.shape() == b.shape(), "convex_mix: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const auto& ws = w.shape();
  require(ws.size() <= a.shape().size() && std::equal(ws.begin(), ws.end(), a.shape().begin()),
          "convex_mix: " + shape_str(ws) + " is not a prefix of " + shape_str(a.shape()));
  const std::int64_t inner = a.numel() / w.numel();
  const auto av = a.data(), bv = b.data(), wv = w.data();
  std::vector<T> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) {
    const T x = av[i], y = bv[i];
    out[i] = std::clamp(y + wv[static_cast<std::int64_t>(i) / inner] * (x - y), std::min(x, y), std::max(x, y));
  }
  return BasicTensor<T>::from_op(
      a.shape(), std::move(out), {a, b, w}, "convex_mix",
      [a, b, w, inner](auto, std::span<const T> g, std::span<const std::span<T>> gi) {
        const auto av = a.data(), bv = b.data(), wv = w.data();
        for (std::size_t i = 0; i < g.size(); ++i) {
          const auto j = static_cast<std::int64_t>(i) / inner;
          if (!gi[0].empty()) gi[0][i] += g[i] * wv[j];
          if (!gi[1].empty()) gi[1][i] += g[i] * (T{1} - wv[j]);
          if (!gi[2].empty()) gi[2][j] += g[i] * (av[i] - bv[i]);
        }
      });
}

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& x) {
  return unary(
      x, "relu", [](T v) { return v > T{0} ? v : T{0}; },
      [](T v, T) { return v > T{0} ? T{1} : T{0}; });
}

template <typename T>
BasicTensor<T> sigmoid(const BasicTensor<T>& x) {
  return unary(
      x, "sigmoid", [](T v) { return sigmoid_scalar(v); }, [](T, T y) { return y * (T{1} - y); });
}

template <typename T>
BasicTensor<T> exp(const BasicTensor<T>& x) {
  return unary(
      x, "exp", [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}

template <typename T>
BasicTensor<T> log(const BasicTensor<T>& x) {
  return unary(
      x, "log", [](T v) { return std::log(v); }, [](T v, T) { return T{1} / v; });
}

template <typename T>
BasicTensor<T> abs(const BasicTensor<T>& x) {
  return unary(
      x, "abs", [](T v) { return std::abs(v); },
      [](T v, T) { return v > T{0} ? T{1} : (v < T{0} ? T{-1} : T{0}); });
}

template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& x) {
  const auto xv = x.data();
  const T total = std::accumulate(xv.begin(), xv.end(), T{0});
  return BasicTensor<T>::from_op(Shape{}, {total}, {x}, "sum",
                                 [](auto, std::span<const T> g, std::span<const std::span<T>> gi) {
                                   for (auto& v : gi[0]) v += g[0];
                                 });
}

template <typename T>
BasicTensor<T> mean(const BasicTensor<T>& x) {
  const auto xv = x.data();
  const T inv = T{1} / static_cast<T>(xv.size());
  const T total = std::accumulate(xv.begin(), xv.end(), T{0});
  return BasicTensor<T>::from_op(
      Shape{}, {total * inv}, {x}, "mean",
      [inv](auto, std::span<const T> g, std::span<const std::span<T>> gi) {
        for (auto& v : gi[0]) v += g[0] * inv;
      });
}

template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& x, int axis) {
  const int r = x.rank();
  require(r >= 1, "softmax: scalar input");
  if (axis < 0) axis += r;
  require(axis >= 0 && axis < r, "softmax: axis out of range");
  const auto& s = x.shape();
  std::int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= s[static_cast<std::size_t>(i)];
  for (int i = axis + 1; i < r; ++i) inner *= s[static_cast<std::size_t>(i)];
  const std::int64_t len = s[static_cast<std::size_t>(axis)];
  const auto xv = x.data();
  std::vector<T> out(xv.size());
  for (std::int64_t o = 0; o < outer; ++o) {
    for (std::int64_t i = 0; i < inner; ++i) {
      const std::int64_t base = o * len * inner + i;
      T mx = -std::numeric_limits<T>::infinity();
      for (std::int64_t k = 0; k < len; ++k) mx = std::max(mx, xv[base + k * inner]);
      T z{0};
      for (std::int64_t k = 0; k < len; ++k) {
        const T e = std::exp(xv[base + k * inner] - mx);
        out[base + k * inner] = e;
        z += e;
      }
      for (std::int64_t k = 0; k < len; ++k) out[base + k * inner] /= z;
    }
  }
  return BasicTensor<T>::from_op(
      s, std::move(out), {x}, "softmax",
      [outer, inner, len](std::span<const T> y, std::span<const T> g,
                          std::span<const std::span<T>> gi) {
        for (std::int64_t o = 0; o < outer; ++o) {
          for (std::int64_t i = 0; i < inner; ++i) {
            const std::int64_t base = o * len * inner + i;
            T dot{0};
            for (std::int64_t k = 0; k < len; ++k) dot += g[base + k * inner] * y[base + k * inner];
            for (std::int64_t k = 0; k < len; ++k) {
              const auto idx = base + k * inner;
              gi[0][idx] += y[idx] * (g[idx] - dot);
            }
          }
        }
      });
}

template <typename T>
BasicTensor<T> linear(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& b) {
  require_rank(x, 2, "linear");
  require_rank(w, 2, "linear");
  const auto n = x.dim(0), in = x.dim(1), out_dim = w.dim(0);
  require(w.dim(1) == in, "linear: weight " + shape_str(w.shape()) + " incompatible with input " +
                              shape_str(x.shape()));
  require(b.rank() == 1 && b.dim(0) == out_dim, "linear: bias shape " + shape_str(b.shape()));
  std::vector<T> out(static_cast<std::size_t>(n * out_dim));
  {
    MatMap<T> y(out.data(), n, out_dim);
    y.noalias() = ConstMatMap<T>(x.data().data(), n, in) *
                  ConstMatMap<T>(w.data().data(), out_dim, in).transpose();
    const auto bv = b.data();
    for (std::int64_t r = 0; r < n; ++r)
      for (std::int64_t c = 0; c < out_dim; ++c) y(r, c) += bv[c];
  }
  return BasicTensor<T>::from_op(
      Shape{n, out_dim}, std::move(out), {x, w, b}, "linear",
      [x, w, n, in, out_dim](auto, std::span<const T> g, std::span<const std::span<T>> gi) {
        ConstMatMap<T> gy(g.data(), n, out_dim);
        if (!gi[0].empty()) {
          MatMap<T>(gi[0].data(), n, in).noalias() += gy * ConstMatMap<T>(w.data().data(), out_dim, in);
        }
        if (!gi[1].empty()) {
          MatMap<T>(gi[1].data(), out_dim, in).noalias() +=
              gy.transpose() * ConstMatMap<T>(x.data().data(), n, in);
        }
        if (!gi[2].empty()) {
          for (std::int64_t r = 0; r < n; ++r)
            for (std::int64_t c = 0; c < out_dim; ++c) gi[2][c] += gy(r, c);
        }
      });
}

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                      const BasicTensor<T>& bias, int stride, int padding) {
  require_rank(input, 4, "conv2d");
  require_rank(weight, 4, "conv2d");
  require(stride >= 1 && padding >= 0, "conv2d: invalid stride/padding");
  ConvGeometry g{};
  g.n = input.dim(0);
  g.ci = input.dim(1);
  g.h = input.dim(2);
  g.w = input.dim(3);
  g.co = weight.dim(0);
  g.kh = weight.dim(2);
  g.kw = weight.dim(3);
  g.stride = stride;
  g.pad = padding;
  require(weight.dim(1) == g.ci, "conv2d: weight expects " + std::to_string(weight.dim(1)) +
                                     " input channels, input has " + std::to_string(g.ci));
  require(g.h + 2 * padding >= g.kh && g.w + 2 * padding >= g.kw,
          "conv2d: kernel larger than padded input " + shape_str(input.shape()));
  if (bias.defined()) {
    require(bias.rank() == 1 && bias.dim(0) == g.co, "conv2d: bias shape " + shape_str(bias.shape()));
  }
  g.ho = (g.h + 2 * padding - g.kh) / stride + 1;
  g.wo = (g.w + 2 * padding - g.kw) / stride + 1;

  const auto K = g.k();
  const auto P = g.p();
  const auto NP = g.n * P;
  auto col = std::make_shared<std::vector<T>>(static_cast<std::size_t>(K * NP));
  im2col(input.data().data(), g, col->data());

  RowMat<T> prod = ConstMatMap<T>(weight.data().data(), g.co, K) * ConstMatMap<T>(col->data(), K, NP);
  std::vector<T> out(static_cast<std::size_t>(g.n * g.co * P));
  const auto bv = bias.defined() ? bias.data() : std::span<const T>();
  for (std::int64_t n = 0; n < g.n; ++n) {
    for (std::int64_t c = 0; c < g.co; ++c) {
      const T b = bv.empty() ? T{0} : bv[c];
      const T* src = prod.data() + c * NP + n * P;
      T* dst = out.data() + (n * g.co + c) * P;
      for (std::int64_t p = 0; p < P; ++p) dst[p] = src[p] + b;
    }
  }

  std::vector<BasicTensor<T>> inputs{input, weight};
  if (bias.defined()) inputs.push_back(bias);
  const bool has_bias = bias.defined();
  return BasicTensor<T>::from_op(
      Shape{g.n, g.co, g.ho, g.wo}, std::move(out), std::move(inputs), "conv2d",
      [g, weight, col, has_bias](auto, std::span<const T> grad, std::span<const std::span<T>> gi) {
        const auto K = g.k();
        const auto P = g.p();
        const auto NP = g.n * P;
        RowMat<T> gm(g.co, NP);
        for (std::int64_t n = 0; n < g.n; ++n)
          for (std::int64_t c = 0; c < g.co; ++c)
            std::copy_n(grad.data() + (n * g.co + c) * P, P, gm.data() + c * NP + n * P);
        if (!gi[1].empty()) {
          MatMap<T>(gi[1].data(), g.co, K).noalias() +=
              gm * ConstMatMap<T>(col->data(), K, NP).transpose();
        }
        if (has_bias && !gi[2].empty()) {
          for (std::int64_t c = 0; c < g.co; ++c) gi[2][c] += gm.row(c).sum();
        }
        if (!gi[0].empty()) {
          RowMat<T> dcol = ConstMatMap<T>(weight.data().data(), g.co, K).transpose() * gm;
          col2im_add(dcol.data(), g, gi[0].data());
        }
      });
}

template <typename T>
BasicTensor<T> max_pool2d(const BasicTensor<T>& x, int kernel, int stride) {
  require_rank(x, 4, "max_pool2d");
  require(kernel >= 1 && stride >= 1, "max_pool2d: invalid kernel/stride");
  const auto n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  require(h >= kernel && w >= kernel, "max_pool2d: kernel larger than input");
  const auto ho = (h - kernel) / stride + 1, wo = (w - kernel) / stride + 1;
  const auto xv = x.data();
  std::vector<T> out(static_cast<std::size_t>(n * c * ho * wo));
  auto argmax = std::make_shared<std::vector<std::int64_t>>(out.size());
  for (std::int64_t plane = 0; plane < n * c; ++plane) {
    const auto base = plane * h * w;
    for (std::int64_t oy = 0; oy < ho; ++oy) {
      for (std::int64_t ox = 0; ox < wo; ++ox) {
        std::int64_t best = base + (oy * stride) * w + ox * stride;
        for (int ky = 0; ky < kernel; ++ky)
          for (int kx = 0; kx < kernel; ++kx) {
            const auto idx = base + (oy * stride + ky) * w + ox * stride + kx;
            if (xv[idx] > xv[best]) best = idx;
          }
        const auto o = (plane * ho + oy) * wo + ox;
        out[o] = xv[best];
        (*argmax)[o] = best;
      }
    }
  }
  return BasicTensor<T>::from_op(
      Shape{n, c, ho, wo}, std::move(out), {x}, "max_pool2d",
      [argmax](auto, std::span<const T> g, std::span<const std::span<T>> gi) {
        for (std::size_t o = 0; o < g.size(); ++o) gi[0][(*argmax)[o]] += g[o];
      });
}

template <typename T>
BasicTensor<T> global_average_pool(const BasicTensor<T>& x) {
  require_rank(x, 4, "global_average_pool");
  const auto n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  const auto xv = x.data();
  std::vector<T> out(static_cast<std::size_t>(n * c));
  for (std::int64_t p = 0; p < n * c; ++p) {
    T acc{0};
    for (std::int64_t i = 0; i < hw; ++i) acc += xv[p * hw + i];
    out[p] = acc / static_cast<T>(hw);
  }
  return BasicTensor<T>::from_op(
      Shape{n, c}, std::move(out), {x}, "global_average_pool",
      [hw](auto, std::span<const T> g, std::span<const std::span<T>> gi) {
        const T inv = T{1} / static_cast<T>(hw);
        for (std::size_t p = 0; p < g.size(); ++p)
          for (std::int64_t i = 0; i < hw; ++i) gi[0][p * hw + i] += g[p] * inv;
      });
}

template <typename T>
BasicTensor<T> upsample_nearest_2x(const BasicTensor<T>& x) {
  require_rank(x, 4, "upsample_nearest_2x");
  const auto n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const auto xv = x.data();
  std::vector<T> out(static_cast<std::size_t>(n * c * h * w * 4));
  for (std::int64_t p = 0; p < n * c; ++p)
    for (std::int64_t y = 0; y < 2 * h; ++y)
      for (std::int64_t xx = 0; xx < 2 * w; ++xx)
        out[(p * 2 * h + y) * 2 * w + xx] = xv[(p * h + y / 2) * w + xx / 2];
  return BasicTensor<T>::from_op(
      Shape{n, c, 2 * h, 2 * w}, std::move(out), {x}, "upsample_nearest_2x",
      [n, c, h, w](auto, std::span<const T> g, std::span<const std::span<T>> gi) {
        for (std::int64_t p = 0; p < n * c; ++p)
          for (std::int64_t y = 0; y < 2 * h; ++y)
            for (std::int64_t xx = 0; xx < 2 * w; ++xx)
              gi[0][(p * h + y / 2) * w + xx / 2] += g[(p * 2 * h + y) * 2 * w + xx];
      });
}

template <typename T>
BasicTensor<T> reshape(const BasicTensor<T>& x, Shape shape) {
  require(numel_of(shape) == x.numel(),
          "reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  std::vector<T> out(x.data().begin(), x.data().end());
  return BasicTensor<T>::from_op(std::move(shape), std::move(out), {x}, "reshape",
                                 [](auto, std::span<const T> g, std::span<const std::span<T>> gi) {
                                   for (std::size_t i = 0; i < g.size(); ++i) gi[0][i] += g[i];
                                 });
}

template <typename T>
BasicTensor<T> concat_channels(const std::vector<BasicTensor<T>>& xs) {
  require(!xs.empty(), "concat_channels: no inputs");
  const auto& s0 = xs.front().shape();
  require(s0.size() >= 2, "concat_channels: inputs need rank >= 2");
  const Shape tail = drop_axis_prefix(s0, 2);
  const auto n = s0[0];
  std::int64_t inner = 1;
  for (auto d : tail) inner *= d;
  std::vector<std::int64_t> widths;
  std::int64_t total = 0;
  for (const auto& x : xs) {
    const auto& s = x.shape();
    require(s.size() == s0.size() && s[0] == n && drop_axis_prefix(s, 2) == tail,
            "concat_channels: incompatible shapes " + shape_str(s0) + " and " + shape_str(s));
    widths.push_back(s[1] * inner);
    total += s[1];
  }
  const std::int64_t row = total * inner;
  std::vector<T> out(static_cast<std::size_t>(n * row));
  std::int64_t offset = 0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const auto xv = xs[k].data();
    for (std::int64_t b = 0; b < n; ++b)
      std::copy_n(xv.data() + b * widths[k], widths[k], out.data() + b * row + offset);
    offset += widths[k];
  }
  Shape shape = s0;
  shape[1] = total;
  return BasicTensor<T>::from_op(
      std::move(shape), std::move(out), xs, "concat_channels",
      [widths, n, row](auto, std::span<const T> g, std::span<const std::span<T>> gi) {
        std::int64_t offset = 0;
        for (std::size_t k = 0; k < widths.size(); ++k) {
          if (!gi[k].empty()) {
            for (std::int64_t b = 0; b < n; ++b)
              for (std::int64_t i = 0; i < widths[k]; ++i)
                gi[k][b * widths[k] + i] += g[b * row + offset + i];
          }
          offset += widths[k];
        }
      });
}

template <typename T>
BasicTensor<T> slice_channels(const BasicTensor<T>& x, std::int64_t start, std::int64_t length) {
  require(x.rank() >= 2, "slice_channels: input needs rank >= 2");
  const auto& s = x.shape();
  require(start >= 0 && length >= 1 && start + length <= s[1],
          "slice_channels: range out of bounds for " + shape_str(s));
  std::int64_t inner = 1;
  for (std::size_t i = 2; i < s.size(); ++i) inner *= s[i];
  const auto n = s[0];
  const auto src_row = s[1] * inner, dst_row = length * inner, off = start * inner;
  const auto xv = x.data();
  std::vector<T> out(static_cast<std::size_t>(n * dst_row));
  for (std::int64_t b = 0; b < n; ++b)
    std::copy_n(xv.data() + b * src_row + off, dst_row, out.data() + b * dst_row);
  Shape shape = s;
  shape[1] = length;
  return BasicTensor<T>::from_op(
      std::move(shape), std::move(out), {x}, "slice_channels",
      [n, src_row, dst_row, off](auto, std::span<const T> g, std::span<const std::span<T>> gi) {
        for (std::int64_t b = 0; b < n; ++b)
          for (std::int64_t i = 0; i < dst_row; ++i) gi[0][b * src_row + off + i] += g[b * dst_row + i];
      });
}

template <typename T>
BasicTensor<T> to_rows(const BasicTensor<T>& x) {
  require_rank(x, 4, "to_rows");
  const auto n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  const auto xv = x.data();
  std::vector<T> out(xv.size());
  for (std::int64_t b = 0; b < n; ++b)
    for (std::int64_t ch = 0; ch < c; ++ch)
      for (std::int64_t p = 0; p < hw; ++p) out[(b * hw + p) * c + ch] = xv[(b * c + ch) * hw + p];
  return BasicTensor<T>::from_op(
      Shape{n * hw, c}, std::move(out), {x}, "to_rows",
      [n, c, hw](auto, std::span<const T> g, std::span<const std::span<T>> gi) {
        for (std::int64_t b = 0; b < n; ++b)
          for (std::int64_t ch = 0; ch < c; ++ch)
            for (std::int64_t p = 0; p < hw; ++p) gi[0][(b * c + ch) * hw + p] += g[(b * hw + p) * c + ch];
      });
}

template <typename T>
BasicTensor<T> concat_rows(const std::vector<BasicTensor<T>>& xs) {
  require(!xs.empty(), "concat_rows: no inputs");
  const auto cols = xs.front().dim(1);
  std::int64_t rows = 0;
  for (const auto& x : xs) {
    require(x.rank() == 2 && x.dim(1) == cols, "concat_rows: incompatible shape " + shape_str(x.shape()));
    rows += x.dim(0);
  }
  std::vector<T> out;
  out.reserve(static_cast<std::size_t>(rows * cols));
  std::vector<std::int64_t> sizes;
  for (const auto& x : xs) {
    out.insert(out.end(), x.data().begin(), x.data().end());
    sizes.push_back(x.numel());
  }
  return BasicTensor<T>::from_op(
      Shape{rows, cols}, std::move(out), xs, "concat_rows",
      [sizes](auto, std::span<const T> g, std::span<const std::span<T>> gi) {
        std::int64_t off = 0;
        for (std::size_t k = 0; k < sizes.size(); ++k) {
          for (std::int64_t i = 0; i < static_cast<std::int64_t>(gi[k].size()); ++i) gi[k][i] += g[off + i];
          off += sizes[k];
        }
      });
}

template <typename T>
BasicTensor<T> gather_rows(const BasicTensor<T>& x, std::span<const std::int64_t> rows) {
  require_rank(x, 2, "gather_rows");
  require(!rows.empty(), "gather_rows: empty index list");
  const auto r = x.dim(0), c = x.dim(1);
  auto idx = std::make_shared<std::vector<std::int64_t>>(rows.begin(), rows.end());
  const auto xv = x.data();
  std::vector<T> out(idx->size() * static_cast<std::size_t>(c));
  for (std::size_t i = 0; i < idx->size(); ++i) {
    const auto src = (*idx)[i];
    require(src >= 0 && src < r, "gather_rows: index out of range");
    std::copy_n(xv.data() + src * c, c, out.data() + static_cast<std::int64_t>(i) * c);
  }
  return BasicTensor<T>::from_op(
      Shape{static_cast<std::int64_t>(idx->size()), c}, std::move(out), {x}, "gather_rows",
      [idx, c](auto, std::span<const T> g, std::span<const std::span<T>> gi) {
        for (std::size_t i = 0; i < idx->size(); ++i)
          for (std::int64_t k = 0; k < c; ++k) gi[0][(*idx)[i] * c + k] += g[static_cast<std::int64_t>(i) * c + k];
      });
}

template <typename T>
BasicTensor<T> sigmoid_focal_loss(const BasicTensor<T>& logits, std::span<const int> labels, T alpha,
                                  T gamma) {
  require_rank(logits, 2, "sigmoid_focal_loss");
  const auto rows = logits.dim(0), k = logits.dim(1);
  require(static_cast<std::int64_t>(labels.size()) == rows, "sigmoid_focal_loss: label count mismatch");
  auto lab = std::make_shared<std::vector<int>>(labels.begin(), labels.end());
  const auto xv = logits.data();
  T total{0};
  for (std::int64_t r = 0; r < rows; ++r) {
    for (std::int64_t c = 0; c < k; ++c) {
      const T x = xv[r * k + c];
      const T p = sigmoid_scalar(x);
      if ((*lab)[r] == c) {
        total += alpha * std::pow(T{1} - p, gamma) * softplus(-x);
      } else {
        total += (T{1} - alpha) * std::pow(p, gamma) * softplus(x);
      }
    }
  }
  return BasicTensor<T>::from_op(
      Shape{}, {total}, {logits}, "sigmoid_focal_loss",
      [logits, lab, k, alpha, gamma](auto, std::span<const T> g, std::span<const std::span<T>> gi) {
        const auto xv = logits.data();
        const auto rows = static_cast<std::int64_t>(lab->size());
        for (std::int64_t r = 0; r < rows; ++r) {
          for (std::int64_t c = 0; c < k; ++c) {
            const T x = xv[r * k + c];
            const T p = sigmoid_scalar(x);
            T d;
            if ((*lab)[r] == c) {
              // alpha (1-p)^g [g p log p - (1-p)]
              d = alpha * std::pow(T{1} - p, gamma) * (gamma * p * (-softplus(-x)) - (T{1} - p));
            } else {
              // (1-alpha) p^g [p - g (1-p) log(1-p)]
              d = (T{1} - alpha) * std::pow(p, gamma) * (p - gamma * (T{1} - p) * (-softplus(x)));
            }
            gi[0][r * k + c] += g[0] * d;
          }
        }
      });
}

template <typename T>
BasicTensor<T> bce_with_logits(const BasicTensor<T>& logits, std::span<const T> targets) {
  require(static_cast<std::int64_t>(targets.size()) == logits.numel(),
          "bce_with_logits: target count mismatch");
  auto tgt = std::make_shared<std::vector<T>>(targets.begin(), targets.end());
  const auto xv = logits.data();
  T total{0};
  for (std::size_t i = 0; i < xv.size(); ++i) total += softplus(xv[i]) - (*tgt)[i] * xv[i];
  return BasicTensor<T>::from_op(
      Shape{}, {total}, {logits}, "bce_with_logits",
      [logits, tgt](auto, std::span<const T> g, std::span<const std::span<T>> gi) {
        const auto xv = logits.data();
        for (std::size_t i = 0; i < xv.size(); ++i) gi[0][i] += g[0] * (sigmoid_scalar(xv[i]) - (*tgt)[i]);
      });
}

template <typename T>
BasicTensor<T> iou_loss(const BasicTensor<T>& pred, std::span<const T> target) {
  require(pred.rank() == 2 && pred.dim(1) == 4, "iou_loss: prediction must be [R,4]");
  require(static_cast<std::int64_t>(target.size()) == pred.numel(), "iou_loss: target size mismatch");
  auto tgt = std::make_shared<std::vector<T>>(target.begin(), target.end());
  const auto pv = pred.data();
  const auto rows = pred.dim(0);
  T total{0};
  for (std::int64_t r = 0; r < rows; ++r) {
    const T* p = pv.data() + r * 4;
    const T* t = tgt->data() + r * 4;
    const T ap = (p[0] + p[2]) * (p[1] + p[3]);
    const T at = (t[0] + t[2]) * (t[1] + t[3]);
    const T wi = std::min(p[0], t[0]) + std::min(p[2], t[2]);
    const T hi = std::min(p[1], t[1]) + std::min(p[3], t[3]);
    const T inter = wi * hi;
    const T uni = ap + at - inter;
    total += std::log(uni) - std::log(inter);
  }
  return BasicTensor<T>::from_op(
      Shape{}, {total}, {pred}, "iou_loss",
      [pred, tgt, rows](auto, std::span<const T> g, std::span<const std::span<T>> gi) {
        const auto pv = pred.data();
        for (std::int64_t r = 0; r < rows; ++r) {
          const T* p = pv.data() + r * 4;
          const T* t = tgt->data() + r * 4;
          const T ap = (p[0] + p[2]) * (p[1] + p[3]);
          const T at = (t[0] + t[2]) * (t[1] + t[3]);
          const T wi = std::min(p[0], t[0]) + std::min(p[2], t[2]);
          const T hi = std::min(p[1], t[1]) + std::min(p[3], t[3]);
          const T inter = wi * hi;
          const T uni = ap + at - inter;
          // d/dp of ln U - ln I, with U = Ap + At - I.
          const T dI = -T{1} / uni - T{1} / inter;
          const T dAp = T{1} / uni;
          const T pw = p[0] + p[2], ph = p[1] + p[3];
          T d[4];
          d[0] = dAp * ph + dI * (p[0] < t[0] ? hi : T{0});
          d[2] = dAp * ph + dI * (p[2] < t[2] ? hi : T{0});
          d[1] = dAp * pw + dI * (p[1] < t[1] ? wi : T{0});
          d[3] = dAp * pw + dI * (p[3] < t[3] ? wi : T{0});
          for (int j = 0; j < 4; ++j) gi[0][r * 4 + j] += g[0] * d[j];
        }
      });
}

#define LRD_INSTANTIATE_OPS(T)                                                                      \
  template BasicTensor<T> add(const BasicTensor<T>&, const BasicTensor<T>&);                        \
  template BasicTensor<T> sub(const BasicTensor<T>&, const BasicTensor<T>&);                        \
  template BasicTensor<T> mul(const BasicTensor<T>&, const BasicTensor<T>&);                        \
  template BasicTensor<T> scale(const BasicTensor<T>&, T);                                          \
  template BasicTensor<T> add_scalar(const BasicTensor<T>&, T);                                     \
  template BasicTensor<T> broadcast_mul(const BasicTensor<T>&, const BasicTensor<T>&);              \
  template BasicTensor<T> convex_mix(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&); \
  template BasicTensor<T> relu(const BasicTensor<T>&);                                              \
  template BasicTensor<T> sigmoid(const BasicTensor<T>&);                                           \
  template BasicTensor<T> exp(const BasicTensor<T>&);                                               \
  template BasicTensor<T> log(const BasicTensor<T>&);                                               \
  template BasicTensor<T> abs(const BasicTensor<T>&);                                               \
  template BasicTensor<T> sum(const BasicTensor<T>&);                                               \
  template BasicTensor<T> mean(const BasicTensor<T>&);                                              \
  template BasicTensor<T> softmax(const BasicTensor<T>&, int);                                      \
  template BasicTensor<T> linear(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&); \
  template BasicTensor<T> conv2d(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&, \
                                 int, int);                                                          \
  template BasicTensor<T> max_pool2d(const BasicTensor<T>&, int, int);                              \
  template BasicTensor<T> global_average_pool(const BasicTensor<T>&);                               \
  template BasicTensor<T> upsample_nearest_2x(const BasicTensor<T>&);                               \
  template BasicTensor<T> reshape(const BasicTensor<T>&, Shape);                                    \
  template BasicTensor<T> concat_channels(const std::vector<BasicTensor<T>>&);                      \
  template BasicTensor<T> slice_channels(const BasicTensor<T>&, std::int64_t, std::int64_t);        \
  template BasicTensor<T> to_rows(const BasicTensor<T>&);                                           \
  template BasicTensor<T> concat_rows(const std::vector<BasicTensor<T>>&);                          \
  template BasicTensor<T> gather_rows(const BasicTensor<T>&, std::span<const std::int64_t>);        \
  template BasicTensor<T> sigmoid_focal_loss(const BasicTensor<T>&, std::span<const int>, T, T);    \
  template BasicTensor<T> bce_with_logits(const BasicTensor<T>&, std::span<const T>);               \
  template BasicTensor<T> iou_loss(const BasicTensor<T>&, std::span<const T>);

LRD_INSTANTIATE_OPS(float)
LRD_INSTANTIATE_OPS(double)

#undef LRD_INSTANTIATE_OPS

}  // namespace lrd
