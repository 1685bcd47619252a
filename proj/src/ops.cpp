#include "ncanet/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace ncanet {

namespace {

void require_rank(const Shape& s, std::size_t rank, const char* op) {
  if (s.rank() != rank)
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     s.str());
}

void require_same(const Shape& a, const Shape& b, const char* op) {
  if (!(a == b)) throw ShapeError(std::string(op) + ": shape mismatch " + a.str() + " vs " + b.str());
}

template <typename T>
bool wants(GradTape<T>& t, const Var<T>& v) {
  return t.requires_grad(v.id());
}

// Elementwise unary op whose derivative is expressed through input and output.
template <typename T, typename F, typename D>
Var<T> unary(const char* name, Var<T> x, F f, D dfdx) {
  const Tensor<T>& xv = x.value();
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < xv.numel(); ++i) out[i] = f(xv[i]);
  const std::size_t out_id = x.tape().size();
  return x.tape().record(name, std::move(out), {x},
                         [x, out_id, dfdx](GradTape<T>& t, const Tensor<T>& g) {
                           const Tensor<T>& xv = t.value(x.id());
                           const Tensor<T>& yv = t.value(out_id);
                           Tensor<T>& gx = t.grad_acc(x.id());
                           for (std::size_t i = 0; i < g.numel(); ++i)
                             gx[i] += g[i] * dfdx(xv[i], yv[i]);
                         });
}

}  // namespace

std::string_view axis_name(Axis axis) {
  switch (axis) {
    case Axis::vertical:
      return "vertical";
    case Axis::transverse:
      return "transverse";
    case Axis::channel:
      return "channel";
  }
  return "?";
}

char axis_tag(Axis axis) {
  switch (axis) {
    case Axis::vertical:
      return 'V';
    case Axis::transverse:
      return 'T';
    case Axis::channel:
      return 'C';
  }
  return '?';
}

std::pair<std::size_t, std::size_t> axis_major_index(Axis axis, const Shape& chw, std::size_t c,
                                                     std::size_t h, std::size_t w) {
  const std::size_t C = chw[0], W = chw[2];
  switch (axis) {
    case Axis::channel:
      return {c, h * W + w};
    case Axis::vertical:
      return {h, c * W + w};
    case Axis::transverse:
      return {w, h * C + c};
  }
  return {0, 0};
}

Shape axis_major_shape(Axis axis, const Shape& chw) {
  const std::size_t C = chw[0], H = chw[1], W = chw[2];
  switch (axis) {
    case Axis::channel:
      return Shape{C, H * W};
    case Axis::vertical:
      return Shape{H, C * W};
    case Axis::transverse:
      return Shape{W, H * C};
  }
  return Shape{};
}

namespace {

// perm[i] = flat index in the axis-major matrix of flat element i of the C x H x W tensor.
std::vector<std::size_t> axis_permutation(Axis axis, const Shape& chw) {
  const Shape m = axis_major_shape(axis, chw);
  const std::size_t cols = m[1];
  std::vector<std::size_t> perm(chw.numel());
  std::size_t i = 0;
  for (std::size_t c = 0; c < chw[0]; ++c)
    for (std::size_t h = 0; h < chw[1]; ++h)
      for (std::size_t w = 0; w < chw[2]; ++w) {
        auto [r, col] = axis_major_index(axis, chw, c, h, w);
        perm[i++] = r * cols + col;
      }
  return perm;
}

}  // namespace

template <typename T>
Var<T> reshape_axis_major(Var<T> x, Axis axis) {
  const Shape chw = x.shape();
  require_rank(chw, 3, "reshape_axis_major");
  auto perm = axis_permutation(axis, chw);
  const Tensor<T>& xv = x.value();
  Tensor<T> out(axis_major_shape(axis, chw));
  for (std::size_t i = 0; i < perm.size(); ++i) out[perm[i]] = xv[i];
  return x.tape().record("reshape_axis_major", std::move(out), {x},
                         [x, perm](GradTape<T>& t, const Tensor<T>& g) {
                           Tensor<T>& gx = t.grad_acc(x.id());
                           for (std::size_t i = 0; i < perm.size(); ++i) gx[i] += g[perm[i]];
                         });
}

template <typename T>
Var<T> restore_axis_major(Var<T> m, Axis axis, const Shape& chw) {
  require_rank(chw, 3, "restore_axis_major");
  require_same(m.shape(), axis_major_shape(axis, chw), "restore_axis_major");
  auto perm = axis_permutation(axis, chw);
  const Tensor<T>& mv = m.value();
  Tensor<T> out(chw);
  for (std::size_t i = 0; i < perm.size(); ++i) out[i] = mv[perm[i]];
  return m.tape().record("restore_axis_major", std::move(out), {m},
                         [m, perm](GradTape<T>& t, const Tensor<T>& g) {
                           Tensor<T>& gm = t.grad_acc(m.id());
                           for (std::size_t i = 0; i < perm.size(); ++i) gm[perm[i]] += g[i];
                         });
}

template <typename T>
Var<T> transpose(Var<T> m) {
  require_rank(m.shape(), 2, "transpose");
  const std::size_t R = m.shape()[0], C = m.shape()[1];
  const Tensor<T>& mv = m.value();
  Tensor<T> out(Shape{C, R});
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t c = 0; c < C; ++c) out[c * R + r] = mv[r * C + c];
  return m.tape().record("transpose", std::move(out), {m},
                         [m, R, C](GradTape<T>& t, const Tensor<T>& g) {
                           Tensor<T>& gm = t.grad_acc(m.id());
                           for (std::size_t r = 0; r < R; ++r)
                             for (std::size_t c = 0; c < C; ++c) gm[r * C + c] += g[c * R + r];
                         });
}

template <typename T>
Var<T> concat_channels(Var<T> a, Var<T> b) {
  require_rank(a.shape(), 3, "concat_channels");
  require_rank(b.shape(), 3, "concat_channels");
  if (a.shape()[1] != b.shape()[1] || a.shape()[2] != b.shape()[2])
    throw ShapeError("concat_channels: spatial mismatch " + a.shape().str() + " vs " +
                     b.shape().str());
  const std::size_t na = a.value().numel(), nb = b.value().numel();
  Tensor<T> out(Shape{a.shape()[0] + b.shape()[0], a.shape()[1], a.shape()[2]});
  std::copy(a.value().vec().begin(), a.value().vec().end(), out.vec().begin());
  std::copy(b.value().vec().begin(), b.value().vec().end(), out.vec().begin() + na);
  return a.tape().record("concat_channels", std::move(out), {a, b},
                         [a, b, na, nb](GradTape<T>& t, const Tensor<T>& g) {
                           if (wants(t, a)) {
                             Tensor<T>& ga = t.grad_acc(a.id());
                             for (std::size_t i = 0; i < na; ++i) ga[i] += g[i];
                           }
                           if (wants(t, b)) {
                             Tensor<T>& gb = t.grad_acc(b.id());
                             for (std::size_t i = 0; i < nb; ++i) gb[i] += g[na + i];
                           }
                         });
}

namespace {

// out (m x n) += a (m x k) * b (k x n)
template <typename T>
void gemm_nn(const T* a, const T* b, T* out, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    T* orow = out + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = a[i * k + p];
      const T* brow = b + p * n;
#pragma omp simd
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
}

template <typename T>
T dot(const T* a, const T* b, std::size_t n) {
  T s = 0;
#pragma omp simd reduction(+ : s)
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  require_rank(a.shape(), 2, "matmul");
  require_rank(b.shape(), 2, "matmul");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k)
    throw ShapeError("matmul: inner dimension mismatch " + a.shape().str() + " * " +
                     b.shape().str());
  Tensor<T> out(Shape{m, n});
  gemm_nn(a.value().vec().data(), b.value().vec().data(), out.vec().data(), m, k, n);
  return a.tape().record(
      "matmul", std::move(out), {a, b}, [a, b, m, k, n](GradTape<T>& t, const Tensor<T>& g) {
        const T* gv = g.vec().data();
        if (wants(t, a)) {
          // da = g * b^T
          const T* bv = b.value().vec().data();
          Tensor<T>& ga = t.grad_acc(a.id());
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) ga[i * k + p] += dot(gv + i * n, bv + p * n, n);
        }
        if (wants(t, b)) {
          // db = a^T * g
          const T* av = a.value().vec().data();
          Tensor<T>& gb = t.grad_acc(b.id());
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) {
              const T s = av[i * k + p];
              T* brow = gb.vec().data() + p * n;
              const T* grow = gv + i * n;
#pragma omp simd
              for (std::size_t j = 0; j < n; ++j) brow[j] += s * grow[j];
            }
        }
      });
}

template <typename T>
Var<T> softmax_rows(Var<T> m) {
  require_rank(m.shape(), 2, "softmax_rows");
  const std::size_t R = m.shape()[0], C = m.shape()[1];
  const Tensor<T>& mv = m.value();
  for (std::size_t i = 0; i < mv.numel(); ++i)
    if (std::isnan(mv[i])) throw NumericError("softmax_rows: NaN input");
  Tensor<T> out(m.shape());
  for (std::size_t r = 0; r < R; ++r) {
    const T* in = mv.vec().data() + r * C;
    T* o = out.vec().data() + r * C;
    T mx = *std::max_element(in, in + C);
    T total = 0;
    for (std::size_t c = 0; c < C; ++c) {
      o[c] = std::exp(in[c] - mx);
      total += o[c];
    }
    for (std::size_t c = 0; c < C; ++c) o[c] /= total;
  }
  const std::size_t out_id = m.tape().size();
  return m.tape().record("softmax_rows", std::move(out), {m},
                         [m, out_id, R, C](GradTape<T>& t, const Tensor<T>& g) {
                           const Tensor<T>& y = t.value(out_id);
                           Tensor<T>& gm = t.grad_acc(m.id());
                           for (std::size_t r = 0; r < R; ++r) {
                             const T* yr = y.vec().data() + r * C;
                             const T* gr = g.vec().data() + r * C;
                             const T inner = dot(gr, yr, C);
                             for (std::size_t c = 0; c < C; ++c)
                               gm[r * C + c] += yr[c] * (gr[c] - inner);
                           }
                         });
}

template <typename T>
Var<T> pointwise_conv(Var<T> x, Var<T> weight, Var<T> bias) {
  require_rank(x.shape(), 3, "pointwise_conv");
  require_rank(weight.shape(), 2, "pointwise_conv weight");
  require_rank(bias.shape(), 1, "pointwise_conv bias");
  const std::size_t C = x.shape()[0], HW = x.shape()[1] * x.shape()[2];
  const std::size_t Co = weight.shape()[0];
  if (weight.shape()[1] != C || bias.shape()[0] != Co)
    throw ShapeError("pointwise_conv: weight " + weight.shape().str() + " / bias " +
                     bias.shape().str() + " incompatible with input " + x.shape().str());
  Tensor<T> out(Shape{Co, x.shape()[1], x.shape()[2]});
  const T* xv = x.value().vec().data();
  const T* wv = weight.value().vec().data();
  for (std::size_t o = 0; o < Co; ++o) {
    T* orow = out.vec().data() + o * HW;
    std::fill(orow, orow + HW, bias.value()[o]);
  }
  gemm_nn(wv, xv, out.vec().data(), Co, C, HW);
  return x.tape().record(
      "pointwise_conv", std::move(out), {x, weight, bias},
      [x, weight, bias, C, HW, Co](GradTape<T>& t, const Tensor<T>& g) {
        const T* gv = g.vec().data();
        if (wants(t, x)) {
          const T* wv = weight.value().vec().data();
          Tensor<T>& gx = t.grad_acc(x.id());
          for (std::size_t o = 0; o < Co; ++o)
            for (std::size_t c = 0; c < C; ++c) {
              const T s = wv[o * C + c];
              T* xr = gx.vec().data() + c * HW;
              const T* gr = gv + o * HW;
#pragma omp simd
              for (std::size_t i = 0; i < HW; ++i) xr[i] += s * gr[i];
            }
        }
        if (wants(t, weight)) {
          const T* xv = x.value().vec().data();
          Tensor<T>& gw = t.grad_acc(weight.id());
          for (std::size_t o = 0; o < Co; ++o)
            for (std::size_t c = 0; c < C; ++c) gw[o * C + c] += dot(gv + o * HW, xv + c * HW, HW);
        }
        if (wants(t, bias)) {
          Tensor<T>& gb = t.grad_acc(bias.id());
          for (std::size_t o = 0; o < Co; ++o) {
            T s = 0;
            for (std::size_t i = 0; i < HW; ++i) s += gv[o * HW + i];
            gb[o] += s;
          }
        }
      });
}

namespace {

// Valid row/column ranges for an output position shifted by d against an extent n.
inline std::size_t lo_of(long d) { return d < 0 ? static_cast<std::size_t>(-d) : 0; }
inline std::size_t hi_of(long d, std::size_t n) {
  return d > 0 ? (static_cast<long>(n) > d ? n - static_cast<std::size_t>(d) : 0) : n;
}
inline std::size_t shifted(std::size_t i, long d) {
  return static_cast<std::size_t>(static_cast<long>(i) + d);
}

}  // namespace

template <typename T>
Var<T> conv2d(Var<T> x, Var<T> weight, Var<T> bias) {
  require_rank(x.shape(), 3, "conv2d");
  require_rank(weight.shape(), 4, "conv2d weight");
  require_rank(bias.shape(), 1, "conv2d bias");
  const std::size_t C = x.shape()[0], H = x.shape()[1], W = x.shape()[2];
  const std::size_t Co = weight.shape()[0], K = weight.shape()[2];
  if (weight.shape()[3] != K) throw ShapeError("conv2d: non-square kernel " + weight.shape().str());
  if (K % 2 == 0) throw ShapeError("conv2d: kernel size must be odd, got " + std::to_string(K));
  if (weight.shape()[1] != C || bias.shape()[0] != Co)
    throw ShapeError("conv2d: weight " + weight.shape().str() + " / bias " + bias.shape().str() +
                     " incompatible with input " + x.shape().str());
  const long pad = static_cast<long>(K / 2);
  const std::size_t HW = H * W;

  Tensor<T> out(Shape{Co, H, W});
  {
    const T* xv = x.value().vec().data();
    const T* wv = weight.value().vec().data();
    for (std::size_t o = 0; o < Co; ++o) {
      T* op = out.vec().data() + o * HW;
      std::fill(op, op + HW, bias.value()[o]);
      for (std::size_t c = 0; c < C; ++c) {
        const T* xp = xv + c * HW;
        for (std::size_t ky = 0; ky < K; ++ky) {
          const long dy = static_cast<long>(ky) - pad;
          const std::size_t h0 = lo_of(dy), h1 = hi_of(dy, H);
          for (std::size_t kx = 0; kx < K; ++kx) {
            const long dx = static_cast<long>(kx) - pad;
            const std::size_t w0 = lo_of(dx), w1 = hi_of(dx, W);
            const T s = wv[((o * C + c) * K + ky) * K + kx];
            if (w1 <= w0) continue;
            const std::size_t n = w1 - w0;
            for (std::size_t h = h0; h < h1; ++h) {
              T* orow = op + h * W + w0;
              const T* xrow = xp + shifted(h, dy) * W + shifted(w0, dx);
#pragma omp simd
              for (std::size_t j = 0; j < n; ++j) orow[j] += s * xrow[j];
            }
          }
        }
      }
    }
  }

  return x.tape().record(
      "conv2d", std::move(out), {x, weight, bias},
      [x, weight, bias, C, H, W, Co, K, pad, HW](GradTape<T>& t, const Tensor<T>& g) {
        const T* gv = g.vec().data();
        if (wants(t, x)) {
          const T* wv = weight.value().vec().data();
          Tensor<T>& gx = t.grad_acc(x.id());
          for (std::size_t c = 0; c < C; ++c) {
            T* gxp = gx.vec().data() + c * HW;
            for (std::size_t o = 0; o < Co; ++o) {
              const T* gp = gv + o * HW;
              for (std::size_t ky = 0; ky < K; ++ky) {
                const long dy = static_cast<long>(ky) - pad;
                const std::size_t h0 = lo_of(dy), h1 = hi_of(dy, H);
                for (std::size_t kx = 0; kx < K; ++kx) {
                  const long dx = static_cast<long>(kx) - pad;
                  const std::size_t w0 = lo_of(dx), w1 = hi_of(dx, W);
                  const T s = wv[((o * C + c) * K + ky) * K + kx];
                  if (w1 <= w0) continue;
                  const std::size_t n = w1 - w0;
                  for (std::size_t h = h0; h < h1; ++h) {
                    const T* grow = gp + h * W + w0;
                    T* xrow = gxp + shifted(h, dy) * W + shifted(w0, dx);
#pragma omp simd
                    for (std::size_t j = 0; j < n; ++j) xrow[j] += s * grow[j];
                  }
                }
              }
            }
          }
        }
        if (wants(t, weight)) {
          const T* xv = x.value().vec().data();
          Tensor<T>& gw = t.grad_acc(weight.id());
          std::vector<T> acc(W);
          for (std::size_t o = 0; o < Co; ++o) {
            const T* gp = gv + o * HW;
            for (std::size_t c = 0; c < C; ++c) {
              const T* xp = xv + c * HW;
              for (std::size_t ky = 0; ky < K; ++ky) {
                const long dy = static_cast<long>(ky) - pad;
                const std::size_t h0 = lo_of(dy), h1 = hi_of(dy, H);
                for (std::size_t kx = 0; kx < K; ++kx) {
                  const long dx = static_cast<long>(kx) - pad;
                  const std::size_t w0 = lo_of(dx), w1 = hi_of(dx, W);
                  if (w1 <= w0) continue;
                  const std::size_t n = w1 - w0;
                  std::fill(acc.begin(), acc.end(), T(0));
                  T* ap = acc.data();
                  for (std::size_t h = h0; h < h1; ++h) {
                    const T* grow = gp + h * W + w0;
                    const T* xrow = xp + shifted(h, dy) * W + shifted(w0, dx);
#pragma omp simd
                    for (std::size_t j = 0; j < n; ++j) ap[j] += grow[j] * xrow[j];
                  }
                  T s = 0;
                  for (std::size_t j = 0; j < n; ++j) s += ap[j];
                  gw[((o * C + c) * K + ky) * K + kx] += s;
                }
              }
            }
          }
        }
        if (wants(t, bias)) {
          Tensor<T>& gb = t.grad_acc(bias.id());
          for (std::size_t o = 0; o < Co; ++o) {
            T s = 0;
            for (std::size_t i = 0; i < HW; ++i) s += gv[o * HW + i];
            gb[o] += s;
          }
        }
      });
}

template <typename T>
Var<T> filter2d_valid(Var<T> x, const Tensor<T>& kernel) {
  require_rank(x.shape(), 3, "filter2d_valid");
  require_rank(kernel.shape(), 2, "filter2d_valid kernel");
  const std::size_t C = x.shape()[0], H = x.shape()[1], W = x.shape()[2];
  const std::size_t KH = kernel.shape()[0], KW = kernel.shape()[1];
  if (KH > H || KW > W)
    throw ShapeError("filter2d_valid: kernel " + kernel.shape().str() + " larger than input " +
                     x.shape().str());
  const std::size_t OH = H - KH + 1, OW = W - KW + 1;
  Tensor<T> out(Shape{C, OH, OW});
  const T* xv = x.value().vec().data();
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t u = 0; u < KH; ++u)
      for (std::size_t v = 0; v < KW; ++v) {
        const T s = kernel[u * KW + v];
        for (std::size_t i = 0; i < OH; ++i) {
          T* orow = out.vec().data() + (c * OH + i) * OW;
          const T* xrow = xv + (c * H + i + u) * W + v;
#pragma omp simd
          for (std::size_t j = 0; j < OW; ++j) orow[j] += s * xrow[j];
        }
      }
  return x.tape().record(
      "filter2d_valid", std::move(out), {x},
      [x, kernel, C, H, W, KH, KW, OH, OW](GradTape<T>& t, const Tensor<T>& g) {
        Tensor<T>& gx = t.grad_acc(x.id());
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t u = 0; u < KH; ++u)
            for (std::size_t v = 0; v < KW; ++v) {
              const T s = kernel[u * KW + v];
              for (std::size_t i = 0; i < OH; ++i) {
                const T* grow = g.vec().data() + (c * OH + i) * OW;
                T* xrow = gx.vec().data() + (c * H + i + u) * W + v;
#pragma omp simd
                for (std::size_t j = 0; j < OW; ++j) xrow[j] += s * grow[j];
              }
            }
      });
}

template <typename T>
Var<T> relu(Var<T> x) {
  return unary(
      "relu", x, [](T v) { return v > T(0) ? v : T(0); },
      [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
Var<T> sigmoid(Var<T> x) {
  return unary(
      "sigmoid", x, [](T v) { return T(1) / (T(1) + std::exp(-v)); },
      [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Var<T> tanh(Var<T> x) {
  return unary(
      "tanh", x, [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Var<T> scale(Var<T> x, double s) {
  const T k = static_cast<T>(s);
  return unary(
      "scale", x, [k](T v) { return k * v; }, [k](T, T) { return k; });
}

template <typename T>
Var<T> add_scalar(Var<T> x, double s) {
  const T k = static_cast<T>(s);
  return unary(
      "add_scalar", x, [k](T v) { return v + k; }, [](T, T) { return T(1); });
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  require_same(a.shape(), b.shape(), "add");
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] + b.value()[i];
  return a.tape().record("add", std::move(out), {a, b}, [a, b](GradTape<T>& t, const Tensor<T>& g) {
    for (const Var<T>& v : {a, b}) {
      if (!wants(t, v)) continue;
      Tensor<T>& gv = t.grad_acc(v.id());
      for (std::size_t i = 0; i < g.numel(); ++i) gv[i] += g[i];
    }
  });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  require_same(a.shape(), b.shape(), "sub");
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] - b.value()[i];
  return a.tape().record("sub", std::move(out), {a, b}, [a, b](GradTape<T>& t, const Tensor<T>& g) {
    if (wants(t, a)) {
      Tensor<T>& ga = t.grad_acc(a.id());
      for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
    }
    if (wants(t, b)) {
      Tensor<T>& gb = t.grad_acc(b.id());
      for (std::size_t i = 0; i < g.numel(); ++i) gb[i] -= g[i];
    }
  });
}

template <typename T>
Var<T> hadamard(Var<T> a, Var<T> b) {
  require_same(a.shape(), b.shape(), "hadamard");
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] * b.value()[i];
  return a.tape().record("hadamard", std::move(out), {a, b},
                         [a, b](GradTape<T>& t, const Tensor<T>& g) {
                           if (wants(t, a)) {
                             const Tensor<T>& bv = b.value();
                             Tensor<T>& ga = t.grad_acc(a.id());
                             for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * bv[i];
                           }
                           if (wants(t, b)) {
                             const Tensor<T>& av = a.value();
                             Tensor<T>& gb = t.grad_acc(b.id());
                             for (std::size_t i = 0; i < g.numel(); ++i) gb[i] += g[i] * av[i];
                           }
                         });
}

template <typename T>
Var<T> divide(Var<T> a, Var<T> b) {
  require_same(a.shape(), b.shape(), "divide");
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] / b.value()[i];
  const std::size_t out_id = a.tape().size();
  return a.tape().record("divide", std::move(out), {a, b},
                         [a, b, out_id](GradTape<T>& t, const Tensor<T>& g) {
                           const Tensor<T>& bv = b.value();
                           if (wants(t, a)) {
                             Tensor<T>& ga = t.grad_acc(a.id());
                             for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] / bv[i];
                           }
                           if (wants(t, b)) {
                             const Tensor<T>& q = t.value(out_id);
                             Tensor<T>& gb = t.grad_acc(b.id());
                             for (std::size_t i = 0; i < g.numel(); ++i)
                               gb[i] -= g[i] * q[i] / bv[i];
                           }
                         });
}

template <typename T>
Var<T> scale_by(Var<T> x, Var<T> alpha) {
  if (alpha.value().numel() != 1)
    throw ShapeError("scale_by: alpha must hold one element, got " + alpha.shape().str());
  const T a = alpha.value()[0];
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a * x.value()[i];
  return x.tape().record("scale_by", std::move(out), {x, alpha},
                         [x, alpha](GradTape<T>& t, const Tensor<T>& g) {
                           if (wants(t, x)) {
                             const T a = alpha.value()[0];
                             Tensor<T>& gx = t.grad_acc(x.id());
                             for (std::size_t i = 0; i < g.numel(); ++i) gx[i] += a * g[i];
                           }
                           if (wants(t, alpha)) {
                             const Tensor<T>& xv = x.value();
                             t.grad_acc(alpha.id())[0] +=
                                 dot(g.vec().data(), xv.vec().data(), g.numel());
                           }
                         });
}

template <typename T>
Var<T> sum(Var<T> x) {
  T s = 0;
  for (T v : x.value().data()) s += v;
  return x.tape().record("sum", Tensor<T>::scalar(s), {x},
                         [x](GradTape<T>& t, const Tensor<T>& g) {
                           Tensor<T>& gx = t.grad_acc(x.id());
                           for (std::size_t i = 0; i < gx.numel(); ++i) gx[i] += g[0];
                         });
}

template <typename T>
Var<T> mean(Var<T> x) {
  const std::size_t n = x.value().numel();
  if (n == 0) throw ShapeError("mean of empty tensor");
  T s = 0;
  for (T v : x.value().data()) s += v;
  return x.tape().record("mean", Tensor<T>::scalar(s / static_cast<T>(n)), {x},
                         [x, n](GradTape<T>& t, const Tensor<T>& g) {
                           Tensor<T>& gx = t.grad_acc(x.id());
                           const T d = g[0] / static_cast<T>(n);
                           for (std::size_t i = 0; i < gx.numel(); ++i) gx[i] += d;
                         });
}

#define NCANET_INSTANTIATE_OPS(T)                                                  \
  template Var<T> reshape_axis_major<T>(Var<T>, Axis);                             \
  template Var<T> restore_axis_major<T>(Var<T>, Axis, const Shape&);               \
  template Var<T> transpose<T>(Var<T>);                                            \
  template Var<T> concat_channels<T>(Var<T>, Var<T>);                              \
  template Var<T> matmul<T>(Var<T>, Var<T>);                                       \
  template Var<T> softmax_rows<T>(Var<T>);                                         \
  template Var<T> pointwise_conv<T>(Var<T>, Var<T>, Var<T>);                       \
  template Var<T> conv2d<T>(Var<T>, Var<T>, Var<T>);                               \
  template Var<T> filter2d_valid<T>(Var<T>, const Tensor<T>&);                     \
  template Var<T> relu<T>(Var<T>);                                                 \
  template Var<T> sigmoid<T>(Var<T>);                                              \
  template Var<T> tanh<T>(Var<T>);                                                 \
  template Var<T> add<T>(Var<T>, Var<T>);                                          \
  template Var<T> sub<T>(Var<T>, Var<T>);                                          \
  template Var<T> hadamard<T>(Var<T>, Var<T>);                                     \
  template Var<T> divide<T>(Var<T>, Var<T>);                                       \
  template Var<T> scale<T>(Var<T>, double);                                        \
  template Var<T> add_scalar<T>(Var<T>, double);                                   \
  template Var<T> scale_by<T>(Var<T>, Var<T>);                                     \
  template Var<T> sum<T>(Var<T>);                                                  \
  template Var<T> mean<T>(Var<T>);

NCANET_INSTANTIATE_OPS(float)
NCANET_INSTANTIATE_OPS(double)

}  // namespace ncanet
