#include "ncanet/attention.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ncanet {

SubblockOrder parse_order(std::string_view s) {
  if (s.size() != 3) throw std::invalid_argument("sub-block order must have 3 letters: " + std::string(s));
  SubblockOrder order{};
  for (std::size_t i = 0; i < 3; ++i) {
    switch (s[i]) {
      case 'V':
      case 'v':
        order[i] = Axis::vertical;
        break;
      case 'T':
      case 't':
        order[i] = Axis::transverse;
        break;
      case 'C':
      case 'c':
        order[i] = Axis::channel;
        break;
      default:
        throw std::invalid_argument("unknown sub-block tag '" + std::string(1, s[i]) + "'");
    }
  }
  if (!is_permutation_of_axes(order))
    throw std::invalid_argument("sub-block order must use each of V, T, C once: " + std::string(s));
  return order;
}

std::string order_string(const SubblockOrder& order) {
  std::string s;
  for (Axis a : order) s += axis_tag(a);
  return s;
}

bool is_permutation_of_axes(const SubblockOrder& order) {
  int seen = 0;
  for (Axis a : order) seen |= 1 << static_cast<int>(a);
  return seen == 0b111;
}

std::size_t ncl_inner_channels(std::size_t channels) { return std::max<std::size_t>(1, channels / 2); }

template <typename T>
AxisAttnParams<Tensor<T>> init_axis_attn(std::size_t C, Rng& rng) {
  AxisAttnParams<Tensor<T>> p;
  p.w1 = init_weight<T>(Shape{C, C}, C, rng);
  p.w2 = init_weight<T>(Shape{C, C}, C, rng);
  p.w3 = init_weight<T>(Shape{C, C}, C, rng);
  p.b1 = Tensor<T>::zeros(Shape{C});
  p.b2 = Tensor<T>::zeros(Shape{C});
  p.b3 = Tensor<T>::zeros(Shape{C});
  p.alpha = Tensor<T>::scalar(T(0));
  return p;
}

template <typename T>
NcaParams<Tensor<T>> init_nca(std::size_t C, Rng& rng, const SubblockOrder& order) {
  if (!is_permutation_of_axes(order)) throw std::invalid_argument("invalid sub-block order");
  NcaParams<Tensor<T>> p;
  p.va = init_axis_attn<T>(C, rng);
  p.ta = init_axis_attn<T>(C, rng);
  p.ca = init_axis_attn<T>(C, rng);
  p.order = order;
  return p;
}

template <typename T>
NclParams<Tensor<T>> init_ncl(std::size_t C, Rng& rng) {
  const std::size_t inner = ncl_inner_channels(C);
  NclParams<Tensor<T>> p;
  p.theta_w = init_weight<T>(Shape{inner, C}, C, rng);
  p.theta_b = Tensor<T>::zeros(Shape{inner});
  p.phi_w = init_weight<T>(Shape{inner, C}, C, rng);
  p.phi_b = Tensor<T>::zeros(Shape{inner});
  p.g_w = init_weight<T>(Shape{inner, C}, C, rng);
  p.g_b = Tensor<T>::zeros(Shape{inner});
  p.out_w = init_weight<T>(Shape{C, inner}, inner, rng);
  p.out_b = Tensor<T>::zeros(Shape{C});
  return p;
}

template <typename T>
Tensor<T> uniform_map(std::size_t n) {
  return Tensor<T>(Shape{n, n}, T(1) / static_cast<T>(n));
}

namespace {

template <typename T>
void check_frozen_map(const Tensor<T>& m, std::size_t n) {
  if (!(m.shape() == Shape{n, n}))
    throw ShapeError("frozen attention map must be " + Shape{n, n}.str() + ", got " +
                     m.shape().str());
  for (std::size_t r = 0; r < n; ++r) {
    double total = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
      if (m.at(r, c) < T(0))
        throw std::invalid_argument("frozen attention map has a negative entry in row " +
                                    std::to_string(r));
      total += static_cast<double>(m.at(r, c));
    }
    if (std::abs(total - 1.0) > 1e-6)
      throw std::invalid_argument("frozen attention map row " + std::to_string(r) +
                                  " sums to " + std::to_string(total));
  }
}

template <typename T>
void check_channels(const Var<T>& x, const AxisAttnParams<Var<T>>& p, const char* who) {
  if (x.shape().rank() != 3) throw ShapeError(std::string(who) + ": input must be C x H x W");
  const std::size_t C = x.shape()[0];
  for (const Var<T>* w : {&p.w1, &p.w2, &p.w3})
    if (!(w->shape() == Shape{C, C}))
      throw ShapeError(std::string(who) + ": projection " + w->shape().str() +
                       " does not match " + std::to_string(C) + " channels");
}

}  // namespace

template <typename T>
AttentionResult<T> axis_attention_with_map(Var<T> x, const AxisAttnParams<Var<T>>& p, Axis axis,
                                           const std::optional<Tensor<T>>& frozen_map) {
  check_channels(x, p, "axis_attention");
  const Shape chw = x.shape();
  const std::size_t A = axis_major_shape(axis, chw)[0];
  GradTape<T>& tape = x.tape();

  Var<T> x1 = pointwise_conv(x, p.w1, p.b1);
  Var<T> map;
  if (frozen_map) {
    check_frozen_map(*frozen_map, A);
    map = tape.constant(*frozen_map);
  } else {
    Var<T> x2 = reshape_axis_major(pointwise_conv(x, p.w2, p.b2), axis);             // A x K
    Var<T> x3 = transpose(reshape_axis_major(pointwise_conv(x, p.w3, p.b3), axis));  // K x A
    map = softmax_rows(matmul(x2, x3));
  }
  Var<T> attended = matmul(map, reshape_axis_major(x, axis));
  Var<T> out = add(x1, restore_axis_major(scale_by(attended, p.alpha), axis, chw));
  return {out, map};
}

template <typename T>
Var<T> axis_attention(Var<T> x, const AxisAttnParams<Var<T>>& p, Axis axis,
                      const std::optional<Tensor<T>>& frozen_map) {
  return axis_attention_with_map(x, p, axis, frozen_map).out;
}

template <typename T>
Var<T> nca_block(Var<T> x, const NcaParams<Var<T>>& p, const FrozenMaps<T>* frozen) {
  if (!is_permutation_of_axes(p.order)) throw std::invalid_argument("invalid sub-block order");
  static const std::optional<Tensor<T>> none;
  for (Axis a : p.order) x = axis_attention(x, p.for_axis(a), a, frozen ? frozen->for_axis(a) : none);
  return x;
}

template <typename T>
AttentionResult<T> ncl_block(Var<T> x, const NclParams<Var<T>>& p,
                             const std::optional<Tensor<T>>& frozen_map) {
  if (x.shape().rank() != 3) throw ShapeError("ncl_block: input must be C x H x W");
  const Shape chw = x.shape();
  const std::size_t C = chw[0], HW = chw[1] * chw[2];
  if (HW > kNclMaxPositions) {
    const unsigned long long bytes =
        static_cast<unsigned long long>(HW) * HW * sizeof(T);
    throw FootprintError("ncl_block: footprint too large, the " + std::to_string(HW) + "x" +
                             std::to_string(HW) + " attention map needs " +
                             std::to_string(bytes) + " bytes",
                         bytes);
  }
  const std::size_t inner = ncl_inner_channels(C);
  if (!(p.out_w.shape() == Shape{C, inner}))
    throw ShapeError("ncl_block: output projection " + p.out_w.shape().str() +
                     " does not match " + std::to_string(C) + " channels");
  GradTape<T>& tape = x.tape();

  Var<T> map;
  if (frozen_map) {
    check_frozen_map(*frozen_map, HW);
    map = tape.constant(*frozen_map);
  } else {
    Var<T> theta = transpose(reshape_axis_major(pointwise_conv(x, p.theta_w, p.theta_b), Axis::channel));
    Var<T> phi = reshape_axis_major(pointwise_conv(x, p.phi_w, p.phi_b), Axis::channel);
    map = softmax_rows(matmul(theta, phi));  // HW x HW
  }
  Var<T> g = transpose(reshape_axis_major(pointwise_conv(x, p.g_w, p.g_b), Axis::channel));
  Var<T> y = transpose(matmul(map, g));  // inner x HW
  Var<T> y_img = restore_axis_major(y, Axis::channel, Shape{inner, chw[1], chw[2]});
  Var<T> out = add(x, pointwise_conv(y_img, p.out_w, p.out_b));
  return {out, map};
}

#define NCANET_INSTANTIATE_ATTENTION(T)                                                         \
  template AxisAttnParams<Tensor<T>> init_axis_attn<T>(std::size_t, Rng&);                      \
  template NcaParams<Tensor<T>> init_nca<T>(std::size_t, Rng&, const SubblockOrder&);           \
  template NclParams<Tensor<T>> init_ncl<T>(std::size_t, Rng&);                                 \
  template Tensor<T> uniform_map<T>(std::size_t);                                               \
  template AttentionResult<T> axis_attention_with_map<T>(                                       \
      Var<T>, const AxisAttnParams<Var<T>>&, Axis, const std::optional<Tensor<T>>&);            \
  template Var<T> axis_attention<T>(Var<T>, const AxisAttnParams<Var<T>>&, Axis,                \
                                    const std::optional<Tensor<T>>&);                           \
  template Var<T> nca_block<T>(Var<T>, const NcaParams<Var<T>>&, const FrozenMaps<T>*);         \
  template AttentionResult<T> ncl_block<T>(Var<T>, const NclParams<Var<T>>&,                    \
                                           const std::optional<Tensor<T>>&);

NCANET_INSTANTIATE_ATTENTION(float)
NCANET_INSTANTIATE_ATTENTION(double)

}  // namespace ncanet
