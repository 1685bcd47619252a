#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

#include "ncanet/ops.hpp"
#include "ncanet/params.hpp"

namespace ncanet {

// Learnable weights of one axis sub-block: three C x C channel projections
// producing X1 (residual path), X2 and X3 (similarity operands), plus the
// scalar gate alpha on the attended term.
template <typename S>
struct AxisAttnParams {
  S w1, w2, w3;
  S b1, b2, b3;
  S alpha;

  template <typename F>
  auto map(F&& f) const {
    using R = decltype(f(w1));
    return AxisAttnParams<R>{f(w1), f(w2), f(w3), f(b1), f(b2), f(b3), f(alpha)};
  }
  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    visit_impl(*this, prefix, f);
  }
  template <typename F>
  void visit(const std::string& prefix, F&& f) const {
    visit_impl(*this, prefix, f);
  }
  template <typename Self, typename F>
  static void visit_impl(Self& s, const std::string& p, F& f) {
    f(p + "w1", s.w1);
    f(p + "b1", s.b1);
    f(p + "w2", s.w2);
    f(p + "b2", s.b2);
    f(p + "w3", s.w3);
    f(p + "b3", s.b3);
    f(p + "alpha", s.alpha);
  }
};

using SubblockOrder = std::array<Axis, 3>;
inline constexpr SubblockOrder kDefaultOrder{Axis::vertical, Axis::transverse, Axis::channel};

// "VTC" <-> {vertical, transverse, channel}. Throws std::invalid_argument
// unless the string is a permutation of V, T, C.
SubblockOrder parse_order(std::string_view s);
std::string order_string(const SubblockOrder& order);
bool is_permutation_of_axes(const SubblockOrder& order);

template <typename S>
struct NcaParams {
  AxisAttnParams<S> va, ta, ca;
  SubblockOrder order = kDefaultOrder;

  const AxisAttnParams<S>& for_axis(Axis a) const {
    return a == Axis::vertical ? va : a == Axis::transverse ? ta : ca;
  }
  template <typename F>
  auto map(F&& f) const {
    using R = decltype(f(va.w1));
    return NcaParams<R>{va.map(f), ta.map(f), ca.map(f), order};
  }
  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    va.visit(prefix + "va.", f);
    ta.visit(prefix + "ta.", f);
    ca.visit(prefix + "ca.", f);
  }
  template <typename F>
  void visit(const std::string& prefix, F&& f) const {
    va.visit(prefix + "va.", f);
    ta.visit(prefix + "ta.", f);
    ca.visit(prefix + "ca.", f);
  }
};

// Reference full spatial non-local block. Projections reduce C to
// inner = max(1, C/2) channels; the output projection restores C and is added
// to the input.
template <typename S>
struct NclParams {
  S theta_w, theta_b, phi_w, phi_b, g_w, g_b, out_w, out_b;

  template <typename F>
  auto map(F&& f) const {
    using R = decltype(f(theta_w));
    return NclParams<R>{f(theta_w), f(theta_b), f(phi_w), f(phi_b),
                        f(g_w),     f(g_b),     f(out_w), f(out_b)};
  }
  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    visit_impl(*this, prefix, f);
  }
  template <typename F>
  void visit(const std::string& prefix, F&& f) const {
    visit_impl(*this, prefix, f);
  }
  template <typename Self, typename F>
  static void visit_impl(Self& s, const std::string& p, F& f) {
    f(p + "theta_w", s.theta_w);
    f(p + "theta_b", s.theta_b);
    f(p + "phi_w", s.phi_w);
    f(p + "phi_b", s.phi_b);
    f(p + "g_w", s.g_w);
    f(p + "g_b", s.g_b);
    f(p + "out_w", s.out_w);
    f(p + "out_b", s.out_b);
  }
};

// Test-only injection of fixed row-stochastic attention maps, one per axis.
template <typename T>
struct FrozenMaps {
  std::optional<Tensor<T>> vertical, transverse, channel;

  const std::optional<Tensor<T>>& for_axis(Axis a) const {
    return a == Axis::vertical ? vertical : a == Axis::transverse ? transverse : channel;
  }
};

template <typename T>
struct AttentionResult {
  Var<T> out;
  Var<T> map;
};

// Largest H*W for which ncl_block will materialize its (HW x HW) map.
inline constexpr std::size_t kNclMaxPositions = 4096;

std::size_t ncl_inner_channels(std::size_t channels);

// alpha = 0, weights uniform(+-1/sqrt(C)), biases 0.
template <typename T>
AxisAttnParams<Tensor<T>> init_axis_attn(std::size_t channels, Rng& rng);
template <typename T>
NcaParams<Tensor<T>> init_nca(std::size_t channels, Rng& rng,
                              const SubblockOrder& order = kDefaultOrder);
template <typename T>
NclParams<Tensor<T>> init_ncl(std::size_t channels, Rng& rng);

// Z = X1 + alpha * SM(X2 X3) X, evaluated in the axis-major layout of `axis`
// and reshaped back to C x H x W. The attended product uses the block input X.
template <typename T>
AttentionResult<T> axis_attention_with_map(Var<T> x, const AxisAttnParams<Var<T>>& p, Axis axis,
                                           const std::optional<Tensor<T>>& frozen_map = {});
template <typename T>
Var<T> axis_attention(Var<T> x, const AxisAttnParams<Var<T>>& p, Axis axis,
                      const std::optional<Tensor<T>>& frozen_map = {});

// The three sub-blocks applied in sequence, each consuming the previous output.
template <typename T>
Var<T> nca_block(Var<T> x, const NcaParams<Var<T>>& p, const FrozenMaps<T>* frozen = nullptr);

// Throws FootprintError when H*W exceeds kNclMaxPositions.
template <typename T>
AttentionResult<T> ncl_block(Var<T> x, const NclParams<Var<T>>& p,
                             const std::optional<Tensor<T>>& frozen_map = {});

// Uniform row-stochastic n x n map (every entry 1/n).
template <typename T>
Tensor<T> uniform_map(std::size_t n);

}  // namespace ncanet
