#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "ncanet/random.hpp"
#include "ncanet/tape.hpp"
#include "ncanet/tensor.hpp"

namespace ncanet {

// Parameter structs are templated on their slot type S: Tensor<T> for stored
// weights, Var<T> once bound to a tape. Every struct provides
//   map(f)            -> same struct over f's result type
//   visit(prefix, f)  -> f(name, slot&) in a fixed order

template <typename T, typename P>
auto bind_params(GradTape<T>& tape, const P& params, bool requires_grad) {
  return params.map([&](const Tensor<T>& t) { return tape.leaf(t, requires_grad); });
}

template <typename T, typename P>
auto grads_of(const P& bound) {
  return bound.map([](const Var<T>& v) { return v.grad(); });
}

template <typename S, typename P>
std::vector<std::pair<std::string, S*>> flatten_params(P& params) {
  std::vector<std::pair<std::string, S*>> out;
  params.visit("", [&](const std::string& name, S& slot) { out.emplace_back(name, &slot); });
  return out;
}

template <typename S, typename P>
std::vector<std::pair<std::string, const S*>> flatten_params(const P& params) {
  std::vector<std::pair<std::string, const S*>> out;
  params.visit("", [&](const std::string& name, const S& slot) { out.emplace_back(name, &slot); });
  return out;
}

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)).
template <typename T>
Tensor<T> init_weight(Shape shape, std::size_t fan_in, Rng& rng) {
  Tensor<T> w(shape);
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (std::size_t i = 0; i < w.numel(); ++i) w[i] = static_cast<T>(rng.uniform(-bound, bound));
  return w;
}

}  // namespace ncanet
