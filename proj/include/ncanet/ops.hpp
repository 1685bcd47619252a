#pragma once

#include <cstddef>
#include <string_view>
#include <utility>

#include "ncanet/tape.hpp"
#include "ncanet/tensor.hpp"

namespace ncanet {

// Attention axis of a C x H x W tensor.
enum class Axis { vertical, transverse, channel };

std::string_view axis_name(Axis axis);
// Short tag used in order strings: V, T, C.
char axis_tag(Axis axis);

// Position of element (c, h, w) inside the axis-major matrix.
//   channel    -> C x (H*W), row c,  col h*W + w
//   vertical   -> H x (C*W), row h,  col c*W + w
//   transverse -> W x (H*C), row w,  col h*C + c
std::pair<std::size_t, std::size_t> axis_major_index(Axis axis, const Shape& chw, std::size_t c,
                                                     std::size_t h, std::size_t w);
Shape axis_major_shape(Axis axis, const Shape& chw);

// --- reshapes -------------------------------------------------------------

template <typename T>
Var<T> reshape_axis_major(Var<T> x, Axis axis);
// Inverse of reshape_axis_major; chw is the original rank-3 shape.
template <typename T>
Var<T> restore_axis_major(Var<T> m, Axis axis, const Shape& chw);
template <typename T>
Var<T> transpose(Var<T> m);
template <typename T>
Var<T> concat_channels(Var<T> a, Var<T> b);

// --- linear algebra -------------------------------------------------------

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b);
// Row-wise softmax with per-row max subtraction.
template <typename T>
Var<T> softmax_rows(Var<T> m);

// out[o,h,w] = bias[o] + sum_c weight[o,c] * x[c,h,w]; weight Cout x C, bias Cout.
template <typename T>
Var<T> pointwise_conv(Var<T> x, Var<T> weight, Var<T> bias);
// Zero "same" padding, stride 1, odd k. weight Cout x C x k x k, bias Cout.
template <typename T>
Var<T> conv2d(Var<T> x, Var<T> weight, Var<T> bias);
// Depthwise valid-region correlation of every channel with a fixed k x k kernel.
template <typename T>
Var<T> filter2d_valid(Var<T> x, const Tensor<T>& kernel);

// --- elementwise ----------------------------------------------------------

template <typename T>
Var<T> relu(Var<T> x);
template <typename T>
Var<T> sigmoid(Var<T> x);
template <typename T>
Var<T> tanh(Var<T> x);
template <typename T>
Var<T> add(Var<T> a, Var<T> b);
template <typename T>
Var<T> sub(Var<T> a, Var<T> b);
template <typename T>
Var<T> hadamard(Var<T> a, Var<T> b);
template <typename T>
Var<T> divide(Var<T> a, Var<T> b);
template <typename T>
Var<T> scale(Var<T> x, double s);
template <typename T>
Var<T> add_scalar(Var<T> x, double s);
// Multiplies every element by a learnable one-element tensor.
template <typename T>
Var<T> scale_by(Var<T> x, Var<T> alpha);

// --- reductions (result has shape {1}) --------------------------------------

template <typename T>
Var<T> sum(Var<T> x);
template <typename T>
Var<T> mean(Var<T> x);

}  // namespace ncanet
