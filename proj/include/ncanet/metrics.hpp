#pragma once

#include <limits>

#include "ncanet/ops.hpp"

namespace ncanet {

// Gaussian-window SSIM with the usual constants. Moments are taken over the
// valid region only (no padding), then averaged over positions and channels.
struct SsimConfig {
  std::size_t window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;
  // Evaluate on BT.601 luma instead of averaging RGB channels (3-channel input only).
  bool luma_only = false;
};

// Images smaller than the window use the largest odd window that fits.
std::size_t effective_window(const SsimConfig& cfg, std::size_t height, std::size_t width);

// Normalized k x k Gaussian, sums to 1.
template <typename T>
Tensor<T> gaussian_window(std::size_t size, double sigma);

// Differentiable mean SSIM; result has shape {1}. No clamping.
template <typename T>
Var<T> ssim_graph(Var<T> x, Var<T> y, const SsimConfig& cfg = {});

// 1 - ssim(pred, target).
template <typename T>
Var<T> ssim_loss(Var<T> pred, Var<T> target, const SsimConfig& cfg = {});

// Metric form, evaluated in double. Values outside [0, 1] are clamped with a warning.
template <typename T>
double ssim(const Tensor<T>& x, const Tensor<T>& y, const SsimConfig& cfg = {});

// Returned by psnr() for identical images.
inline constexpr double kPsnrIdentical = std::numeric_limits<double>::infinity();

// 10 log10(peak^2 / MSE); kPsnrIdentical when MSE == 0.
template <typename T>
double psnr(const Tensor<T>& x, const Tensor<T>& y, double peak = 1.0);

template <typename T>
double mse(const Tensor<T>& x, const Tensor<T>& y);

}  // namespace ncanet
