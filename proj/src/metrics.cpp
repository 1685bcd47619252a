#include "ncanet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ncanet/log.hpp"

namespace ncanet {

std::size_t effective_window(const SsimConfig& cfg, std::size_t height, std::size_t width) {
  if (cfg.window == 0 || cfg.window % 2 == 0)
    throw std::invalid_argument("SSIM window size must be odd, got " + std::to_string(cfg.window));
  std::size_t fit = std::min(height, width);
  if (fit == 0) throw ShapeError("SSIM of an empty image");
  if (fit % 2 == 0) --fit;
  return std::min(cfg.window, fit);
}

template <typename T>
Tensor<T> gaussian_window(std::size_t size, double sigma) {
  std::vector<double> g(size);
  const double centre = (static_cast<double>(size) - 1.0) / 2.0;
  double total = 0.0;
  for (std::size_t i = 0; i < size; ++i) {
    const double d = static_cast<double>(i) - centre;
    g[i] = std::exp(-d * d / (2.0 * sigma * sigma));
    total += g[i];
  }
  for (double& v : g) v /= total;
  Tensor<T> w(Shape{size, size});
  for (std::size_t i = 0; i < size; ++i)
    for (std::size_t j = 0; j < size; ++j) w.at(i, j) = static_cast<T>(g[i] * g[j]);
  return w;
}

namespace {

template <typename T>
Var<T> to_luma(Var<T> x) {
  if (x.shape()[0] != 3) throw ShapeError("luma SSIM needs 3 channels, got " + x.shape().str());
  GradTape<T>& tape = x.tape();
  Var<T> w = tape.constant(Tensor<T>(Shape{1, 3}, {T(0.299), T(0.587), T(0.114)}));
  Var<T> b = tape.constant(Tensor<T>::zeros(Shape{1}));
  return pointwise_conv(x, w, b);
}

}  // namespace

template <typename T>
Var<T> ssim_graph(Var<T> x, Var<T> y, const SsimConfig& cfg) {
  if (!(x.shape() == y.shape()))
    throw ShapeError("ssim: shape mismatch " + x.shape().str() + " vs " + y.shape().str());
  if (x.shape().rank() != 3) throw ShapeError("ssim: expected C x H x W, got " + x.shape().str());
  if (cfg.luma_only) {
    x = to_luma(x);
    y = to_luma(y);
  }
  const std::size_t k = effective_window(cfg, x.shape()[1], x.shape()[2]);
  const Tensor<T> window = gaussian_window<T>(k, cfg.sigma);
  const double c1 = (cfg.k1 * cfg.dynamic_range) * (cfg.k1 * cfg.dynamic_range);
  const double c2 = (cfg.k2 * cfg.dynamic_range) * (cfg.k2 * cfg.dynamic_range);

  Var<T> mu_x = filter2d_valid(x, window);
  Var<T> mu_y = filter2d_valid(y, window);
  Var<T> mu_xx = hadamard(mu_x, mu_x);
  Var<T> mu_yy = hadamard(mu_y, mu_y);
  Var<T> mu_xy = hadamard(mu_x, mu_y);
  Var<T> var_x = sub(filter2d_valid(hadamard(x, x), window), mu_xx);
  Var<T> var_y = sub(filter2d_valid(hadamard(y, y), window), mu_yy);
  Var<T> cov = sub(filter2d_valid(hadamard(x, y), window), mu_xy);

  Var<T> num = hadamard(add_scalar(scale(mu_xy, 2.0), c1), add_scalar(scale(cov, 2.0), c2));
  Var<T> den = hadamard(add_scalar(add(mu_xx, mu_yy), c1), add_scalar(add(var_x, var_y), c2));
  return mean(divide(num, den));
}

template <typename T>
Var<T> ssim_loss(Var<T> pred, Var<T> target, const SsimConfig& cfg) {
  return add_scalar(scale(ssim_graph(pred, target, cfg), -1.0), 1.0);
}

namespace {

Tensor<double> clamped_copy(const Tensor<double>& t, const char* which) {
  Tensor<double> out = t;
  bool clamped = false;
  for (std::size_t i = 0; i < out.numel(); ++i) {
    const double v = std::clamp(out[i], 0.0, 1.0);
    clamped = clamped || v != out[i];
    out[i] = v;
  }
  if (clamped) log_warning(std::string("ssim: ") + which + " has values outside [0, 1]; clamped");
  return out;
}

}  // namespace

template <typename T>
double ssim(const Tensor<T>& x, const Tensor<T>& y, const SsimConfig& cfg) {
  if (!(x.shape() == y.shape()))
    throw ShapeError("ssim: shape mismatch " + x.shape().str() + " vs " + y.shape().str());
  GradTape<double> tape(false);
  Var<double> xv = tape.constant(clamped_copy(x.template cast<double>(), "x"));
  Var<double> yv = tape.constant(clamped_copy(y.template cast<double>(), "y"));
  return ssim_graph(xv, yv, cfg).value()[0];
}

template <typename T>
double mse(const Tensor<T>& x, const Tensor<T>& y) {
  if (!(x.shape() == y.shape()))
    throw ShapeError("mse: shape mismatch " + x.shape().str() + " vs " + y.shape().str());
  if (x.numel() == 0) throw ShapeError("mse of empty tensors");
  // Neumaier summation
  double total = 0.0, carry = 0.0;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double d = static_cast<double>(x[i]) - static_cast<double>(y[i]);
    const double sq = d * d, t = total + sq;
    carry += std::abs(total) >= sq ? (total - t) + sq : (sq - t) + total;
    total = t;
  }
  return (total + carry) / static_cast<double>(x.numel());
}

template <typename T>
double psnr(const Tensor<T>& x, const Tensor<T>& y, double peak) {
  const double e = mse(x, y);
  if (e == 0.0) return kPsnrIdentical;
  return 20.0 * std::log10(peak) - 10.0 * std::log10(e);
}

#define NCANET_INSTANTIATE_METRICS(T)                                          \
  template Tensor<T> gaussian_window<T>(std::size_t, double);                  \
  template Var<T> ssim_graph<T>(Var<T>, Var<T>, const SsimConfig&);            \
  template Var<T> ssim_loss<T>(Var<T>, Var<T>, const SsimConfig&);             \
  template double ssim<T>(const Tensor<T>&, const Tensor<T>&, const SsimConfig&); \
  template double mse<T>(const Tensor<T>&, const Tensor<T>&);                  \
  template double psnr<T>(const Tensor<T>&, const Tensor<T>&, double);

NCANET_INSTANTIATE_METRICS(float)
NCANET_INSTANTIATE_METRICS(double)

}  // namespace ncanet
