#include "ncanet/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ncanet {

namespace {

double rel_error(double analytic, double fd) {
  return std::abs(analytic - fd) / (std::abs(analytic) + std::abs(fd) + 1e-12);
}

double evaluate(const MultiScalarFn& f, const std::vector<Tensor<double>>& inputs) {
  GradTape<double> tape(false);
  std::vector<Var<double>> leaves;
  for (const auto& in : inputs) leaves.push_back(tape.leaf(in));
  Var<double> y = f(tape, leaves);
  if (y.value().numel() != 1)
    throw ShapeError("grad_check: function must be scalar-valued, got " + y.shape().str());
  return y.value()[0];
}

}  // namespace

double grad_check_all(const MultiScalarFn& f, const std::vector<Tensor<double>>& inputs,
                      double h) {
  std::vector<Tensor<double>> analytic;
  {
    GradTape<double> tape;
    std::vector<Var<double>> leaves;
    for (const auto& in : inputs) leaves.push_back(tape.leaf(in, true));
    Var<double> y = f(tape, leaves);
    if (y.value().numel() != 1)
      throw ShapeError("grad_check: function must be scalar-valued, got " + y.shape().str());
    tape.backward(y);
    for (const auto& l : leaves) analytic.push_back(l.grad());
  }

  double worst = 0.0;
  std::vector<Tensor<double>> probe = inputs;
  for (std::size_t k = 0; k < probe.size(); ++k) {
    for (std::size_t i = 0; i < probe[k].numel(); ++i) {
      const double orig = probe[k][i];
      const double up = orig + h, down = orig - h;
      probe[k][i] = up;
      const double fp = evaluate(f, probe);
      probe[k][i] = down;
      const double fm = evaluate(f, probe);
      probe[k][i] = orig;
      worst = std::max(worst, rel_error(analytic[k][i], (fp - fm) / (up - down)));
    }
  }
  return worst;
}

double grad_check(const ScalarFn& f, const Tensor<double>& x, double h) {
  return grad_check_all(
      [&f](GradTape<double>& t, std::span<const Var<double>> v) { return f(t, v[0]); }, {x}, h);
}

Tensor<double> fd_jacobian(const std::function<Tensor<double>(const Tensor<double>&)>& f,
                           const Tensor<double>& x, double h) {
  Tensor<double> probe = x;
  const std::size_t n_out = f(x).numel();
  Tensor<double> jac(Shape{n_out, x.numel()});
  for (std::size_t j = 0; j < x.numel(); ++j) {
    const double orig = probe[j];
    const double up = orig + h, down = orig - h;
    probe[j] = up;
    Tensor<double> yp = f(probe);
    probe[j] = down;
    Tensor<double> ym = f(probe);
    probe[j] = orig;
    for (std::size_t i = 0; i < n_out; ++i) jac.at(i, j) = (yp[i] - ym[i]) / (up - down);
  }
  return jac;
}

double relu_margin(const GradTape<double>& tape) {
  double margin = std::numeric_limits<double>::infinity();
  for (std::size_t id = 0; id < tape.size(); ++id) {
    if (tape.op(id) != "relu") continue;
    for (double v : tape.value(tape.first_input(id)).vec())
      if (v != 0.0) margin = std::min(margin, std::abs(v));
  }
  return margin;
}

}  // namespace ncanet
