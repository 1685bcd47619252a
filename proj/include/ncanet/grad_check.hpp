#pragma once

#include <functional>
#include <span>
#include <vector>

#include "ncanet/tape.hpp"
#include "ncanet/tensor.hpp"

namespace ncanet {

// f builds a scalar-valued graph on the given tape from the leaf it receives.
using ScalarFn = std::function<Var<double>(GradTape<double>&, Var<double>)>;
using MultiScalarFn =
    std::function<Var<double>(GradTape<double>&, std::span<const Var<double>>)>;

// Max over elements of |analytic - central difference| / (|analytic| + |fd| + 1e-12).
// Throws ShapeError if f is not scalar-valued.
double grad_check(const ScalarFn& f, const Tensor<double>& x, double h = 1e-6);

// Same check over several leaves at once (e.g. an input plus parameters).
double grad_check_all(const MultiScalarFn& f, const std::vector<Tensor<double>>& inputs,
                      double h = 1e-6);

// Central-difference Jacobian of a tensor function: (out.numel x x.numel).
Tensor<double> fd_jacobian(const std::function<Tensor<double>(const Tensor<double>&)>& f,
                           const Tensor<double>& x, double h);

// Smallest nonzero |pre-activation| over every relu recorded on the tape, +inf
// if none. Exact zeros come from sums of dead upstream relus, whose own inputs
// are counted. A finite-difference step must stay well below the margin.
double relu_margin(const GradTape<double>& tape);

}  // namespace ncanet
