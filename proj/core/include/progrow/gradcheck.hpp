#pragma once

#include <functional>

#include "progrow/tensor.hpp"

namespace progrow {

using ScalarFn = std::function<double(const Tensor&)>;

// Central-difference gradient of f at x.
Tensor numeric_gradient(const ScalarFn& f, const Tensor& x, double h = 1e-5);

// max_i |fd_i - analytic_i| / max(1, |fd_i|, |analytic_i|), with fd from
// central differences of step h.
double finite_diff_check(const ScalarFn& f, const Tensor& x, const Tensor& analytic_grad,
                         double h = 1e-5);

}  // namespace progrow
