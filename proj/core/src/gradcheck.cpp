#include "progrow/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "progrow/errors.hpp"

namespace progrow {

Tensor numeric_gradient(const ScalarFn& f, const Tensor& x, double h) {
  if (!(h > 0.0)) throw ParameterError("numeric_gradient: step must be positive");
  Tensor probe = x;
  Tensor grad(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + h;
    const double up = f(probe);
    probe[i] = orig - h;
    const double down = f(probe);
    probe[i] = orig;
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

double finite_diff_check(const ScalarFn& f, const Tensor& x, const Tensor& analytic_grad,
                         double h) {
  if (!x.same_shape(analytic_grad)) {
    throw DimensionError("finite_diff_check: gradient shape " +
                         shape_string(analytic_grad.shape()) + " does not match input " +
                         shape_string(x.shape()));
  }
  const Tensor fd = numeric_gradient(f, x, h);
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double denom = std::max({1.0, std::abs(fd[i]), std::abs(analytic_grad[i])});
    worst = std::max(worst, std::abs(fd[i] - analytic_grad[i]) / denom);
  }
  return worst;
}

}  // namespace progrow
