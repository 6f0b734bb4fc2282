#pragma once

#include <functional>
#include <vector>

#include "hyp/tensor.hpp"

namespace hyp {

struct GradCheckOptions {
  double step = 1e-5;
  // Test hook: added to every analytic gradient entry before comparison.
  double inject_error = 0.0;
};

// Compares tape gradients of the scalar `loss` with respect to every tensor
// in `params` against central finite differences. Returns the maximum over
// all coordinates of |analytic - numeric| / max(1, |analytic|).
// The params must be leaves with requires_grad set; their values are
// perturbed in place and restored.
double grad_check(const std::function<Tensor()>& loss, std::vector<Tensor> params,
                  const GradCheckOptions& options = {});

// Single-input form: f maps x to a scalar.
double grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x, double step = 1e-5);

}  // namespace hyp
