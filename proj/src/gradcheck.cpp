#include "hyp/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "hyp/errors.hpp"

namespace hyp {

double grad_check(const std::function<Tensor()>& loss, std::vector<Tensor> params,
                  const GradCheckOptions& options) {
  for (Tensor& p : params) {
    p.set_requires_grad(true);
    p.zero_grad();
  }
  {
    Tape tape;
    TapeScope scope(tape);
    Tensor value = loss();
    if (value.size() != 1) throw ShapeError("grad_check: loss must be scalar");
    tape.backward(value);
  }

  NoGradScope no_grad;
  const double h = options.step;
  double worst = 0.0;
  for (Tensor& p : params) {
    const std::vector<double> analytic = p.grad();
    auto values = p.mutable_values();
    for (std::size_t k = 0; k < values.size(); ++k) {
      const double saved = values[k];
      values[k] = saved + h;
      const double up = loss().item();
      values[k] = saved - h;
      const double down = loss().item();
      values[k] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[k] + options.inject_error;
      const double err = std::abs(a - numeric) / std::max(1.0, std::abs(a));
      if (!std::isfinite(err)) return std::numeric_limits<double>::infinity();
      worst = std::max(worst, err);
    }
    p.zero_grad();
  }
  return worst;
}

double grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x, double step) {
  GradCheckOptions options;
  options.step = step;
  return grad_check([&] { return f(x); }, {x}, options);
}

}  // namespace hyp
