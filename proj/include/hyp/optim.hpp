#pragma once

#include <cstddef>
#include <vector>

#include "hyp/tensor.hpp"

namespace hyp {

struct ParamGroup {
  Tensor param;
  double lr_scale = 1.0;
  bool decay = true;  // L2 penalty added to the gradient
};

struct AdamOptions {
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

class Adam {
 public:
  Adam(std::vector<ParamGroup> params, AdamOptions options);

  // Applies one update from the accumulated gradients. Parameters without a
  // gradient or with requires_grad unset are left alone.
  void step();
  void zero_grad();

  std::size_t steps() const { return t_; }

 private:
  std::vector<ParamGroup> params_;
  AdamOptions opt_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::size_t t_ = 0;
};

}  // namespace hyp
