#include "hyp/optim.hpp"

#include <cmath>

namespace hyp {

Adam::Adam(std::vector<ParamGroup> params, AdamOptions options) : params_(std::move(params)), opt_(options) {
  for (const auto& g : params_) {
    m_.emplace_back(g.param.size(), 0.0);
    v_.emplace_back(g.param.size(), 0.0);
  }
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i].param;
    if (!p.requires_grad() || !p.has_grad()) continue;
    const auto& grad = p.impl()->grad;
    auto values = p.mutable_values();
    const double lr = opt_.lr * params_[i].lr_scale;
    const double wd = params_[i].decay ? opt_.weight_decay : 0.0;
    for (std::size_t j = 0; j < values.size(); ++j) {
      const double g = grad[j] + wd * values[j];
      m_[i][j] = opt_.beta1 * m_[i][j] + (1.0 - opt_.beta1) * g;
      v_[i][j] = opt_.beta2 * v_[i][j] + (1.0 - opt_.beta2) * g * g;
      values[j] -= lr * (m_[i][j] / c1) / (std::sqrt(v_[i][j] / c2) + opt_.eps);
    }
  }
}

void Adam::zero_grad() {
  for (auto& g : params_) g.param.zero_grad();
}

}  // namespace hyp
