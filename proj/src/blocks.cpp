#include "hyp/blocks.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "hyp/errors.hpp"

namespace hyp {

namespace {

constexpr double kLayerNormEps = 1e-10;
constexpr double kBatchNormEps = 1e-5;

// sqrt(k_in / k_out) as a differentiable scalar; exactly 1 for a shared parameter.
Tensor curvature_ratio_sqrt(const Curvature& in, const Curvature& out) {
  if (in.same_parameter(out)) return Tensor::scalar(1.0);
  return sqrt(div(in.tensor(), out.tensor()));
}

Tensor layernorm(const Tensor& s, const LayerNormFn& fn) {
  const std::size_t d = s.cols();
  if (d < 2) throw ShapeError("layernorm needs at least 2 space-like dimensions");
  const double inv_d = 1.0 / static_cast<double>(d);
  Tensor centered = sub(s, scale(sum_rows(s), inv_d));
  Tensor var = scale(sum_rows(mul(centered, centered)), inv_d);
  Tensor normed = div(centered, sqrt(add_scalar(var, kLayerNormEps)));
  return add(mul(normed, fn.gain), fn.bias);
}

Tensor batchnorm(const Tensor& s, const BatchNormFn& fn, const ForwardMode& mode) {
  const std::size_t n = s.rows();
  const std::size_t d = s.cols();
  BatchNormStats& st = *fn.stats;
  if (st.running_mean.size() != d) throw ShapeError("batchnorm: dimension mismatch");
  Tensor normed;
  if (mode.training) {
    const double inv_n = 1.0 / static_cast<double>(n);
    Tensor mu = scale(sum_cols(s), inv_n);
    Tensor centered = sub(s, mu);
    Tensor var = scale(sum_cols(mul(centered, centered)), inv_n);
    normed = div(centered, sqrt(add_scalar(var, kBatchNormEps)));
    for (std::size_t j = 0; j < d; ++j) {
      st.running_mean[j] = st.momentum * st.running_mean[j] + (1.0 - st.momentum) * mu(0, j);
      st.running_var[j] = st.momentum * st.running_var[j] + (1.0 - st.momentum) * var(0, j);
    }
  } else {
    Tensor mu = Tensor::from(1, d, std::span<const double>(st.running_mean));
    Tensor sd = Tensor::zeros(1, d);
    for (std::size_t j = 0; j < d; ++j) sd(0, j) = std::sqrt(st.running_var[j] + kBatchNormEps);
    normed = div(sub(s, mu), sd);
  }
  return add(mul(normed, fn.gain), fn.bias);
}

Tensor dropout(const Tensor& s, double rate, const ForwardMode& mode) {
  if (!(rate >= 0.0 && rate < 1.0)) throw std::invalid_argument("dropout rate must be in [0, 1)");
  if (!mode.training || rate == 0.0) return s;
  if (mode.rng == nullptr) throw std::invalid_argument("train-time dropout needs an rng");
  std::bernoulli_distribution keep(1.0 - rate);
  const double scale_kept = 1.0 / (1.0 - rate);
  Tensor mask = Tensor::zeros(s.rows(), s.cols());
  for (double& m : mask.mutable_values()) m = keep(*mode.rng) ? scale_kept : 0.0;
  return mul(s, mask);
}

Tensor activation(const Tensor& s, Activation kind) {
  switch (kind) {
    case Activation::identity:
      return s;
    case Activation::relu:
      return relu(s);
    case Activation::sigmoid:
      return sigmoid(s);
  }
  throw std::invalid_argument("unknown activation");
}

}  // namespace

LorentzBatch calibrate_time(const Tensor& space, const Curvature& in, const Curvature& out) {
  if (in.same_parameter(out)) return project_to_manifold(space, out);
  return project_to_manifold(mul(space, curvature_ratio_sqrt(in, out)), out);
}

HtcParams make_htc(std::size_t in_dim, std::size_t out_dim, Curvature in, Curvature out, Rng& rng) {
  if (in_dim < 1 || out_dim < 1) throw ShapeError("HTC dimensions must be >= 1");
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_dim + 1));
  std::uniform_real_distribution<double> u(-bound, bound);
  HtcParams p;
  p.weight = Tensor::zeros(in_dim + 1, out_dim);
  for (double& w : p.weight.mutable_values()) w = u(rng);
  p.weight.set_requires_grad(true);
  p.bias = Tensor::zeros(1, out_dim);
  p.bias.set_requires_grad(true);
  p.in = std::move(in);
  p.out = std::move(out);
  return p;
}

LorentzBatch htc_forward(const LorentzBatch& x, const HtcParams& params) {
  require_same_curvature(x.curvature, params.in, "htc_forward");
  if (x.data.cols() != params.weight.rows()) throw ShapeError("htc_forward: input dimension mismatch");
  Tensor f = add(matmul(x.data, params.weight), params.bias);
  return calibrate_time(f, params.in, params.out);
}

LayerNormFn make_layernorm(std::size_t dim) {
  LayerNormFn fn{Tensor::full(1, dim, 1.0), Tensor::zeros(1, dim)};
  fn.gain.set_requires_grad(true);
  fn.bias.set_requires_grad(true);
  return fn;
}

BatchNormFn make_batchnorm(std::size_t dim) {
  BatchNormFn fn{Tensor::full(1, dim, 1.0), Tensor::zeros(1, dim), std::make_shared<BatchNormStats>()};
  fn.gain.set_requires_grad(true);
  fn.bias.set_requires_grad(true);
  fn.stats->running_mean.assign(dim, 0.0);
  fn.stats->running_var.assign(dim, 1.0);
  return fn;
}

DropoutFn make_dropout(double rate) {
  if (!(rate >= 0.0 && rate < 1.0)) throw std::invalid_argument("dropout rate must be in [0, 1)");
  return DropoutFn{rate};
}

SpaceFn make_space_fn(std::string_view tag, std::size_t dim) {
  if (tag == "identity") return ActivationFn{Activation::identity};
  if (tag == "relu") return ActivationFn{Activation::relu};
  if (tag == "sigmoid") return ActivationFn{Activation::sigmoid};
  if (tag == "layernorm") return make_layernorm(dim);
  if (tag == "batchnorm") return make_batchnorm(dim);
  if (tag.starts_with("dropout:")) {
    const std::string rate(tag.substr(8));
    try {
      std::size_t used = 0;
      const double r = std::stod(rate, &used);
      if (used == rate.size()) return make_dropout(r);
    } catch (const std::logic_error&) {
    }
  }
  throw ConfigError("unknown space-like function tag '" + std::string(tag) + "'");
}

Tensor apply_space_fn(const Tensor& space, const SpaceFn& fn, const ForwardMode& mode) {
  return std::visit(
      [&](const auto& f) -> Tensor {
        using T = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<T, LayerNormFn>) {
          return layernorm(space, f);
        } else if constexpr (std::is_same_v<T, BatchNormFn>) {
          return batchnorm(space, f, mode);
        } else if constexpr (std::is_same_v<T, DropoutFn>) {
          return dropout(space, f.rate, mode);
        } else {
          return activation(space, f.kind);
        }
      },
      fn);
}

LorentzBatch hrc_forward(const LorentzBatch& x, const HrcSpec& spec, const ForwardMode& mode) {
  require_same_curvature(x.curvature, spec.in, "hrc_forward");
  Tensor s = x.space();
  for (const SpaceFn& step : spec.steps) s = apply_space_fn(s, step, mode);
  return calibrate_time(s, spec.in, spec.out);
}

HrcSpec compose(const HrcSpec& outer, const HrcSpec& inner) {
  HrcSpec fused;
  fused.steps = inner.steps;
  fused.steps.insert(fused.steps.end(), outer.steps.begin(), outer.steps.end());
  fused.in = inner.in;
  fused.out = outer.out;
  return fused;
}

LorentzBatch hyp_layernorm(const LorentzBatch& x, const LayerNormFn& fn) {
  return hrc_forward(x, HrcSpec{{fn}, x.curvature, x.curvature});
}

LorentzBatch hyp_batchnorm(const LorentzBatch& x, const BatchNormFn& fn, const ForwardMode& mode) {
  return hrc_forward(x, HrcSpec{{fn}, x.curvature, x.curvature}, mode);
}

LorentzBatch hyp_dropout(const LorentzBatch& x, double rate, const ForwardMode& mode) {
  return hrc_forward(x, HrcSpec{{make_dropout(rate)}, x.curvature, x.curvature}, mode);
}

LorentzBatch hyp_activation(const LorentzBatch& x, Activation kind) {
  return hrc_forward(x, HrcSpec{{ActivationFn{kind}}, x.curvature, x.curvature});
}

LorentzBatch change_curvature(const LorentzBatch& x, const Curvature& out) {
  return hrc_forward(x, HrcSpec{{}, x.curvature, out});
}

LorentzBatch hyp_concat(const LorentzBatch& a, const LorentzBatch& b) {
  require_same_curvature(a.curvature, b.curvature, "hyp_concat");
  if (a.size() != b.size()) throw ShapeError("hyp_concat: batch size mismatch");
  return project_to_manifold(concat_cols({a.space(), b.space()}), a.curvature);
}

PositionalParams make_positional(std::size_t dim, const Curvature& k, Rng& rng) {
  return PositionalParams{make_htc(dim, dim, k, k, rng), 1.0};
}

LorentzBatch hyp_positional_encoding(const LorentzBatch& x, const PositionalParams& params) {
  if (!(params.epsilon > 0.0)) throw std::invalid_argument("positional epsilon must be > 0");
  if (params.htc.out_dim() != x.dim()) throw ShapeError("positional encoding: HTC output dimension mismatch");
  LorentzBatch p = htc_forward(x, params.htc);
  require_same_curvature(p.curvature, x.curvature, "hyp_positional_encoding");
  Tensor u = params.epsilon == 1.0 ? add(x.data, p.data) : add(x.data, scale(p.data, params.epsilon));
  return lorentz_normalize(u, x.curvature);
}

LorentzBatch hyp_residual(const LorentzBatch& x, const LorentzBatch& y) {
  require_same_curvature(x.curvature, y.curvature, "hyp_residual");
  if (x.data.rows() != y.data.rows() || x.data.cols() != y.data.cols()) {
    throw ShapeError("hyp_residual: shape mismatch");
  }
  return lorentz_normalize(add(x.data, y.data), x.curvature);
}

}  // namespace hyp
