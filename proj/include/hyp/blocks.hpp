#pragma once

// Hyperbolic building blocks on the Lorentz model.
//
// HTC is a linear map of the full (d+1)-vector followed by a move to a new
// curvature; HRC applies a Euclidean function to the space-like coordinates
// only. Both rebuild the time coordinate from the space part:
//   out = ( sqrt(k_in/k_out |f|^2 - 1/k_out), sqrt(k_in/k_out) f ).

#include <cstddef>
#include <memory>
#include <random>
#include <string_view>
#include <variant>
#include <vector>

#include "hyp/geometry.hpp"

namespace hyp {

using Rng = std::mt19937_64;

struct ForwardMode {
  bool training = false;
  Rng* rng = nullptr;  // required by train-time dropout
};

struct HtcParams {
  Tensor weight;  // (d_in + 1) x d_out
  Tensor bias;    // 1 x d_out
  Curvature in;
  Curvature out;

  std::size_t in_dim() const { return weight.rows() - 1; }
  std::size_t out_dim() const { return weight.cols(); }
};

// Scales space-like coordinates by sqrt(k_in/k_out) and rebuilds the time
// coordinate on the k_out hyperboloid.
LorentzBatch calibrate_time(const Tensor& space, const Curvature& in, const Curvature& out);

// Weight ~ U(-1/sqrt(d_in+1), 1/sqrt(d_in+1)), zero bias.
HtcParams make_htc(std::size_t in_dim, std::size_t out_dim, Curvature in, Curvature out, Rng& rng);

LorentzBatch htc_forward(const LorentzBatch& x, const HtcParams& params);

enum class Activation { identity, relu, sigmoid };

struct LayerNormFn {
  Tensor gain;  // 1 x d, init 1
  Tensor bias;  // 1 x d, init 0
};

struct BatchNormStats {
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double momentum = 0.9;
};

struct BatchNormFn {
  Tensor gain;
  Tensor bias;
  std::shared_ptr<BatchNormStats> stats;
};

struct DropoutFn {
  double rate = 0.0;
};

struct ActivationFn {
  Activation kind = Activation::identity;
};

using SpaceFn = std::variant<LayerNormFn, BatchNormFn, DropoutFn, ActivationFn>;

LayerNormFn make_layernorm(std::size_t dim);
BatchNormFn make_batchnorm(std::size_t dim);
DropoutFn make_dropout(double rate);

// Builds a space-like function from a tag: "identity", "relu", "sigmoid",
// "layernorm", "batchnorm" or "dropout:<rate>". Throws ConfigError otherwise.
SpaceFn make_space_fn(std::string_view tag, std::size_t dim);

// Steps run left to right on x_s; an empty list is the identity.
struct HrcSpec {
  std::vector<SpaceFn> steps;
  Curvature in;
  Curvature out;
};

Tensor apply_space_fn(const Tensor& space, const SpaceFn& fn, const ForwardMode& mode);

LorentzBatch hrc_forward(const LorentzBatch& x, const HrcSpec& spec, const ForwardMode& mode = {});

// f1 o f2: the steps of `inner` run first, then those of `outer`, followed by
// a single time recalibration from inner.in to outer.out.
HrcSpec compose(const HrcSpec& outer, const HrcSpec& inner);

// Same-curvature HRC wrappers.
LorentzBatch hyp_layernorm(const LorentzBatch& x, const LayerNormFn& fn);
LorentzBatch hyp_batchnorm(const LorentzBatch& x, const BatchNormFn& fn, const ForwardMode& mode);
LorentzBatch hyp_dropout(const LorentzBatch& x, double rate, const ForwardMode& mode);
LorentzBatch hyp_activation(const LorentzBatch& x, Activation kind);

// Pure curvature change z -> sqrt(k_in/k_out) z.
LorentzBatch change_curvature(const LorentzBatch& x, const Curvature& out);

// Concatenates space-like parts and recomputes time.
LorentzBatch hyp_concat(const LorentzBatch& a, const LorentzBatch& b);

struct PositionalParams {
  HtcParams htc;  // d -> d at the input curvature
  double epsilon = 1.0;
};

PositionalParams make_positional(std::size_t dim, const Curvature& k, Rng& rng);

// x~ = (x + eps p) / sqrt(|k <x + eps p, x + eps p>_L|), p = HTC(x).
LorentzBatch hyp_positional_encoding(const LorentzBatch& x, const PositionalParams& params);

// Midpoint-normalized sum of x and y.
LorentzBatch hyp_residual(const LorentzBatch& x, const LorentzBatch& y);

}  // namespace hyp
