#pragma once

// Lorentz (hyperboloid) model of hyperbolic space with curvature k < 0:
//   L^{d,k} = { x in R^{d+1} : <x,x>_L = 1/k, x_t > 0 },
//   <x,y>_L = -x_t y_t + x_s . y_s.
// Column 0 of a batch holds the time-like coordinate, columns 1..d the
// space-like ones. All functions here are pure; they differentiate through
// both the point coordinates and the curvature when a tape is active.

#include <cstddef>
#include <string_view>

#include "hyp/ops.hpp"
#include "hyp/tensor.hpp"

namespace hyp {

// Learnable curvature k = -softplus(raw). Copies share the same raw scalar.
class Curvature {
 public:
  Curvature() = default;

  // Throws CurvatureError unless kappa < 0.
  static Curvature from_value(double kappa, bool trainable = false);
  // Curvature -magnitude; magnitude must be > 0.
  static Curvature from_magnitude(double magnitude, bool trainable = false);

  double value() const;
  double magnitude() const { return -value(); }
  // Differentiable 1x1 tensor holding k.
  Tensor tensor() const;

  const Tensor& raw() const { return raw_; }
  Tensor& raw() { return raw_; }
  bool trainable() const { return raw_.requires_grad(); }
  void set_trainable(bool on) { raw_.set_requires_grad(on); }

  bool same_parameter(const Curvature& other) const { return raw_.impl() == other.raw_.impl(); }

 private:
  explicit Curvature(Tensor raw) : raw_(std::move(raw)) {}
  Tensor raw_;
};

// Throws CurvatureError when the two curvatures differ in value.
void require_same_curvature(const Curvature& a, const Curvature& b, std::string_view where);

struct LorentzBatch {
  Tensor data;  // N x (d+1)
  Curvature curvature;

  std::size_t size() const { return data.rows(); }
  std::size_t dim() const { return data.cols() - 1; }
  Tensor time() const { return slice_cols(data, 0, 1); }
  Tensor space() const { return slice_cols(data, 1, data.cols()); }
};

// Tangent vectors, one per row of `base` (or all at a single-row base).
struct TangentBatch {
  Tensor data;
  LorentzBatch base;
};

inline constexpr double kManifoldTol = 1e-8;

// max_r |k <x_r,x_r>_L - 1|.
double constraint_residual(const LorentzBatch& x);
// Throws DomainError if the residual exceeds `tol` or some x_t <= 0.
void check_on_manifold(const LorentzBatch& x, double tol, std::string_view where);

LorentzBatch origin(std::size_t dim, const Curvature& k);

// Row-wise <x,y>_L; a single-row operand broadcasts. Result is N x 1.
Tensor lorentz_inner(const Tensor& x, const Tensor& y);
Tensor lorentz_inner(const LorentzBatch& x, const LorentzBatch& y);

LorentzBatch exp_map(const LorentzBatch& x, const Tensor& tangent);
LorentzBatch exp_map(const TangentBatch& u);
TangentBatch log_map(const LorentzBatch& x, const LorentzBatch& y);
// Geodesic distance, N x 1.
Tensor distance(const LorentzBatch& x, const LorentzBatch& y);

// Rescales each row s of `sums` to s / (sqrt|k| sqrt|<s,s>_L|), the common
// normalization behind the Lorentzian midpoint. Denominator floored at 1e-8.
LorentzBatch lorentz_normalize(const Tensor& sums, const Curvature& k);

// Weighted Lorentzian midpoint of all rows of `points` (weights: N values,
// non-negative, at least one positive). Returns a single row.
LorentzBatch lorentz_midpoint(const LorentzBatch& points, const Tensor& weights);

// Completes space-like coordinates with x_t = sqrt(|x_s|^2 - 1/k).
LorentzBatch project_to_manifold(const Tensor& space, const Curvature& k);

// Maps Euclidean features v to exp_o((0, v)).
LorentzBatch lift_euclidean(const Tensor& features, const Curvature& k);

}  // namespace hyp
