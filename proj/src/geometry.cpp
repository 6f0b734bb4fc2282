#include "hyp/geometry.hpp"

#include <cmath>
#include <string>

#include "hyp/errors.hpp"

namespace hyp {

namespace {

double softplus_value(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double softplus_inverse(double y) {
  // log(exp(y) - 1), stable for large y.
  return y > 30.0 ? y + std::log1p(-std::exp(-y)) : std::log(std::expm1(y));
}

Tensor sqrt_abs_curvature(const Curvature& k) { return sqrt(neg(k.tensor())); }

// 1 x (d+1) row (-1, 1, ..., 1).
Tensor minkowski_sign(std::size_t cols) {
  Tensor s = Tensor::full(1, cols, 1.0);
  s(0, 0) = -1.0;
  return s;
}

void require_rows_compatible(const Tensor& a, const Tensor& b, const char* where) {
  if (a.cols() != b.cols()) throw ShapeError(std::string(where) + ": dimension mismatch");
  if (a.rows() != b.rows() && a.rows() != 1 && b.rows() != 1) {
    throw ShapeError(std::string(where) + ": batch size mismatch");
  }
}

}  // namespace

Curvature Curvature::from_value(double kappa, bool trainable) {
  if (!(kappa < 0.0) || !std::isfinite(kappa)) {
    throw CurvatureError("curvature must be finite and strictly negative, got " + std::to_string(kappa));
  }
  Tensor raw = Tensor::scalar(softplus_inverse(-kappa));
  raw.set_requires_grad(trainable);
  return Curvature(std::move(raw));
}

Curvature Curvature::from_magnitude(double magnitude, bool trainable) {
  if (!(magnitude > 0.0)) throw CurvatureError("curvature magnitude must be > 0");
  return from_value(-magnitude, trainable);
}

double Curvature::value() const { return -softplus_value(raw_.item()); }

Tensor Curvature::tensor() const { return neg(softplus(raw_)); }

void require_same_curvature(const Curvature& a, const Curvature& b, std::string_view where) {
  if (a.same_parameter(b)) return;
  const double ka = a.value();
  const double kb = b.value();
  if (std::abs(ka - kb) > 1e-12 * std::max(std::abs(ka), std::abs(kb))) {
    throw CurvatureError(std::string(where) + ": curvature mismatch (" + std::to_string(ka) + " vs " +
                         std::to_string(kb) + ")");
  }
}

double constraint_residual(const LorentzBatch& x) {
  const double k = x.curvature.value();
  const std::size_t c = x.data.cols();
  const auto v = x.data.values();
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double* row = v.data() + i * c;
    double ip = -row[0] * row[0];
    for (std::size_t j = 1; j < c; ++j) ip += row[j] * row[j];
    const double r = std::abs(k * ip - 1.0);
    worst = std::isnan(r) ? r : std::max(worst, r);
    if (std::isnan(worst)) return worst;
  }
  return worst;
}

void check_on_manifold(const LorentzBatch& x, double tol, std::string_view where) {
  const double r = constraint_residual(x);
  if (!(r <= tol)) {
    throw DomainError(std::string(where) + ": off-manifold, residual " + std::to_string(r));
  }
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x.data(i, 0) > 0.0)) throw DomainError(std::string(where) + ": non-positive time coordinate");
  }
}

LorentzBatch origin(std::size_t dim, const Curvature& k) {
  if (dim < 1) throw ShapeError("origin: dimension must be >= 1");
  k.value();  // curvature validity is enforced at construction
  Tensor t = div(Tensor::scalar(1.0), sqrt_abs_curvature(k));
  return {concat_cols({t, Tensor::zeros(1, dim)}), k};
}

Tensor lorentz_inner(const Tensor& x, const Tensor& y) {
  require_rows_compatible(x, y, "lorentz_inner");
  return sum_rows(mul(mul(x, y), minkowski_sign(x.cols())));
}

Tensor lorentz_inner(const LorentzBatch& x, const LorentzBatch& y) {
  require_same_curvature(x.curvature, y.curvature, "lorentz_inner");
  return lorentz_inner(x.data, y.data);
}

LorentzBatch exp_map(const LorentzBatch& x, const Tensor& tangent) {
  require_rows_compatible(x.data, tangent, "exp_map");
  Tensor uu = lorentz_inner(tangent, tangent);
  for (std::size_t i = 0; i < uu.rows(); ++i) {
    double scale2 = 0.0;
    for (std::size_t j = 0; j < tangent.cols(); ++j) scale2 += tangent(i, j) * tangent(i, j);
    if (uu(i, 0) < -kManifoldTol * std::max(1.0, scale2)) {
      throw DomainError("exp_map: tangent vector is not space-like");
    }
  }
  Tensor theta = mul(sqrt(uu), sqrt_abs_curvature(x.curvature));
  Tensor out = add(mul(cosh(theta), x.data), mul(sinhc(theta), tangent));
  // Time rebuilt from space; the cosh/sinh combination drifts off the sheet for far points.
  out = project_to_manifold(slice_cols(out, 1, out.cols()), x.curvature).data;

  // Zero tangents return the base point exactly.
  Tensor moved = Tensor::full(tangent.rows(), 1, 1.0);
  bool any_zero = false;
  for (std::size_t i = 0; i < tangent.rows(); ++i) {
    bool zero = true;
    for (std::size_t j = 0; j < tangent.cols() && zero; ++j) zero = tangent(i, j) == 0.0;
    if (zero) {
      moved(i, 0) = 0.0;
      any_zero = true;
    }
  }
  if (any_zero) {
    Tensor base = x.data.rows() == out.rows() ? x.data : broadcast_to(x.data, out.rows(), out.cols());
    out = add(mul(out, moved), mul(base, add_scalar(neg(moved), 1.0)));
  }
  return {out, x.curvature};
}

LorentzBatch exp_map(const TangentBatch& u) { return exp_map(u.base, u.data); }

TangentBatch log_map(const LorentzBatch& x, const LorentzBatch& y) {
  require_same_curvature(x.curvature, y.curvature, "log_map");
  require_rows_compatible(x.data, y.data, "log_map");
  Tensor alpha = mul(x.curvature.tensor(), lorentz_inner(x.data, y.data));
  Tensor coef = div(Tensor::scalar(1.0), sinhc(acosh(alpha)));
  Tensor v = sub(y.data, mul(alpha, x.data));
  Tensor out = mul(coef, v);

  // Coincident points map to the exact zero vector.
  const std::size_t rows = out.rows();
  const std::size_t cols = out.cols();
  Tensor keep = Tensor::full(rows, 1, 1.0);
  bool any_coincident = false;
  for (std::size_t i = 0; i < rows; ++i) {
    const std::size_t xi = x.data.rows() == 1 ? 0 : i;
    const std::size_t yi = y.data.rows() == 1 ? 0 : i;
    bool same = true;
    for (std::size_t j = 0; j < cols && same; ++j) same = x.data(xi, j) == y.data(yi, j);
    if (same) {
      keep(i, 0) = 0.0;
      any_coincident = true;
    }
  }
  if (any_coincident) out = mul(out, keep);
  return {out, x};
}

Tensor distance(const LorentzBatch& x, const LorentzBatch& y) {
  require_same_curvature(x.curvature, y.curvature, "distance");
  require_rows_compatible(x.data, y.data, "distance");
  // k<x,y> = 1 - (k/2)<x-y,x-y>; the difference form is exactly 1 at x == y.
  Tensor diff = sub(x.data, y.data);
  Tensor sq = clamp_min(lorentz_inner(diff, diff), 0.0);
  Tensor alpha = add_scalar(mul(scale(x.curvature.tensor(), -0.5), sq), 1.0);
  return div(acosh(alpha), sqrt_abs_curvature(x.curvature));
}

LorentzBatch lorentz_normalize(const Tensor& sums, const Curvature& k) {
  Tensor ss = abs(lorentz_inner(sums, sums));
  Tensor den = clamp_min(mul(sqrt_abs_curvature(k), sqrt(ss)), 1e-8);
  return {div(sums, den), k};
}

LorentzBatch lorentz_midpoint(const LorentzBatch& points, const Tensor& weights) {
  if (weights.size() != points.size()) throw ShapeError("lorentz_midpoint: one weight per point required");
  bool positive = false;
  for (double w : weights.values()) {
    if (w < 0.0 || !std::isfinite(w)) throw DomainError("lorentz_midpoint: weights must be non-negative");
    positive = positive || w > 0.0;
  }
  if (!positive) throw DomainError("lorentz_midpoint: all weights are zero");
  Tensor w = weights.rows() == 1 ? weights : transpose(weights);
  return lorentz_normalize(matmul(w, points.data), points.curvature);
}

LorentzBatch project_to_manifold(const Tensor& space, const Curvature& k) {
  Tensor inv_k = div(Tensor::scalar(1.0), k.tensor());
  Tensor t = sqrt(sub(sum_rows(mul(space, space)), inv_k));
  return {concat_cols({t, space}), k};
}

LorentzBatch lift_euclidean(const Tensor& features, const Curvature& k) {
  for (double v : features.values()) {
    if (!std::isfinite(v)) throw DomainError("lift_euclidean: non-finite feature");
  }
  LorentzBatch o = origin(features.cols(), k);
  Tensor u = concat_cols({Tensor::zeros(features.rows(), 1), features});
  return exp_map(o, u);
}

}  // namespace hyp
