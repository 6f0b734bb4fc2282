#include "hyp/ops.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "hyp/errors.hpp"

namespace hyp {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

using Node = Tape::Node;
using DataPtr = std::shared_ptr<TensorData>;

ConstMap view(const TensorData& t) { return ConstMap(t.values.data(), t.rows, t.cols); }
ConstMap grad_view(const TensorData& t) { return ConstMap(t.grad.data(), t.rows, t.cols); }
MutMap grad_acc(TensorData& t) { return MutMap(t.grad_buffer().data(), t.rows, t.cols); }

Tensor empty_like_shape(std::size_t rows, std::size_t cols) { return Tensor::zeros(rows, cols); }

std::size_t broadcast_dim(std::size_t a, std::size_t b, const char* op) {
  if (a == b) return a;
  if (a == 1) return b;
  if (b == 1) return a;
  throw ShapeError(std::string(op) + ": incompatible shapes for broadcasting");
}

inline std::size_t bidx(const TensorData& t, std::size_t i, std::size_t j) {
  return (t.rows == 1 ? 0 : i) * t.cols + (t.cols == 1 ? 0 : j);
}

// Elementwise binary op with broadcasting. `da`/`db` return the partial
// derivatives with respect to each operand at (x, y).
template <class F, class DA, class DB>
Tensor binary(const char* op, const Tensor& a, const Tensor& b, F f, DA da, DB db) {
  const TensorData& A = *a.impl();
  const TensorData& B = *b.impl();
  const std::size_t rows = broadcast_dim(A.rows, B.rows, op);
  const std::size_t cols = broadcast_dim(A.cols, B.cols, op);
  Tensor out = empty_like_shape(rows, cols);
  auto& o = out.impl()->values;
  const bool same = A.rows == B.rows && A.cols == B.cols;
  if (same) {
    for (std::size_t k = 0; k < o.size(); ++k) o[k] = f(A.values[k], B.values[k]);
  } else {
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j) o[i * cols + j] = f(A.values[bidx(A, i, j)], B.values[bidx(B, i, j)]);
  }
  return detail::record(op, out, {a, b}, [da, db, rows, cols](Node& n) {
    TensorData& A = *n.inputs[0];
    TensorData& B = *n.inputs[1];
    const auto& g = n.output->grad;
    if (A.requires_grad) {
      auto& ga = A.grad_buffer();
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) {
          const double x = A.values[bidx(A, i, j)];
          const double y = B.values[bidx(B, i, j)];
          ga[bidx(A, i, j)] += g[i * cols + j] * da(x, y);
        }
    }
    if (B.requires_grad) {
      auto& gb = B.grad_buffer();
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) {
          const double x = A.values[bidx(A, i, j)];
          const double y = B.values[bidx(B, i, j)];
          gb[bidx(B, i, j)] += g[i * cols + j] * db(x, y);
        }
    }
  });
}

// Elementwise unary op; `d(x, y)` is the derivative given input x and output y.
template <class F, class D>
Tensor unary(const char* op, const Tensor& a, F f, D d) {
  const TensorData& A = *a.impl();
  Tensor out = empty_like_shape(A.rows, A.cols);
  auto& o = out.impl()->values;
  for (std::size_t k = 0; k < o.size(); ++k) o[k] = f(A.values[k]);
  return detail::record(op, out, {a}, [d](Node& n) {
    TensorData& A = *n.inputs[0];
    const auto& y = n.output->values;
    const auto& g = n.output->grad;
    auto& ga = A.grad_buffer();
    for (std::size_t k = 0; k < ga.size(); ++k) ga[k] += g[k] * d(A.values[k], y[k]);
  });
}

double clamp_hyp(double x) { return std::clamp(x, -kHypArgMax, kHypArgMax); }

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      "add", a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      "sub", a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      "mul", a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary(
      "div", a, b, [](double x, double y) { return x / y; }, [](double, double y) { return 1.0 / y; },
      [](double x, double y) { return -x / (y * y); });
}

Tensor scale(const Tensor& a, double c) {
  return unary(
      "scale", a, [c](double x) { return c * x; }, [c](double, double) { return c; });
}

Tensor add_scalar(const Tensor& a, double c) {
  return unary(
      "add_scalar", a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor abs(const Tensor& a) {
  return unary(
      "abs", a, [](double x) { return std::abs(x); },
      [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Tensor pow(const Tensor& a, double p) {
  return unary(
      "pow", a, [p](double x) { return std::pow(x, p); },
      [p](double x, double) {
        if (x != 0.0) return p * std::pow(x, p - 1.0);
        if (p == 1.0) return 1.0;
        if (p > 1.0) return 0.0;
        return p * std::pow(kGuardEps, p - 1.0);
      });
}

Tensor sqrt(const Tensor& a) {
  return unary(
      "sqrt", a, [](double x) { return std::sqrt(std::max(x, 0.0)); },
      [](double x, double) { return 0.5 / std::sqrt(std::max(x, kGuardEps)); });
}

Tensor exp(const Tensor& a) {
  return unary(
      "exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  static constexpr double tiny = std::numeric_limits<double>::min();
  return unary(
      "log", a, [](double x) { return std::log(std::max(x, tiny)); },
      [](double x, double) { return 1.0 / std::max(x, tiny); });
}

Tensor relu(const Tensor& a) {
  return unary(
      "relu", a, [](double x) { return x > 0.0 || std::isnan(x) ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      "sigmoid", a,
      [](double x) { return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor softplus(const Tensor& a) {
  return unary(
      "softplus", a, [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); },
      [](double x, double) {
        return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
      });
}

Tensor cosh(const Tensor& a) {
  return unary(
      "cosh", a, [](double x) { return std::cosh(clamp_hyp(x)); },
      [](double x, double) { return std::abs(x) <= kHypArgMax ? std::sinh(x) : 0.0; });
}

Tensor sinh(const Tensor& a) {
  return unary(
      "sinh", a, [](double x) { return std::sinh(clamp_hyp(x)); },
      [](double x, double) { return std::abs(x) <= kHypArgMax ? std::cosh(x) : 0.0; });
}

Tensor sinhc(const Tensor& a) {
  return unary(
      "sinhc", a,
      [](double x) {
        x = clamp_hyp(x);
        if (std::abs(x) < 1e-4) {
          const double x2 = x * x;
          return 1.0 + x2 / 6.0 + x2 * x2 / 120.0;
        }
        return std::sinh(x) / x;
      },
      [](double x, double) {
        if (std::abs(x) > kHypArgMax) return 0.0;
        if (std::abs(x) < 1e-4) return x / 3.0 + x * x * x / 30.0;
        return (x * std::cosh(x) - std::sinh(x)) / (x * x);
      });
}

Tensor acosh(const Tensor& a) {
  return unary(
      "acosh", a, [](double x) { return std::acosh(std::max(x, 1.0)); },
      [](double x, double) { return x > 1.0 + kGuardEps ? 1.0 / std::sqrt(x * x - 1.0) : 0.0; });
}

Tensor clamp_min(const Tensor& a, double lo) {
  return unary(
      "clamp_min", a, [lo](double x) { return std::max(x, lo); }, [lo](double x, double) { return x > lo ? 1.0 : 0.0; });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  const TensorData& A = *a.impl();
  const TensorData& B = *b.impl();
  if (A.cols != B.rows) {
    throw ShapeError("matmul: inner dimensions differ (" + std::to_string(A.cols) + " vs " +
                     std::to_string(B.rows) + ")");
  }
  Tensor out = Tensor::zeros(A.rows, B.cols);
  MutMap(out.impl()->values.data(), A.rows, B.cols).noalias() = view(A) * view(B);
  return detail::record("matmul", out, {a, b}, [](Node& n) {
    TensorData& A = *n.inputs[0];
    TensorData& B = *n.inputs[1];
    auto g = grad_view(*n.output);
    if (A.requires_grad) grad_acc(A).noalias() += g * view(B).transpose();
    if (B.requires_grad) grad_acc(B).noalias() += view(A).transpose() * g;
  });
}

Tensor transpose(const Tensor& a) {
  const TensorData& A = *a.impl();
  Tensor out = Tensor::zeros(A.cols, A.rows);
  MutMap(out.impl()->values.data(), A.cols, A.rows) = view(A).transpose();
  return detail::record("transpose", out, {a}, [](Node& n) {
    TensorData& A = *n.inputs[0];
    grad_acc(A) += grad_view(*n.output).transpose();
  });
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  return detail::record("sum", Tensor::scalar(s), {a}, [](Node& n) {
    const double g = n.output->grad[0];
    for (double& v : n.inputs[0]->grad_buffer()) v += g;
  });
}

Tensor sum_rows(const Tensor& a) {
  const TensorData& A = *a.impl();
  Tensor out = Tensor::zeros(A.rows, 1);
  auto& o = out.impl()->values;
  for (std::size_t i = 0; i < A.rows; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < A.cols; ++j) s += A.values[i * A.cols + j];
    o[i] = s;
  }
  return detail::record("sum_rows", out, {a}, [](Node& n) {
    TensorData& A = *n.inputs[0];
    auto& ga = A.grad_buffer();
    const auto& g = n.output->grad;
    for (std::size_t i = 0; i < A.rows; ++i)
      for (std::size_t j = 0; j < A.cols; ++j) ga[i * A.cols + j] += g[i];
  });
}

Tensor sum_cols(const Tensor& a) {
  const TensorData& A = *a.impl();
  Tensor out = Tensor::zeros(1, A.cols);
  auto& o = out.impl()->values;
  for (std::size_t i = 0; i < A.rows; ++i)
    for (std::size_t j = 0; j < A.cols; ++j) o[j] += A.values[i * A.cols + j];
  return detail::record("sum_cols", out, {a}, [](Node& n) {
    TensorData& A = *n.inputs[0];
    auto& ga = A.grad_buffer();
    const auto& g = n.output->grad;
    for (std::size_t i = 0; i < A.rows; ++i)
      for (std::size_t j = 0; j < A.cols; ++j) ga[i * A.cols + j] += g[j];
  });
}

Tensor mean(const Tensor& a) {
  if (a.size() == 0) throw ShapeError("mean of an empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

Tensor rowwise_norm(const Tensor& a) {
  const TensorData& A = *a.impl();
  Tensor out = Tensor::zeros(A.rows, 1);
  auto& o = out.impl()->values;
  for (std::size_t i = 0; i < A.rows; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < A.cols; ++j) s += A.values[i * A.cols + j] * A.values[i * A.cols + j];
    o[i] = std::sqrt(s);
  }
  return detail::record("rowwise_norm", out, {a}, [](Node& n) {
    TensorData& A = *n.inputs[0];
    auto& ga = A.grad_buffer();
    const auto& g = n.output->grad;
    const auto& norm = n.output->values;
    for (std::size_t i = 0; i < A.rows; ++i) {
      const double s = g[i] / std::max(norm[i], kGuardEps);
      for (std::size_t j = 0; j < A.cols; ++j) ga[i * A.cols + j] += s * A.values[i * A.cols + j];
    }
  });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t rows = parts.front().rows();
  std::size_t cols = 0;
  for (const Tensor& p : parts) {
    if (p.rows() != rows) throw ShapeError("concat_cols: row counts differ");
    cols += p.cols();
  }
  Tensor out = Tensor::zeros(rows, cols);
  auto& o = out.impl()->values;
  std::size_t offset = 0;
  for (const Tensor& p : parts) {
    const std::size_t pc = p.cols();
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < pc; ++j) o[i * cols + offset + j] = p(i, j);
    offset += pc;
  }
  return detail::record("concat_cols", out, parts, [rows, cols](Node& n) {
    const auto& g = n.output->grad;
    std::size_t offset = 0;
    for (auto& in : n.inputs) {
      const std::size_t pc = in->cols;
      if (in->requires_grad) {
        auto& gi = in->grad_buffer();
        for (std::size_t i = 0; i < rows; ++i)
          for (std::size_t j = 0; j < pc; ++j) gi[i * pc + j] += g[i * cols + offset + j];
      }
      offset += pc;
    }
  });
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end) {
  const TensorData& A = *a.impl();
  if (begin > end || end > A.cols) throw ShapeError("slice_cols: range out of bounds");
  const std::size_t w = end - begin;
  Tensor out = Tensor::zeros(A.rows, w);
  auto& o = out.impl()->values;
  for (std::size_t i = 0; i < A.rows; ++i)
    for (std::size_t j = 0; j < w; ++j) o[i * w + j] = A.values[i * A.cols + begin + j];
  return detail::record("slice_cols", out, {a}, [begin, w](Node& n) {
    TensorData& A = *n.inputs[0];
    auto& ga = A.grad_buffer();
    const auto& g = n.output->grad;
    for (std::size_t i = 0; i < A.rows; ++i)
      for (std::size_t j = 0; j < w; ++j) ga[i * A.cols + begin + j] += g[i * w + j];
  });
}

Tensor gather_rows(const Tensor& a, std::span<const std::size_t> rows) {
  const TensorData& A = *a.impl();
  Tensor out = Tensor::zeros(rows.size(), A.cols);
  auto& o = out.impl()->values;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= A.rows) throw ShapeError("gather_rows: index out of range");
    for (std::size_t j = 0; j < A.cols; ++j) o[r * A.cols + j] = A.values[rows[r] * A.cols + j];
  }
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return detail::record("gather_rows", out, {a}, [idx = std::move(idx)](Node& n) {
    TensorData& A = *n.inputs[0];
    auto& ga = A.grad_buffer();
    const auto& g = n.output->grad;
    for (std::size_t r = 0; r < idx.size(); ++r)
      for (std::size_t j = 0; j < A.cols; ++j) ga[idx[r] * A.cols + j] += g[r * A.cols + j];
  });
}

Tensor broadcast_to(const Tensor& a, std::size_t rows, std::size_t cols) {
  const TensorData& A = *a.impl();
  if ((A.rows != rows && A.rows != 1) || (A.cols != cols && A.cols != 1)) {
    throw ShapeError("broadcast_to: incompatible target shape");
  }
  Tensor out = Tensor::zeros(rows, cols);
  auto& o = out.impl()->values;
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) o[i * cols + j] = A.values[bidx(A, i, j)];
  return detail::record("broadcast_to", out, {a}, [rows, cols](Node& n) {
    TensorData& A = *n.inputs[0];
    auto& ga = A.grad_buffer();
    const auto& g = n.output->grad;
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j) ga[bidx(A, i, j)] += g[i * cols + j];
  });
}

Tensor softmax_rows(const Tensor& a) {
  const TensorData& A = *a.impl();
  Tensor out = Tensor::zeros(A.rows, A.cols);
  auto& o = out.impl()->values;
  for (std::size_t i = 0; i < A.rows; ++i) {
    const double* row = A.values.data() + i * A.cols;
    const double m = *std::max_element(row, row + A.cols);
    double z = 0.0;
    for (std::size_t j = 0; j < A.cols; ++j) z += (o[i * A.cols + j] = std::exp(row[j] - m));
    for (std::size_t j = 0; j < A.cols; ++j) o[i * A.cols + j] /= z;
  }
  return detail::record("softmax_rows", out, {a}, [](Node& n) {
    TensorData& A = *n.inputs[0];
    auto& ga = A.grad_buffer();
    const auto& g = n.output->grad;
    const auto& y = n.output->values;
    for (std::size_t i = 0; i < A.rows; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < A.cols; ++j) dot += g[i * A.cols + j] * y[i * A.cols + j];
      for (std::size_t j = 0; j < A.cols; ++j) ga[i * A.cols + j] += y[i * A.cols + j] * (g[i * A.cols + j] - dot);
    }
  });
}

Tensor cross_entropy(const Tensor& logits, std::span<const std::int64_t> labels,
                     std::span<const std::size_t> rows) {
  const TensorData& L = *logits.impl();
  if (rows.empty()) throw ShapeError("cross_entropy: empty row mask");
  if (labels.size() != L.rows) throw ShapeError("cross_entropy: one label per row required");
  const std::size_t c = L.cols;
  std::vector<double> probs(rows.size() * c);
  double total = 0.0;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const std::size_t i = rows[r];
    if (i >= L.rows) throw ShapeError("cross_entropy: row index out of range");
    const std::int64_t y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= c) throw ShapeError("cross_entropy: label out of range");
    const double* row = L.values.data() + i * c;
    const double m = *std::max_element(row, row + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += (probs[r * c + j] = std::exp(row[j] - m));
    for (std::size_t j = 0; j < c; ++j) probs[r * c + j] /= z;
    total += (m + std::log(z)) - row[y];
  }
  const double inv = 1.0 / static_cast<double>(rows.size());
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  std::vector<std::int64_t> lab(labels.begin(), labels.end());
  return detail::record("cross_entropy", Tensor::scalar(total * inv), {logits},
                        [probs = std::move(probs), idx = std::move(idx), lab = std::move(lab), c, inv](Node& n) {
                          auto& gl = n.inputs[0]->grad_buffer();
                          const double g = n.output->grad[0] * inv;
                          for (std::size_t r = 0; r < idx.size(); ++r) {
                            const std::size_t i = idx[r];
                            for (std::size_t j = 0; j < c; ++j) gl[i * c + j] += g * probs[r * c + j];
                            gl[i * c + static_cast<std::size_t>(lab[i])] -= g;
                          }
                        });
}

Tensor spmm(std::shared_ptr<const SparseMatrix> a, const Tensor& x) {
  const TensorData& X = *x.impl();
  if (a->cols != X.rows) throw ShapeError("spmm: inner dimensions differ");
  const std::size_t c = X.cols;
  Tensor out = Tensor::zeros(a->rows, c);
  auto& o = out.impl()->values;
  for (std::size_t i = 0; i < a->rows; ++i)
    for (std::size_t k = a->row_ptr[i]; k < a->row_ptr[i + 1]; ++k) {
      const double w = a->weights[k];
      const double* src = X.values.data() + a->col_idx[k] * c;
      double* dst = o.data() + i * c;
      for (std::size_t j = 0; j < c; ++j) dst[j] += w * src[j];
    }
  return detail::record("spmm", out, {x}, [a, c](Node& n) {
    auto& gx = n.inputs[0]->grad_buffer();
    const auto& g = n.output->grad;
    for (std::size_t i = 0; i < a->rows; ++i)
      for (std::size_t k = a->row_ptr[i]; k < a->row_ptr[i + 1]; ++k) {
        const double w = a->weights[k];
        double* dst = gx.data() + a->col_idx[k] * c;
        const double* src = g.data() + i * c;
        for (std::size_t j = 0; j < c; ++j) dst[j] += w * src[j];
      }
  });
}

}  // namespace hyp
