#pragma once

// Differentiable primitives over hyp::Tensor.
//
// Binary elementwise ops broadcast a 1x1 scalar, a 1xC row or an Rx1 column
// against the other operand. Guards: sqrt/rownorm derivatives use a floor of
// kGuardEps on the vanishing quantity; acosh is evaluated at max(x, 1) and
// differentiated at max(x, 1 + kGuardEps); cosh/sinh clamp |x| <= kHypArgMax.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "hyp/tensor.hpp"

namespace hyp {

inline constexpr double kGuardEps = 1e-12;
inline constexpr double kHypArgMax = 80.0;

// Elementwise with broadcasting.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);
Tensor neg(const Tensor& a);
Tensor abs(const Tensor& a);

Tensor pow(const Tensor& a, double p);
Tensor sqrt(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor relu(const Tensor& a);  // relu'(0) = 0
Tensor sigmoid(const Tensor& a);
Tensor softplus(const Tensor& a);
Tensor cosh(const Tensor& a);
Tensor sinh(const Tensor& a);
Tensor sinhc(const Tensor& a);  // sinh(x)/x, 1 at x = 0
Tensor acosh(const Tensor& a);
Tensor clamp_min(const Tensor& a, double lo);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor sum(const Tensor& a);       // 1x1
Tensor sum_rows(const Tensor& a);  // Rx1, each row summed
Tensor sum_cols(const Tensor& a);  // 1xC, each column summed
Tensor mean(const Tensor& a);      // 1x1
Tensor rowwise_norm(const Tensor& a);

Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end);
Tensor gather_rows(const Tensor& a, std::span<const std::size_t> rows);
Tensor broadcast_to(const Tensor& a, std::size_t rows, std::size_t cols);

Tensor softmax_rows(const Tensor& a);

// Mean negative log-likelihood of labels[r] under softmax(logits[r]) over
// the listed rows.
Tensor cross_entropy(const Tensor& logits, std::span<const std::int64_t> labels,
                     std::span<const std::size_t> rows);

// Constant sparse matrix in CSR form.
struct SparseMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::size_t> row_ptr;
  std::vector<std::size_t> col_idx;
  std::vector<double> weights;
};

// Sparse (constant) times dense.
Tensor spmm(std::shared_ptr<const SparseMatrix> a, const Tensor& x);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator-(const Tensor& a) { return neg(a); }
inline Tensor operator*(const Tensor& a, double c) { return scale(a, c); }
inline Tensor operator*(double c, const Tensor& a) { return scale(a, c); }
inline Tensor operator+(const Tensor& a, double c) { return add_scalar(a, c); }
inline Tensor operator-(const Tensor& a, double c) { return add_scalar(a, -c); }

}  // namespace hyp
