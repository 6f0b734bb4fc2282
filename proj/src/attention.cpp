#include "hyp/attention.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <memory>

#include "hyp/errors.hpp"

namespace hyp {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

ConstMap view(const TensorData& t) { return ConstMap(t.values.data(), t.rows, t.cols); }

// Minkowski products q_i . J k_j into `out` (N x M), J = diag(-1, 1, ..., 1).
void minkowski_products(const TensorData& q, const TensorData& k, double* out) {
  MutMap ip(out, q.rows, k.rows);
  ip.noalias() = view(q).rightCols(q.cols - 1) * view(k).rightCols(k.cols - 1).transpose();
  ip.noalias() -= view(q).leftCols(1) * view(k).leftCols(1).transpose();
}

// acosh(c) / sqrt(c^2 - 1), continuous at c = 1 where it equals 1.
double acosh_ratio(double c) {
  const double e = c - 1.0;
  if (e < 1e-6) return 1.0 - e / 3.0 + 2.0 * e * e / 15.0;
  return std::acosh(c) / std::sqrt(c * c - 1.0);
}

// Turns Minkowski products into row-stochastic weights in place.
void products_to_weights(double* buf, std::size_t n, std::size_t m, double kappa, double temp) {
  for (std::size_t i = 0; i < n; ++i) {
    double* row = buf + i * m;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < m; ++j) {
      const double a = std::acosh(std::max(kappa * row[j], 1.0));
      row[j] = temp * a * a / kappa;  // -d^2 / sqrt(d'), since d^2 = a^2 / |k|
      mx = std::max(mx, row[j]);
    }
    double z = 0.0;
    for (std::size_t j = 0; j < m; ++j) z += (row[j] = std::exp(row[j] - mx));
    const double inv = 1.0 / z;
    for (std::size_t j = 0; j < m; ++j) row[j] *= inv;
  }
}

void require_rows(const LorentzBatch& x, const char* where) {
  if (x.size() == 0) throw ShapeError(std::string(where) + ": empty input");
}

}  // namespace

double FocusParams::scale() const { return std::exp(log_scale.item()); }

FocusParams make_focus(double power) {
  if (!(power > 0.0)) throw std::invalid_argument("focus power must be > 0");
  FocusParams f;
  f.power = power;
  f.log_scale = Tensor::scalar(0.0);
  f.log_scale.set_requires_grad(true);
  return f;
}

Tensor focus_map(const Tensor& rows, const FocusParams& params) {
  Tensor e = div(relu(rows), exp(params.log_scale));
  if (params.power == 1.0) return e;
  Tensor ep = pow(e, params.power);
  Tensor ratio = div(rowwise_norm(e), clamp_min(rowwise_norm(ep), kGuardEps));
  return mul(ep, ratio);
}

AttentionParams make_attention(std::size_t in_dim, std::size_t dim, const Curvature& in, const Curvature& attn,
                               const Curvature& out, AttentionKind kind, double power, Rng& rng) {
  AttentionParams p;
  p.query = make_htc(in_dim, dim, in, attn, rng);
  p.key = make_htc(in_dim, dim, in, attn, rng);
  p.value = make_htc(in_dim, dim, in, attn, rng);
  const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
  std::uniform_real_distribution<double> u(-bound, bound);
  p.psi = Tensor::zeros(dim, dim);
  for (double& w : p.psi.mutable_values()) w = u(rng);
  p.psi.set_requires_grad(true);
  p.out = out;
  p.focus = make_focus(power);
  p.kind = kind;
  return p;
}

Tensor linear_aggregate(const Tensor& query_features, const Tensor& key_features, const Tensor& values,
                        double den_eps) {
  if (query_features.cols() != key_features.cols() || key_features.rows() != values.rows()) {
    throw ShapeError("linear_aggregate: shape mismatch");
  }
  Tensor kt = transpose(key_features);
  Tensor kv = matmul(kt, values);                        // d' x d_v
  Tensor ksum = sum_rows(kt);                            // d' x 1
  Tensor num = matmul(query_features, kv);               // N x d_v
  Tensor den = add_scalar(matmul(query_features, ksum), den_eps);  // N x 1
  return div(num, den);
}

LorentzBatch linear_attention(const LorentzBatch& x, const AttentionParams& params) {
  require_rows(x, "linear_attention");
  LorentzBatch q = htc_forward(x, params.query);
  LorentzBatch k = htc_forward(x, params.key);
  LorentzBatch v = htc_forward(x, params.value);
  Tensor vs = v.space();
  Tensor z = linear_aggregate(focus_map(q.space(), params.focus), focus_map(k.space(), params.focus), vs,
                              params.focus.den_eps);
  Tensor z_res = add(z, matmul(vs, params.psi));
  return calibrate_time(z_res, v.curvature, params.out);
}

Tensor softmax_attention_weights(const LorentzBatch& q, const LorentzBatch& k) {
  require_same_curvature(q.curvature, k.curvature, "softmax_attention_weights");
  const std::size_t n = q.size();
  const std::size_t m = k.size();
  Tensor w = Tensor::zeros(n, m);
  minkowski_products(*q.data.impl(), *k.data.impl(), w.mutable_values().data());
  products_to_weights(w.mutable_values().data(), n, m, q.curvature.value(),
                      1.0 / std::sqrt(static_cast<double>(q.dim())));
  return w;
}

Tensor softmax_aggregate(const LorentzBatch& q, const LorentzBatch& k, const LorentzBatch& v) {
  require_same_curvature(q.curvature, k.curvature, "softmax_aggregate");
  require_same_curvature(q.curvature, v.curvature, "softmax_aggregate");
  if (q.data.cols() != k.data.cols() || k.size() != v.size()) throw ShapeError("softmax_aggregate: shape mismatch");
  const std::size_t n = q.size();
  const std::size_t m = k.size();
  const double temp = 1.0 / std::sqrt(static_cast<double>(q.dim()));
  Tensor kappa = q.curvature.tensor();
  const double kv = kappa.item();

  auto alpha = std::make_shared<Buffer>(n * m);
  minkowski_products(*q.data.impl(), *k.data.impl(), alpha->data());
  products_to_weights(alpha->data(), n, m, kv, temp);

  Tensor out = Tensor::zeros(n, v.data.cols());
  MutMap(out.mutable_values().data(), n, v.data.cols()).noalias() =
      ConstMap(alpha->data(), n, m) * view(*v.data.impl());

  return detail::record(
      "softmax_aggregate", out, {q.data, k.data, v.data, kappa}, [alpha, n, m, kv, temp](Tape::Node& node) {
        TensorData& Q = *node.inputs[0];
        TensorData& K = *node.inputs[1];
        TensorData& V = *node.inputs[2];
        TensorData& Kap = *node.inputs[3];
        ConstMap g(node.output->grad.data(), n, V.cols);
        ConstMap a(alpha->data(), n, m);
        if (V.requires_grad) MutMap(V.grad_buffer().data(), m, V.cols).noalias() += a.transpose() * g;
        if (!Q.requires_grad && !K.requires_grad && !Kap.requires_grad) return;

        // d loss / d logits, in place.
        Buffer work(n * m);
        MutMap w(work.data(), n, m);
        w.noalias() = g * view(V).transpose();
        for (std::size_t i = 0; i < n; ++i) {
          double dot = 0.0;
          for (std::size_t j = 0; j < m; ++j) dot += w(i, j) * a(i, j);
          for (std::size_t j = 0; j < m; ++j) w(i, j) = a(i, j) * (w(i, j) - dot);
        }

        // logit = temp * acosh(c)^2 / k with c = k <q_i, k_j>_L.
        Buffer products(n * m);
        minkowski_products(Q, K, products.data());
        double dkappa = 0.0;
        for (std::size_t idx = 0; idx < n * m; ++idx) {
          const double ip = products[idx];
          const double c = kv * ip;
          const double r = acosh_ratio(std::max(c, 1.0));
          const double acosh_c = std::acosh(std::max(c, 1.0));
          const double gl = work[idx];
          dkappa += gl * temp * (2.0 * r * ip / kv - acosh_c * acosh_c / (kv * kv));
          work[idx] = gl * 2.0 * temp * r;  // d loss / d <q_i, k_j>_L
        }
        Buffer().swap(products);

        if (Q.requires_grad) {
          MutMap gq(Q.grad_buffer().data(), n, Q.cols);
          RowMat dq = w * view(K);
          dq.col(0) *= -1.0;
          gq += dq;
        }
        if (K.requires_grad) {
          MutMap gk(K.grad_buffer().data(), m, K.cols);
          RowMat dk = w.transpose() * view(Q);
          dk.col(0) *= -1.0;
          gk += dk;
        }
        if (Kap.requires_grad) Kap.grad_buffer()[0] += dkappa;
      });
}

LorentzBatch softmax_attention(const LorentzBatch& x, const AttentionParams& params) {
  require_rows(x, "softmax_attention");
  LorentzBatch q = htc_forward(x, params.query);
  LorentzBatch k = htc_forward(x, params.key);
  LorentzBatch v = htc_forward(x, params.value);
  return lorentz_normalize(softmax_aggregate(q, k, v), v.curvature);
}

LorentzBatch attention_forward(const LorentzBatch& x, const AttentionParams& params) {
  return params.kind == AttentionKind::linear ? linear_attention(x, params) : softmax_attention(x, params);
}

MultiHeadAttention make_multi_head(std::size_t heads, std::size_t in_dim, std::size_t dim, const Curvature& in,
                                   const Curvature& attn, const Curvature& out, AttentionKind kind, double power,
                                   Rng& rng) {
  if (heads < 1) throw std::invalid_argument("at least one attention head is required");
  MultiHeadAttention mh;
  for (std::size_t h = 0; h < heads; ++h) mh.heads.push_back(make_attention(in_dim, dim, in, attn, out, kind, power, rng));
  if (heads > 1) {
    const Curvature& k = mh.heads.front().output_curvature();
    mh.combine = make_htc(heads * dim, dim, k, k, rng);
  }
  return mh;
}

LorentzBatch multi_head(const LorentzBatch& x, const MultiHeadAttention& attention) {
  if (attention.heads.empty()) throw std::invalid_argument("multi_head: no heads");
  LorentzBatch y = attention_forward(x, attention.heads.front());
  if (attention.heads.size() == 1) return y;
  for (std::size_t h = 1; h < attention.heads.size(); ++h) y = hyp_concat(y, attention_forward(x, attention.heads[h]));
  return htc_forward(y, *attention.combine);
}

}  // namespace hyp
