#include <cmath>
#include <random>

#include "doctest.h"
#include "hyp/attention.hpp"
#include "hyp/gradcheck.hpp"
#include "support.hpp"

using namespace hyp;
using hyp::test::check_row;
using hyp::test::gaussian;
using hyp::test::max_abs_diff;
using hyp::test::random_points;

namespace {

const Curvature k1 = Curvature::from_value(-1.0);

// Rowwise (A B^T) V / ((A B^T) 1) with the N x N matrix materialized.
Tensor explicit_linear(const Tensor& a, const Tensor& b, const Tensor& v) {
  const std::size_t n = a.rows();
  const std::size_t m = b.rows();
  Tensor out = Tensor::zeros(n, v.cols());
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> s(m, 0.0);
    double total = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      for (std::size_t c = 0; c < a.cols(); ++c) s[j] += a(i, c) * b(j, c);
      total += s[j];
    }
    for (std::size_t j = 0; j < m; ++j)
      for (std::size_t c = 0; c < v.cols(); ++c) out(i, c) += s[j] / total * v(j, c);
  }
  return out;
}

// Softmax of -d^2/sqrt(d') per row, from distances computed pairwise.
std::vector<std::vector<double>> explicit_softmax_weights(const LorentzBatch& q, const LorentzBatch& k) {
  std::vector<std::vector<double>> w(q.size(), std::vector<double>(k.size()));
  for (std::size_t i = 0; i < q.size(); ++i) {
    double total = 0.0;
    for (std::size_t j = 0; j < k.size(); ++j) {
      LorentzBatch qi{gather_rows(q.data, std::vector<std::size_t>{i}), q.curvature};
      LorentzBatch kj{gather_rows(k.data, std::vector<std::size_t>{j}), k.curvature};
      const double d = distance(qi, kj).item();
      w[i][j] = std::exp(-d * d / std::sqrt(static_cast<double>(q.dim())));
      total += w[i][j];
    }
    for (double& x : w[i]) x /= total;
  }
  return w;
}

}  // namespace

TEST_SUITE("attention") {

TEST_CASE("focus map examples") {
  FocusParams f = make_focus(2.0);
  CHECK(f.scale() == 1.0);
  Tensor neg = focus_map(Tensor::from(1, 3, {-1.0, 0.0, -5.0}), f);
  for (double v : neg.values()) CHECK(v == 0.0);

  FocusParams one = make_focus(1.0);
  Tensor e = Tensor::from(1, 3, {0.5, 2.0, 0.0});
  CHECK(max_abs_diff(focus_map(e, one), e) == 0.0);

  Tensor phi = focus_map(Tensor::from(1, 2, {3.0, 4.0}), f);
  const double s = 5.0 / std::sqrt(337.0);
  check_row(phi, 0, {9.0 * s, 16.0 * s}, 1e-14);
  CHECK(phi(0, 0) == doctest::Approx(2.4513).epsilon(1e-4));
  CHECK(phi(0, 1) == doctest::Approx(4.3579).epsilon(1e-4));
}

TEST_CASE("focus map preserves row norms of relu(e)/t") {
  std::mt19937_64 rng(1);
  for (double p : {0.5, 1.0, 2.0, 3.0}) {
    FocusParams f = make_focus(p);
    f.log_scale.mutable_values()[0] = 0.4;
    Tensor e = gaussian(50, 8, rng);
    Tensor phi = focus_map(e, f);
    for (std::size_t r = 0; r < 50; ++r) {
      double n_in = 0.0, n_out = 0.0;
      for (std::size_t c = 0; c < 8; ++c) {
        const double ei = std::max(e(r, c), 0.0) / f.scale();
        n_in += ei * ei;
        n_out += phi(r, c) * phi(r, c);
        CHECK(phi(r, c) >= 0.0);
      }
      if (n_in > 0.0) CHECK(std::abs(std::sqrt(n_out) / std::sqrt(n_in) - 1.0) < 1e-10);
    }
  }
}

TEST_CASE("reordered linear aggregation equals the explicit quadratic form") {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed);
    FocusParams f = make_focus(2.0);
    Tensor a = focus_map(gaussian(16, 8, rng), f);
    Tensor b = focus_map(gaussian(16, 8, rng), f);
    Tensor v = gaussian(16, 8, rng);
    worst = std::max(worst, max_abs_diff(linear_aggregate(a, b, v, 0.0), explicit_linear(a, b, v)));
  }
  CHECK(worst < 1e-10);
}

TEST_CASE("linear attention on a single token returns V_s plus psi(V_s)") {
  std::mt19937_64 rng(2);
  const Curvature k2 = Curvature::from_value(-2.0);
  AttentionParams p = make_attention(3, 4, k1, k2, k2, AttentionKind::linear, 2.0, rng);
  p.focus.den_eps = 0.0;
  // Biases keep phi(Q) and phi(K) away from zero.
  for (double& b : p.query.bias.mutable_values()) b = 1.0;
  for (double& b : p.key.bias.mutable_values()) b = 1.0;
  LorentzBatch x = random_points(1, 3, k1, rng);
  Tensor vs = htc_forward(x, p.value).space();
  LorentzBatch y = linear_attention(x, p);
  CHECK(max_abs_diff(y.space(), add(vs, matmul(vs, p.psi))) < 1e-12);
}

TEST_CASE("linear attention output is on the manifold at k3") {
  std::mt19937_64 rng(3);
  for (double k3 : {-1.0, -2.0, -3.0}) {
    const Curvature c3 = Curvature::from_value(k3);
    AttentionParams p = make_attention(5, 6, k1, Curvature::from_value(-1.5), c3, AttentionKind::linear, 2.0, rng);
    LorentzBatch y = linear_attention(random_points(40, 5, k1, rng), p);
    CHECK(y.curvature.same_parameter(c3));
    CHECK(constraint_residual(y) < 1e-8);
  }
}

TEST_CASE("linear attention gradient") {
  std::mt19937_64 rng(4);
  Curvature ka = Curvature::from_value(-1.0, true);
  Curvature kb = Curvature::from_value(-2.0, true);
  AttentionParams p = make_attention(4, 4, ka, kb, ka, AttentionKind::linear, 2.0, rng);
  Tensor v = gaussian(8, 4, rng, 0.6);
  const double err = grad_check([&] { return sum(linear_attention(project_to_manifold(v, ka), p).data); },
                                {v, p.query.weight, p.key.weight, p.value.weight, p.psi, p.focus.log_scale,
                                 ka.raw(), kb.raw()});
  CHECK(err < 1e-4);
}

TEST_CASE("softmax attention on a single token returns V") {
  std::mt19937_64 rng(5);
  AttentionParams p = make_attention(3, 3, k1, k1, k1, AttentionKind::softmax, 2.0, rng);
  LorentzBatch x = random_points(1, 3, k1, rng);
  CHECK(max_abs_diff(softmax_attention(x, p).data, htc_forward(x, p.value).data) < 1e-12);
}

TEST_CASE("softmax weights are uniform for identical queries and keys") {
  std::mt19937_64 rng(6);
  LorentzBatch q = random_points(1, 4, k1, rng);
  LorentzBatch k = random_points(1, 4, k1, rng);
  LorentzBatch qs{broadcast_to(q.data, 5, 5), k1};
  LorentzBatch ks{broadcast_to(k.data, 7, 5), k1};
  Tensor w = softmax_attention_weights(qs, ks);
  for (double v : w.values()) CHECK(v == doctest::Approx(1.0 / 7.0).epsilon(1e-14));
}

TEST_CASE("softmax weights are row-stochastic and match pairwise distances") {
  std::mt19937_64 rng(7);
  const Curvature k2 = Curvature::from_value(-2.0);
  LorentzBatch q = random_points(32, 6, k2, rng, 0.5);
  LorentzBatch k = random_points(32, 6, k2, rng, 0.5);
  Tensor w = softmax_attention_weights(q, k);
  const auto oracle = explicit_softmax_weights(q, k);
  for (std::size_t i = 0; i < 32; ++i) {
    double total = 0.0;
    for (std::size_t j = 0; j < 32; ++j) {
      total += w(i, j);
      CHECK(std::abs(w(i, j) - oracle[i][j]) < 1e-12);
    }
    CHECK(std::abs(total - 1.0) < 1e-10);
  }

  AttentionParams p = make_attention(6, 6, k2, k1, k1, AttentionKind::softmax, 2.0, rng);
  LorentzBatch y = softmax_attention(random_points(32, 6, k2, rng), p);
  CHECK(constraint_residual(y) < 1e-8);
  CHECK(y.curvature.same_parameter(p.output_curvature()));
}

TEST_CASE("softmax aggregation is the midpoint of V under the attention weights") {
  std::mt19937_64 rng(8);
  LorentzBatch q = random_points(6, 3, k1, rng);
  LorentzBatch k = random_points(6, 3, k1, rng);
  LorentzBatch v = random_points(6, 3, k1, rng);
  Tensor w = softmax_attention_weights(q, k);
  LorentzBatch agg = lorentz_normalize(softmax_aggregate(q, k, v), k1);
  for (std::size_t i = 0; i < 6; ++i) {
    Tensor wi = gather_rows(w, std::vector<std::size_t>{i});
    LorentzBatch m = lorentz_midpoint(v, wi);
    CHECK(max_abs_diff(m.data, gather_rows(agg.data, std::vector<std::size_t>{i})) < 1e-12);
  }
}

TEST_CASE("softmax aggregation gradient") {
  std::mt19937_64 rng(9);
  Curvature k = Curvature::from_value(-1.5, true);
  Tensor a = gaussian(5, 3, rng, 0.7);
  Tensor b = gaussian(5, 3, rng, 0.7);
  Tensor c = gaussian(5, 3, rng, 0.7);
  Tensor w = gaussian(5, 4, rng);
  const double err = grad_check(
      [&] {
        return sum(mul(softmax_aggregate(project_to_manifold(a, k), project_to_manifold(b, k),
                                         project_to_manifold(c, k)),
                       w));
      },
      {a, b, c, k.raw()});
  CHECK(err < 1e-6);
}

TEST_CASE("multi-head attention") {
  std::mt19937_64 rng(10);
  std::mt19937_64 rng_copy = rng;
  MultiHeadAttention one = make_multi_head(1, 4, 4, k1, k1, k1, AttentionKind::linear, 2.0, rng);
  AttentionParams single = make_attention(4, 4, k1, k1, k1, AttentionKind::linear, 2.0, rng_copy);
  LorentzBatch x = random_points(9, 4, k1, rng);
  CHECK_FALSE(one.combine.has_value());
  CHECK(max_abs_diff(multi_head(x, one).data, linear_attention(x, single).data) == 0.0);

  Curvature ka = Curvature::from_value(-1.0, true);
  MultiHeadAttention two = make_multi_head(2, 4, 4, ka, ka, ka, AttentionKind::linear, 2.0, rng);
  LorentzBatch y = multi_head(project_to_manifold(x.space(), ka), two);
  CHECK(y.dim() == 4);
  CHECK(constraint_residual(y) < 1e-8);

  Tensor v = gaussian(8, 4, rng, 0.6);
  std::vector<Tensor> params{v, ka.raw(), two.combine->weight, two.combine->bias};
  for (const auto& h : two.heads) {
    params.push_back(h.query.weight);
    params.push_back(h.key.weight);
    params.push_back(h.value.weight);
    params.push_back(h.psi);
  }
  CHECK(grad_check([&] { return sum(multi_head(project_to_manifold(v, ka), two).data); }, params) < 1e-4);
  CHECK_THROWS(make_multi_head(0, 4, 4, k1, k1, k1, AttentionKind::linear, 2.0, rng));
}

TEST_CASE("attention rejects an empty batch") {
  std::mt19937_64 rng(11);
  AttentionParams p = make_attention(2, 2, k1, k1, k1, AttentionKind::linear, 2.0, rng);
  LorentzBatch empty{Tensor::zeros(0, 3), k1};
  CHECK_THROWS(linear_attention(empty, p));
  p.kind = AttentionKind::softmax;
  CHECK_THROWS(softmax_attention(empty, p));
}

}  // TEST_SUITE
