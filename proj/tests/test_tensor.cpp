#include <cmath>
#include <random>

#include "doctest.h"
#include "hyp/errors.hpp"
#include "hyp/gradcheck.hpp"
#include "hyp/ops.hpp"
#include "support.hpp"

using namespace hyp;
using hyp::test::gaussian;

TEST_SUITE("autodiff") {

TEST_CASE("tensor construction and shape checks") {
  Tensor t = Tensor::from(2, 3, {1, 2, 3, 4, 5, 6});
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  CHECK(t(1, 2) == 6.0);
  CHECK_THROWS_AS(Tensor::from(2, 2, {1, 2, 3}), ShapeError);
  CHECK_THROWS_AS(t.item(), ShapeError);
  CHECK(Tensor::scalar(4.0).item() == 4.0);
  CHECK_FALSE(t.has_grad());
  CHECK(t.grad() == std::vector<double>(6, 0.0));
}

TEST_CASE("broadcasting in elementwise ops") {
  Tensor m = Tensor::from(2, 2, {1, 2, 3, 4});
  Tensor row = Tensor::from(1, 2, {10, 20});
  Tensor col = Tensor::from(2, 1, {100, 200});
  Tensor a = add(m, row);
  CHECK(a(1, 1) == 24.0);
  Tensor b = mul(m, col);
  CHECK(b(1, 0) == 600.0);
  Tensor c = sub(Tensor::scalar(1.0), m);
  CHECK(c(0, 1) == -1.0);
  CHECK_THROWS_AS(add(m, Tensor::zeros(3, 2)), ShapeError);
  CHECK_THROWS_AS(matmul(m, Tensor::zeros(3, 2)), ShapeError);
}

TEST_CASE("backward of sum gives all ones") {
  Tensor x = Tensor::from(2, 3, {1, -2, 3, 0.5, 0, 7}).set_requires_grad();
  Tape tape;
  TapeScope scope(tape);
  backward(sum(x));
  CHECK(x.grad() == std::vector<double>(6, 1.0));
  CHECK(tape.empty());
}

TEST_CASE("backward of sum of squares gives 2x") {
  Tensor x = Tensor::from(1, 4, {1.5, -2, 0, 3}).set_requires_grad();
  Tape tape;
  TapeScope scope(tape);
  backward(sum(mul(x, x)));
  const auto g = x.grad();
  for (std::size_t i = 0; i < 4; ++i) CHECK(g[i] == doctest::Approx(2.0 * x.values()[i]));
}

TEST_CASE("constant loss leaves gradients at zero") {
  Tensor x = Tensor::from(1, 3, {1, 2, 3}).set_requires_grad();
  Tape tape;
  TapeScope scope(tape);
  Tensor c = add_scalar(scale(sum(x), 0.0), 5.0);
  backward(c);
  CHECK(x.grad() == std::vector<double>(3, 0.0));
}

TEST_CASE("relu subgradient at zero is zero") {
  Tensor x = Tensor::from(1, 3, {-1.0, 0.0, 2.0}).set_requires_grad();
  Tape tape;
  TapeScope scope(tape);
  backward(sum(relu(x)));
  CHECK(x.grad() == std::vector<double>{0.0, 0.0, 1.0});
}

TEST_CASE("gradients accumulate across fan-out") {
  Tensor x = Tensor::from(1, 2, {2.0, 3.0}).set_requires_grad();
  Tape tape;
  TapeScope scope(tape);
  Tensor y = add(mul(x, x), scale(x, 3.0));  // x used three times
  backward(sum(y));
  CHECK(x.grad() == std::vector<double>{7.0, 9.0});
}

TEST_CASE("backward requires a scalar loss and an active tape") {
  Tensor x = Tensor::from(1, 2, {1, 2}).set_requires_grad();
  CHECK_THROWS_AS(backward(sum(x)), std::logic_error);
  Tape tape;
  TapeScope scope(tape);
  CHECK_THROWS_AS(backward(mul(x, x)), ShapeError);
}

TEST_CASE("nothing is recorded without a tape or without requires_grad") {
  Tensor x = Tensor::from(1, 2, {1, 2});
  Tape tape;
  {
    TapeScope scope(tape);
    Tensor y = exp(x);
    CHECK(tape.size() == 0);
    CHECK_FALSE(y.requires_grad());
    x.set_requires_grad();
    Tensor z = exp(x);
    CHECK(tape.size() == 1);
    {
      NoGradScope off;
      Tensor w = exp(x);
      CHECK(tape.size() == 1);
    }
  }
  tape.clear();
}

TEST_CASE("matmul gradient matches central differences") {
  std::mt19937_64 rng(11);
  Tensor a = gaussian(4, 5, rng);
  Tensor b = gaussian(5, 3, rng);
  Tensor w = gaussian(4, 3, rng);
  GradCheckOptions opt;
  opt.step = 1e-5;
  const double err = grad_check([&] { return sum(mul(matmul(a, b), w)); }, {a, b}, opt);
  CHECK(err < 1e-6);
}

TEST_CASE("grad_check of identity-sum is exact up to rounding") {
  std::mt19937_64 rng(3);
  Tensor x = gaussian(3, 4, rng);
  CHECK(grad_check([](const Tensor& t) { return sum(t); }, x) < 1e-9);
}

TEST_CASE("grad_check reports an injected error") {
  std::mt19937_64 rng(5);
  Tensor x = gaussian(2, 2, rng);
  GradCheckOptions opt;
  opt.inject_error = 1e-2;
  CHECK(grad_check([&] { return sum(mul(x, x)); }, {x}, opt) > 1e-3);
}

TEST_CASE("primitive gradients match finite differences") {
  std::mt19937_64 rng(7);
  auto positive = [&](std::size_t r, std::size_t c) {
    Tensor t = gaussian(r, c, rng);
    for (double& v : t.mutable_values()) v = 0.5 + std::abs(v);
    return t;
  };
  Tensor a = positive(3, 4);
  Tensor b = positive(3, 4);
  Tensor row = positive(1, 4);
  Tensor col = positive(3, 1);
  Tensor w = gaussian(3, 4, rng);
  auto check = [&](const char* name, std::function<Tensor()> f, std::vector<Tensor> params) {
    INFO(name);
    CHECK(grad_check(f, params) < 1e-7);
  };
  check("div", [&] { return sum(mul(div(a, b), w)); }, {a, b});
  check("div broadcast", [&] { return sum(mul(div(a, row), w)); }, {a, row});
  check("sub broadcast", [&] { return sum(mul(sub(a, col), w)); }, {a, col});
  check("pow", [&] { return sum(mul(pow(a, 2.5), w)); }, {a});
  check("sqrt", [&] { return sum(mul(sqrt(a), w)); }, {a});
  check("exp log", [&] { return sum(mul(log(exp(a)), w)); }, {a});
  check("sigmoid softplus", [&] { return sum(mul(add(sigmoid(a), softplus(b)), w)); }, {a, b});
  check("cosh sinh sinhc", [&] { return sum(mul(add(cosh(a), mul(sinh(b), sinhc(a))), w)); }, {a, b});
  check("acosh", [&] { return sum(mul(acosh(add_scalar(a, 1.0)), w)); }, {a});
  check("mean", [&] { return mean(mul(a, w)); }, {a});
  check("rowwise_norm", [&] { return sum(mul(rowwise_norm(a), col)); }, {a});
  check("sum_rows sum_cols", [&] { return add(sum(mul(sum_rows(a), col)), sum(mul(sum_cols(a), row))); }, {a});
  check("concat slice", [&] { return sum(mul(slice_cols(concat_cols({a, b}), 2, 6), w)); }, {a, b});
  check("transpose", [&] { return sum(mul(transpose(transpose(a)), w)); }, {a});
  check("softmax_rows", [&] { return sum(mul(softmax_rows(a), w)); }, {a});
  check("broadcast_to", [&] { return sum(mul(broadcast_to(row, 3, 4), w)); }, {row});
  std::vector<std::size_t> idx{2, 0, 2};
  check("gather_rows", [&] { return sum(mul(gather_rows(a, idx), w)); }, {a});
}

TEST_CASE("cross entropy matches a direct evaluation") {
  std::mt19937_64 rng(13);
  Tensor logits = gaussian(5, 4, rng, 2.0);
  std::vector<std::int64_t> labels{0, 3, 1, 1, 2};
  std::vector<std::size_t> rows{0, 1, 2, 3, 4};
  double expected = 0.0;
  for (std::size_t r = 0; r < 5; ++r) {
    double z = 0.0;
    for (std::size_t c = 0; c < 4; ++c) z += std::exp(logits(r, c));
    expected += -std::log(std::exp(logits(r, static_cast<std::size_t>(labels[r]))) / z);
  }
  expected /= 5.0;
  CHECK(std::abs(cross_entropy(logits, labels, rows).item() - expected) < 1e-12);
  CHECK(grad_check([&] { return cross_entropy(logits, labels, rows); }, {logits}) < 1e-7);
}

TEST_CASE("sparse-dense product and its gradient") {
  auto a = std::make_shared<SparseMatrix>();
  a->rows = 2;
  a->cols = 3;
  a->row_ptr = {0, 2, 3};
  a->col_idx = {0, 2, 1};
  a->weights = {0.5, 2.0, -1.0};
  Tensor x = Tensor::from(3, 2, {1, 2, 3, 4, 5, 6});
  Tensor y = spmm(a, x);
  hyp::test::check_row(y, 0, {10.5, 13.0});
  hyp::test::check_row(y, 1, {-3.0, -4.0});
  std::mt19937_64 rng(2);
  Tensor w = gaussian(2, 2, rng);
  CHECK(grad_check([&] { return sum(mul(spmm(a, x), w)); }, {x}) < 1e-8);
}

TEST_CASE("nan check names the offending op") {
  set_nan_check(true);
  Tensor x = Tensor::from(1, 1, {-1.0});
  CHECK_THROWS_AS(div(x, Tensor::scalar(0.0)), NumericalError);
  set_nan_check(false);
  CHECK_NOTHROW(div(x, Tensor::scalar(0.0)));
}

TEST_CASE("memory accounting tracks tensor buffers") {
  const std::size_t before = memory::current_bytes();
  memory::reset_peak();
  {
    Tensor big = Tensor::zeros(100, 100);
    CHECK(memory::current_bytes() >= before + 100 * 100 * sizeof(double));
  }
  CHECK(memory::current_bytes() == before);
  CHECK(memory::peak_bytes() >= before + 100 * 100 * sizeof(double));
}

TEST_CASE("forward values and gradients are bit-reproducible") {
  auto run = [] {
    std::mt19937_64 rng(21);
    Tensor a = gaussian(6, 5, rng).set_requires_grad();
    Tensor b = gaussian(5, 4, rng).set_requires_grad();
    Tape tape;
    TapeScope scope(tape);
    Tensor l = sum(softmax_rows(matmul(a, b)));
    Tensor l2 = sum(mul(matmul(a, b), matmul(a, b)));
    backward(add(l, l2));
    std::vector<double> out = a.grad();
    auto gb = b.grad();
    out.insert(out.end(), gb.begin(), gb.end());
    return out;
  };
  CHECK(run() == run());
}

}  // TEST_SUITE
