#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "fd_oracle.hpp"
#include "qamatch/errors.hpp"
#include "qamatch/ops.hpp"

using namespace qamatch;
using qamatch::testing::max_grad_error;
using qamatch::testing::random_tensor;

namespace {

std::vector<double> values(Var v) {
  auto d = v.value().data();
  return {d.begin(), d.end()};
}

// sum(out * weights) with fixed random weights, so every output element
// carries a distinct upstream gradient.
Var weighted_sum(Var out, std::mt19937_64& rng) {
  Tape& tape = *out.tape();
  Var w = tape.constant(random_tensor(rng, out.shape()));
  return op::sum(op::mul(out, w));
}

}  // namespace

TEST_CASE("matmul") {
  Tape tape;
  Var eye = tape.constant(Tensor::matrix(2, 2, {1, 0, 0, 1}));
  Var m = tape.constant(Tensor::matrix(2, 2, {1, 2, 3, 4}));
  CHECK(values(op::matmul(eye, m)) == std::vector<double>{1, 2, 3, 4});

  Var row = tape.constant(Tensor::matrix(1, 2, {1, 2}));
  Var col = tape.constant(Tensor::matrix(2, 1, {3, 4}));
  Var prod = op::matmul(row, col);
  CHECK(prod.shape() == Shape{1, 1});
  CHECK(prod.item() == 11.0);

  SUBCASE("shape mismatch names both shapes") {
    Var bad = tape.constant(Tensor({3, 2}));
    try {
      op::matmul(eye, bad);
      FAIL("expected DimensionError");
    } catch (const DimensionError& e) {
      const std::string what = e.what();
      CHECK(what.find("[2x2]") != std::string::npos);
      CHECK(what.find("[3x2]") != std::string::npos);
    }
  }
}

TEST_CASE("matmul gradient of sum(A.B) matches finite differences") {
  std::mt19937_64 rng(11);
  Tensor a = random_tensor(rng, {3, 3});
  Tensor b = random_tensor(rng, {3, 3});
  auto fn = [](Tape&, const std::vector<Var>& v) { return op::sum(op::matmul(v[0], v[1])); };
  CHECK(max_grad_error(fn, {a, b}) < 1e-6);
}

TEST_CASE("softmax_rows") {
  Tape tape;
  auto sm = [&](Tensor t) { return values(op::softmax_rows(tape.constant(std::move(t)))); };
  CHECK(sm(Tensor::matrix(1, 2, {0, 0})) == std::vector<double>{0.5, 0.5});

  auto big = sm(Tensor::matrix(1, 3, {1000, 1000, 1000}));
  for (double v : big) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  // Direct evaluation in extended precision.
  long double e1 = std::exp(1.0L), e2 = std::exp(2.0L), e3 = std::exp(3.0L), z = e1 + e2 + e3;
  auto got = sm(Tensor::matrix(1, 3, {1, 2, 3}));
  CHECK(std::abs(got[0] - static_cast<double>(e1 / z)) < 1e-12);
  CHECK(std::abs(got[1] - static_cast<double>(e2 / z)) < 1e-12);
  CHECK(std::abs(got[2] - static_cast<double>(e3 / z)) < 1e-12);
}

TEST_CASE("softmax rows are distributions") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    Tape tape;
    Var y = op::softmax_rows(tape.constant(random_tensor(rng, {4, 7}, -30, 30)));
    for (std::size_t i = 0; i < 4; ++i) {
      double total = 0.0;
      for (std::size_t j = 0; j < 7; ++j) {
        const double p = y.value().at(i, j);
        CHECK(p >= 0.0);
        CHECK(p <= 1.0);
        total += p;
      }
      CHECK(std::abs(total - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("elementwise basics") {
  Tape tape;
  CHECK(op::sigmoid(tape.constant(Tensor::vector({0}))).item() == 0.5);
  CHECK(op::tanh(tape.constant(Tensor::vector({0}))).item() == 0.0);
  CHECK(values(op::relu(tape.constant(Tensor::vector({-1, 2})))) == std::vector<double>{0, 2});
  CHECK_THROWS_AS(op::add(tape.constant(Tensor({2})), tape.constant(Tensor({3}))), DimensionError);
  CHECK_THROWS_AS(op::mul(tape.constant(Tensor({2, 2})), tape.constant(Tensor({4}))), DimensionError);

  auto fn = [](Tape&, const std::vector<Var>& v) { return op::sum(op::tanh(v[0])); };
  CHECK(max_grad_error(fn, {Tensor::vector({0.7})}) < 1e-6);
}

TEST_CASE("backward") {
  SUBCASE("linear function") {
    Tensor x = Tensor::vector({2});
    x.set_requires_grad(true);
    Tape tape;
    tape.backward(op::scale(tape.leaf(x), 3.0));
    CHECK(x.grad()[0] == 3.0);
  }
  SUBCASE("sum of squares") {
    Tensor x = Tensor::vector({1, 2, 3});
    x.set_requires_grad(true);
    Tape tape;
    Var xv = tape.leaf(x);
    tape.backward(op::sum(op::mul(xv, xv)));
    CHECK(std::vector<double>(x.grad().begin(), x.grad().end()) == std::vector<double>{2, 4, 6});
  }
  SUBCASE("non-scalar output is a contract error") {
    Tensor x = Tensor::vector({1, 2});
    x.set_requires_grad(true);
    Tape tape;
    CHECK_THROWS_AS(tape.backward(op::scale(tape.leaf(x), 2.0)), ContractError);
  }
  SUBCASE("repeated backward accumulates") {
    Tensor x = Tensor::vector({1, 2});
    x.set_requires_grad(true);
    Tape tape;
    Var y = op::sum(op::scale(tape.leaf(x), 5.0));
    tape.backward(y);
    tape.backward(y);
    CHECK(x.grad()[0] == 10.0);
    CHECK(x.grad()[1] == 10.0);
  }
  SUBCASE("disconnected output leaves other grads alone") {
    Tensor x = Tensor::vector({1});
    Tensor z = Tensor::vector({4});
    x.set_requires_grad(true);
    z.set_requires_grad(true);
    z.grad()[0] = 7.0;
    Tape tape;
    Var zx = tape.leaf(z);
    (void)op::scale(zx, 2.0);
    tape.backward(op::sum(op::scale(tape.leaf(x), 2.0)));
    CHECK(x.grad()[0] == 2.0);
    CHECK(z.grad()[0] == 7.0);
  }
  SUBCASE("non-finite results raise") {
    Tape tape;
    Var big = tape.constant(Tensor::vector({1e308}));
    CHECK_THROWS_AS(op::scale(big, 10.0), NumericError);
  }
}

TEST_CASE("backward is linear in the output") {
  std::mt19937_64 rng(3);
  Tensor x = random_tensor(rng, {3, 4});
  const double alpha = 0.7, beta = -1.3;
  auto f = [](Var v) { return op::sum(op::tanh(v)); };
  auto g = [](Var v) { return op::sum(op::mul(v, v)); };

  auto grad_of = [&](auto&& build) {
    Tensor t = x;
    t.set_requires_grad(true);
    Tape tape;
    tape.backward(build(tape.leaf(t)));
    return std::vector<double>(t.grad().begin(), t.grad().end());
  };
  auto gf = grad_of(f);
  auto gg = grad_of(g);
  auto combo = grad_of([&](Var v) { return op::add(op::scale(f(v), alpha), op::scale(g(v), beta)); });
  for (std::size_t i = 0; i < combo.size(); ++i) CHECK(combo[i] == doctest::Approx(alpha * gf[i] + beta * gg[i]).epsilon(1e-12));
}

TEST_CASE("concat then slice is the identity") {
  std::mt19937_64 rng(9);
  Tape tape;
  Tensor a = random_tensor(rng, {3, 2}), b = random_tensor(rng, {3, 5});
  Var cc = op::concat_cols(tape.constant(a), tape.constant(b));
  CHECK(values(op::slice_cols(cc, 0, 2)) == std::vector<double>(a.data().begin(), a.data().end()));
  CHECK(values(op::slice_cols(cc, 2, 5)) == std::vector<double>(b.data().begin(), b.data().end()));

  Tensor c = random_tensor(rng, {4, 3}), d = random_tensor(rng, {2, 3});
  Var cr = op::concat_rows(tape.constant(c), tape.constant(d));
  CHECK(values(op::slice_rows(cr, 0, 4)) == std::vector<double>(c.data().begin(), c.data().end()));
  CHECK(values(op::slice_rows(cr, 4, 2)) == std::vector<double>(d.data().begin(), d.data().end()));
}

TEST_CASE("every differentiable op passes 100 random gradient checks") {
  using Fn = qamatch::testing::ScalarFn;
  struct Case {
    const char* name;
    std::function<std::vector<Tensor>(std::mt19937_64&)> inputs;
    std::function<Var(Tape&, const std::vector<Var>&, std::mt19937_64&)> build;
  };
  auto away_from_zero = [](std::mt19937_64& rng, Shape s) {
    Tensor t = random_tensor(rng, std::move(s));
    for (auto& v : t.data()) v += v >= 0 ? 0.05 : -0.05;
    return t;
  };
  const std::vector<std::int32_t> ids = {2, 0, 2, 1};
  const std::vector<std::uint8_t> mask = {1, 0, 1, 1, 0};

  std::vector<Case> cases = {
      {"matmul", [](auto& r) { return std::vector{random_tensor(r, {3, 4}), random_tensor(r, {4, 2})}; },
       [](Tape&, auto& v, auto&) { return op::matmul(v[0], v[1]); }},
      {"transpose", [](auto& r) { return std::vector{random_tensor(r, {3, 4})}; },
       [](Tape&, auto& v, auto&) { return op::transpose(v[0]); }},
      {"add", [](auto& r) { return std::vector{random_tensor(r, {2, 3}), random_tensor(r, {2, 3})}; },
       [](Tape&, auto& v, auto&) { return op::add(v[0], v[1]); }},
      {"sub", [](auto& r) { return std::vector{random_tensor(r, {2, 3}), random_tensor(r, {2, 3})}; },
       [](Tape&, auto& v, auto&) { return op::sub(v[0], v[1]); }},
      {"mul", [](auto& r) { return std::vector{random_tensor(r, {2, 3}), random_tensor(r, {2, 3})}; },
       [](Tape&, auto& v, auto&) { return op::mul(v[0], v[1]); }},
      {"add_bias", [](auto& r) { return std::vector{random_tensor(r, {3, 4}), random_tensor(r, {4})}; },
       [](Tape&, auto& v, auto&) { return op::add_bias(v[0], v[1]); }},
      {"scale", [](auto& r) { return std::vector{random_tensor(r, {5})}; },
       [](Tape&, auto& v, auto&) { return op::scale(v[0], -2.5); }},
      {"affine", [](auto& r) { return std::vector{random_tensor(r, {5})}; },
       [](Tape&, auto& v, auto&) { return op::affine(v[0], -1.0, 1.0); }},
      {"tanh", [](auto& r) { return std::vector{random_tensor(r, {2, 4}, -3, 3)}; },
       [](Tape&, auto& v, auto&) { return op::tanh(v[0]); }},
      {"sigmoid", [](auto& r) { return std::vector{random_tensor(r, {2, 4}, -5, 5)}; },
       [](Tape&, auto& v, auto&) { return op::sigmoid(v[0]); }},
      {"relu", [&](auto& r) { return std::vector{away_from_zero(r, {2, 4})}; },
       [](Tape&, auto& v, auto&) { return op::relu(v[0]); }},
      {"softmax_rows", [](auto& r) { return std::vector{random_tensor(r, {3, 5}, -3, 3)}; },
       [](Tape&, auto& v, auto&) { return op::softmax_rows(v[0]); }},
      {"layer_norm_rows",
       [](auto& r) { return std::vector{random_tensor(r, {3, 6}), random_tensor(r, {6}), random_tensor(r, {6})}; },
       [](Tape&, auto& v, auto&) { return op::layer_norm_rows(v[0], v[1], v[2]); }},
      {"concat_rows", [](auto& r) { return std::vector{random_tensor(r, {2, 3}), random_tensor(r, {1, 3})}; },
       [](Tape&, auto& v, auto&) { return op::concat_rows(v[0], v[1]); }},
      {"concat_cols", [](auto& r) { return std::vector{random_tensor(r, {2, 3}), random_tensor(r, {2, 2})}; },
       [](Tape&, auto& v, auto&) { return op::concat_cols(v[0], v[1]); }},
      {"slice_rows", [](auto& r) { return std::vector{random_tensor(r, {5, 3})}; },
       [](Tape&, auto& v, auto&) { return op::slice_rows(v[0], 1, 3); }},
      {"slice_cols", [](auto& r) { return std::vector{random_tensor(r, {3, 5})}; },
       [](Tape&, auto& v, auto&) { return op::slice_cols(v[0], 2, 2); }},
      {"sum", [](auto& r) { return std::vector{random_tensor(r, {3, 2})}; },
       [](Tape&, auto& v, auto&) { return op::sum(v[0]); }},
      {"mean", [](auto& r) { return std::vector{random_tensor(r, {3, 2})}; },
       [](Tape&, auto& v, auto&) { return op::mean(v[0]); }},
      {"gather_rows", [](auto& r) { return std::vector{random_tensor(r, {3, 4})}; },
       [&ids](Tape&, auto& v, auto&) { return op::gather_rows(v[0], ids); }},
      {"unfold_rows", [](auto& r) { return std::vector{random_tensor(r, {5, 3})}; },
       [](Tape&, auto& v, auto&) { return op::unfold_rows(v[0], 2); }},
      {"max_over_rows", [](auto& r) { return std::vector{random_tensor(r, {4, 3})}; },
       [](Tape&, auto& v, auto&) { return op::max_over_rows(v[0]); }},
      {"masked_mean_rows", [](auto& r) { return std::vector{random_tensor(r, {5, 3})}; },
       [&mask](Tape&, auto& v, auto&) { return op::masked_mean_rows(v[0], mask); }},
      {"mask_rows", [](auto& r) { return std::vector{random_tensor(r, {5, 3})}; },
       [&mask](Tape&, auto& v, auto&) { return op::mask_rows(v[0], mask); }},
      {"cosine", [](auto& r) { return std::vector{random_tensor(r, {6}), random_tensor(r, {6})}; },
       [](Tape&, auto& v, auto&) { return op::cosine(v[0], v[1]); }},
  };

  for (const auto& c : cases) {
    CAPTURE(c.name);
    std::mt19937_64 rng(1234);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      const std::uint64_t weight_seed = rng();
      Fn fn = [&c, weight_seed](Tape& tape, const std::vector<Var>& v) {
        std::mt19937_64 wr(weight_seed);
        Var out = c.build(tape, v, wr);
        return weighted_sum(out, wr);
      };
      worst = std::max(worst, max_grad_error(fn, c.inputs(rng)));
    }
    CHECK(worst < 1e-5);
  }
}
