#include <cmath>
#include <random>

#include "doctest.h"
#include "hmtgin/autodiff.hpp"
#include "support.hpp"

using namespace hmtgin;
using testutil::max_rel_error;
using testutil::numeric_gradient;
using testutil::random_tensor;

TEST_CASE("tensor shapes and broadcasting views") {
  Tensor m = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6});
  CHECK(m.rows() == 2);
  CHECK(m.cols() == 3);
  CHECK(m.at(1, 2) == 6);
  Tensor v = Tensor::vector({1, 2, 3});
  CHECK(v.rows() == 1);
  CHECK(v.cols() == 3);
  CHECK(Tensor::scalar(4).item() == 4);
  CHECK_THROWS_AS(Tensor(Shape{2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
  CHECK_THROWS_AS(m.item(), ShapeError);
}

TEST_CASE("matmul forward and gradient against central differences") {
  std::mt19937_64 rng(11);
  Var a = Var::parameter(random_tensor(Shape{4, 5}, rng));
  Var b = Var::parameter(random_tensor(Shape{5, 3}, rng));
  Tensor weights = random_tensor(Shape{4, 3}, rng);
  auto loss = [&](Tape& tape) {
    return tape.sum(tape.mul(tape.matmul(a, b), Var::constant(weights)));
  };
  auto value = [&] {
    Tape t(false);
    return loss(t).value().item();
  };

  Tape tape;
  Var l = loss(tape);
  // Direct triple loop for the forward value.
  long double expect = 0.0L;
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      long double c = 0.0L;
      for (std::size_t k = 0; k < 5; ++k) c += a.value().at(i, k) * b.value().at(k, j);
      expect += c * weights.at(i, j);
    }
  }
  CHECK(l.value().item() == doctest::Approx(static_cast<double>(expect)).epsilon(1e-13));

  tape.backward(l);
  CHECK(max_rel_error(a.grad(), numeric_gradient(a, value)) < 1e-7);
  CHECK(max_rel_error(b.grad(), numeric_gradient(b, value)) < 1e-7);
}

TEST_CASE("log_sigmoid stays finite far into the tails") {
  CHECK(std::isfinite(log_sigmoid(-800.0)));
  // log sigmoid(x) = -log1p(exp(-x)), computed in long double.
  const long double x = -800.0L;
  const long double expect = x - std::log1p(std::exp(x));
  CHECK(log_sigmoid(-800.0) == doctest::Approx(static_cast<double>(expect)).epsilon(1e-15));
  CHECK(log_sigmoid(800.0) == doctest::Approx(0.0));
  CHECK(sigmoid(-800.0) >= 0.0);
  CHECK(sigmoid(0.0) == 0.5);

  Tape tape;
  Var x_var = Var::parameter(Tensor::vector({-800.0, 0.0, 800.0}));
  Var y = tape.sum(tape.log_sigmoid(x_var));
  CHECK(std::isfinite(y.value().item()));
  tape.backward(y);
  CHECK(x_var.grad()[0] == doctest::Approx(1.0));
  CHECK(x_var.grad()[1] == doctest::Approx(0.5));
  CHECK(x_var.grad()[2] == doctest::Approx(0.0));
}

TEST_CASE("batch norm hand case and gradient") {
  Tape tape;
  Var x = Var::constant(Tensor::matrix(2, 1, {-1.0, 1.0}));
  Var gamma = Var::constant(Tensor::vector({1.0}));
  Var beta = Var::constant(Tensor::vector({0.0}));
  Var y = tape.batch_norm(x, gamma, beta, 1e-5);
  const double expect = 1.0 / std::sqrt(1.0 + 1e-5);
  CHECK(y.value()[0] == doctest::Approx(-expect).epsilon(1e-15));
  CHECK(y.value()[1] == doctest::Approx(expect).epsilon(1e-15));

  std::mt19937_64 rng(5);
  Var in = Var::parameter(random_tensor(Shape{5, 3}, rng));
  Var g = Var::parameter(random_tensor(Shape{3}, rng));
  Var b = Var::parameter(random_tensor(Shape{3}, rng));
  Tensor w = random_tensor(Shape{5, 3}, rng);
  auto loss = [&](Tape& t) {
    return t.sum(t.mul(t.batch_norm(in, g, b, 1e-5), Var::constant(w)));
  };
  auto value = [&] {
    Tape t(false);
    return loss(t).value().item();
  };
  Tape t2;
  t2.backward(loss(t2));
  CHECK(max_rel_error(in.grad(), numeric_gradient(in, value)) < 1e-6);
  CHECK(max_rel_error(g.grad(), numeric_gradient(g, value)) < 1e-6);
  CHECK(max_rel_error(b.grad(), numeric_gradient(b, value)) < 1e-6);
}

TEST_CASE("softmax cross-entropy matches the two-pass formula") {
  std::mt19937_64 rng(21);
  Tensor logits = random_tensor(Shape{6, 5}, rng, 3.0);
  std::vector<std::size_t> labels = {0, 4, 2, 2, 1, 3};
  Tape tape(false);
  const double got =
      tape.softmax_cross_entropy(Var::constant(logits), labels).value().item();

  long double total = 0.0L;
  for (std::size_t i = 0; i < 6; ++i) {
    long double mx = logits.at(i, 0);
    for (std::size_t k = 1; k < 5; ++k) mx = std::max<long double>(mx, logits.at(i, k));
    long double z = 0.0L;
    for (std::size_t k = 0; k < 5; ++k) z += std::exp(logits.at(i, k) - mx);
    total += -(logits.at(i, labels[i]) - mx - std::log(z));
  }
  CHECK(std::fabs(got - static_cast<double>(total / 6.0L)) < 1e-12);

  Tape bad(false);
  const std::vector<std::size_t> out_of_range = {0, 0, 0, 0, 0, 5};
  CHECK_THROWS(bad.softmax_cross_entropy(Var::constant(logits), out_of_range));
}

TEST_CASE("sigmoid of a dot product at zero weight") {
  Var w = Var::parameter(Tensor::matrix(1, 3, {0, 0, 0}));
  Var x = Var::constant(Tensor::matrix(3, 1, {1.5, -2.0, 0.25}));
  Tape tape;
  tape.backward(tape.sum(tape.sigmoid(tape.matmul(w, x))));
  CHECK(w.grad()[0] == doctest::Approx(0.25 * 1.5));
  CHECK(w.grad()[1] == doctest::Approx(0.25 * -2.0));
  CHECK(w.grad()[2] == doctest::Approx(0.25 * 0.25));
}

TEST_CASE("gather, scatter, concat and leaky relu gradients") {
  std::mt19937_64 rng(8);
  Var a = Var::parameter(random_tensor(Shape{4, 3}, rng));
  Var b = Var::parameter(random_tensor(Shape{4, 2}, rng));
  Var rows = Var::parameter(random_tensor(Shape{3, 3}, rng));
  Tensor w = random_tensor(Shape{4, 5}, rng);
  const std::vector<std::size_t> gather_idx = {3, 0, 3, 1};
  const std::vector<std::size_t> scatter_idx = {2, 2, 0};
  auto loss = [&](Tape& t) {
    Var g = t.gather_rows(a, gather_idx);
    Var s = t.scatter_add_rows(g, scatter_idx, rows);
    const Var parts[] = {t.leaky_relu(s, 0.01), t.scale(b, 3.0)};
    return t.sum(t.mul(t.concat(parts, 1), Var::constant(w)));
  };
  auto value = [&] {
    Tape t(false);
    return loss(t).value().item();
  };
  Tape tape;
  tape.backward(loss(tape));
  CHECK(max_rel_error(a.grad(), numeric_gradient(a, value)) < 1e-7);
  CHECK(max_rel_error(b.grad(), numeric_gradient(b, value)) < 1e-7);
  CHECK(max_rel_error(rows.grad(), numeric_gradient(rows, value)) < 1e-7);
}

TEST_CASE("gradients accumulate across backward calls until zeroed") {
  Var w = Var::parameter(Tensor::vector({1.0, 2.0}));
  for (int i = 0; i < 2; ++i) {
    Tape tape;
    tape.backward(tape.sum(tape.scale(w, 3.0)));
  }
  CHECK(w.grad()[0] == 6.0);
  w.zero_grad();
  CHECK_FALSE(w.has_grad());
  CHECK(w.grad()[1] == 0.0);
}

TEST_CASE("non-recording tape keeps no entries") {
  Var w = Var::parameter(Tensor::vector({1.0, 2.0}));
  Tape tape(false);
  tape.sum(tape.mul(w, w));
  CHECK(tape.size() == 0);
}

TEST_CASE("grad_check passes on a correct graph and flags a corrupted rule") {
  std::mt19937_64 rng(3);
  Var w = Var::parameter(random_tensor(Shape{3, 4}, rng));
  Var x = Var::constant(random_tensor(Shape{5, 4}, rng));
  auto f = [&](Tape& t) {
    return t.mean(t.leaky_relu(t.matmul(x, t.transpose(w)), 0.01));
  };
  const NamedParameter params[] = {{"w", w}};
  GradCheckReport ok = grad_check(f, params);
  CHECK(ok.passed);
  REQUIRE(ok.worst() != nullptr);
  CHECK(ok.worst()->max_rel_error <= 1e-5);

  testing::set_corrupt_backward(true);
  GradCheckReport bad = grad_check(f, params);
  testing::set_corrupt_backward(false);
  CHECK_FALSE(bad.passed);
  CHECK(bad.worst()->name == "w");
}
