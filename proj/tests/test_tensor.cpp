#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "erw/rng.hpp"
#include "erw/tensor.hpp"

#include <cmath>

using namespace erw;

namespace {

Array random_array(Rng& rng, Index n) {
  Array a(n);
  for (Index i = 0; i < n; ++i) a[i] = rng.normal();
  return a;
}

}  // namespace

TEST_CASE("matmul identity and projector") {
  Tape tape;
  Matrix I2 = Matrix::Identity(2, 2);
  Matrix A(2, 2);
  A << 1, 2, 3, 4;
  Tensor r = matmul(tape.input(I2, false), tape.input(A, false));
  CHECK(Matrix(r.matrix()) == A);

  Matrix P(2, 2);
  P << 1, 0, 0, 0;
  Matrix B(2, 2);
  B << 5, 6, 7, 8;
  Tensor r2 = matmul(tape.input(P, false), tape.input(B, false));
  Matrix expect(2, 2);
  expect << 5, 6, 0, 0;
  CHECK(Matrix(r2.matrix()) == expect);
}

TEST_CASE("matmul shape mismatch reports both shapes") {
  Tape tape;
  Tensor a = tape.input(Matrix::Zero(2, 3), false);
  Tensor b = tape.input(Matrix::Zero(2, 3), false);
  CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("[2, 3]"), std::invalid_argument);
}

TEST_CASE("matmul gradient matches finite differences") {
  Rng rng(7);
  Matrix B(3, 3);
  for (Index i = 0; i < 3; ++i)
    for (Index j = 0; j < 3; ++j) B(i, j) = rng.normal();
  auto f = [&](Tape& t, const Tensor& a) { return sum(matmul(a, t.input(B, false))); };
  const double err = grad_check(f, Shape{3, 3}, random_array(rng, 9), 1e-3);
  CHECK(err <= 1e-4);
}

TEST_CASE("elementwise basics") {
  Tape tape;
  Tensor z = tape.input(Shape{1, 1}, Array::Zero(1), false);
  CHECK(silu(z).values()[0] == 0.0);

  Array a(2), b(2);
  a << 1, 2;
  b << 3, 4;
  Tensor r = add(tape.input(Shape{2}, a, false), tape.input(Shape{2}, b, false));
  CHECK(r.values()[0] == 4.0);
  CHECK(r.values()[1] == 6.0);
}

TEST_CASE("silu derivative matches finite differences at 1.5") {
  auto f = [](Tape& t, const Tensor& x) { return sum(silu(x)); };
  Array x0(1);
  x0 << 1.5;
  const double err = grad_check(f, Shape{1, 1}, x0, 1e-4);
  CHECK(err <= 1e-5);
}

TEST_CASE("log and sqrt reject negative input") {
  Tape tape;
  Array neg(1);
  neg << -1.0;
  Tensor x = tape.input(Shape{1}, neg, false);
  CHECK_THROWS_AS(log(x), std::domain_error);
  CHECK_THROWS_AS(sqrt(x), std::domain_error);
}

TEST_CASE("NaN/Inf outputs are hard errors") {
  Tape tape;
  Array big(1);
  big << 1e300;
  Tensor x = tape.input(Shape{1}, big, false);
  CHECK_THROWS_AS(exp(x), NumericsError);
  CHECK_THROWS_AS(mul(x, x), NumericsError);
}

TEST_CASE("softmax rows: symmetry, stability, normalization") {
  Tape tape;
  Matrix x(2, 3);
  x << 0, 0, 0, 1000, 0, 0;
  Tensor y = softmax_rows(tape.input(x, false));
  Matrix Y = y.matrix();
  CHECK(Y(0, 0) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(Y(0, 1) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(Y(1, 0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(Y(1, 1) <= 1e-300);
  for (Index i = 0; i < 2; ++i) CHECK(std::abs(Y.row(i).sum() - 1.0) <= 1e-12);
}

TEST_CASE("softmax jacobian-vector product matches finite differences") {
  Rng rng(21);
  Array w = random_array(rng, 8);
  auto f = [&](Tape& t, const Tensor& x) {
    // contract softmax output with a fixed vector: gradient is J^T w
    Tensor y = softmax_rows(x);
    Tensor wt = t.input(Shape{2, 4}, w, false);
    return sum(mul(y, wt));
  };
  const double err = grad_check(f, Shape{2, 4}, random_array(rng, 8), 1e-3);
  CHECK(err <= 1e-4);
}

TEST_CASE("backward: sum gives ones, sum of squares gives 2x") {
  Tape tape;
  Rng rng(3);
  Array x0 = random_array(rng, 6);
  Tensor x = tape.input(Shape{2, 3}, x0, true);
  tape.backward(sum(x));
  CHECK((x.grad() == 1.0).all());

  Tape tape2;
  Tensor x2 = tape2.input(Shape{2, 3}, x0, true);
  tape2.backward(sum(mul(x2, x2)));
  CHECK(((x2.grad() - 2.0 * x0).abs() < 1e-15).all());
}

TEST_CASE("backward requires a scalar root") {
  Tape tape;
  Tensor x = tape.input(Matrix::Ones(2, 2), true);
  CHECK_THROWS_AS(tape.backward(x), std::invalid_argument);
}

TEST_CASE("backward touches exactly the ancestors of the root") {
  Tape tape;
  Tensor x = tape.input(Matrix::Ones(1, 2), true);
  Tensor y = tape.input(Matrix::Ones(1, 2), true);
  Tensor unused = scale(y, 3.0);
  (void)unused;
  tape.backward(sum(scale(x, 2.0)));
  CHECK((x.grad() == 2.0).all());
  CHECK((y.grad() == 0.0).all());
}

TEST_CASE("backward is linear in the root") {
  Rng rng(11);
  Array x0 = random_array(rng, 4);
  const double a = 1.7, b = -0.4;

  auto grad_of = [&](auto make_root) {
    Tape t;
    Tensor x = t.input(Shape{4}, x0, true);
    t.backward(make_root(t, x));
    return Array(x.grad());
  };
  Array gf = grad_of([](Tape& t, const Tensor& x) { return sum(mul(x, x)); });
  Array gg = grad_of([](Tape& t, const Tensor& x) { return sum(silu(x)); });
  Array gc = grad_of([&](Tape& t, const Tensor& x) {
    return add(scale(sum(mul(x, x)), a), scale(sum(silu(x)), b));
  });
  CHECK(((gc - (a * gf + b * gg)).abs() <= 1e-12).all());
}

TEST_CASE("replaying backward accumulates exactly twice the gradient") {
  Tape tape;
  Rng rng(5);
  Array x0 = random_array(rng, 5);
  Tensor x = tape.input(Shape{5}, x0, true);
  Tensor root = sum(mul(x, x));
  tape.backward(root);
  Array once = x.grad();
  tape.backward(root);
  CHECK(((x.grad() - 2.0 * once).abs() <= 1e-15).all());
  tape.zero_grad();
  CHECK((x.grad() == 0.0).all());
}

TEST_CASE("composite MLP loss gradient matches finite differences") {
  // gradient w.r.t. the weights of a small MLP, weights packed as one matrix
  Rng rng(13);
  Matrix in = rng.normal_matrix(4, 3);
  Matrix W2 = rng.normal_matrix(5, 2);
  auto loss = [&](Tape& t, const Tensor& w1) {
    Tensor h1 = silu(matmul(t.input(in, false), w1));
    Tensor out = matmul(h1, t.input(W2, false));
    Tensor err = sub(out, t.input(Matrix::Ones(4, 2), false));
    return scale(sum(mul(err, err)), 1.0 / 8.0);
  };
  const double err = grad_check(loss, Shape{3, 5}, random_array(rng, 15), 1e-3);
  CHECK(err <= 1e-4);
}

TEST_CASE("grad_check on sum is exact to 1e-10") {
  Rng rng(17);
  auto f = [](Tape& t, const Tensor& x) { return sum(x); };
  CHECK(grad_check(f, Shape{4, 2}, random_array(rng, 8), 1e-3) <= 1e-10);
}

TEST_CASE("transpose, broadcast, diag, l2 normalize gradients") {
  Rng rng(29);
  auto f1 = [](Tape& t, const Tensor& x) { return sum(mul(transpose(x), transpose(x))); };
  CHECK(grad_check(f1, Shape{2, 3}, random_array(rng, 6), 1e-3) <= 1e-4);

  auto f2 = [](Tape& t, const Tensor& x) {
    Tensor b = broadcast_rows(x, 5);
    return sum(mul(b, b));
  };
  CHECK(grad_check(f2, Shape{1, 3}, random_array(rng, 3), 1e-3) <= 1e-4);

  auto f3 = [](Tape& t, const Tensor& x) { return sum(diag(softmax_rows(x))); };
  CHECK(grad_check(f3, Shape{3, 3}, random_array(rng, 9), 1e-3) <= 1e-4);

  auto f4 = [](Tape& t, const Tensor& x) {
    Tensor y = l2_normalize_rows(x);
    return sum(mul(y, silu(y)));
  };
  Array x4 = random_array(rng, 8) + 3.0;  // keep rows away from zero
  CHECK(grad_check(f4, Shape{2, 4}, x4, 1e-3) <= 1e-4);
}

TEST_CASE("every operation passes randomized finite-difference checks") {
  // randomized inputs of side <= 8 across 100 seeds
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed * 7919 + 1);
    const Index m = 2 + rng.uniform_index(4);
    const Index n = 2 + rng.uniform_index(4);
    Array x0 = random_array(rng, m * n);
    Matrix other = rng.normal_matrix(n, m);

    auto composite = [&](Tape& t, const Tensor& x) {
      Tensor a = silu(x);
      Tensor b = matmul(a, t.input(other, false));
      Tensor c = softmax_rows(b);
      Tensor d = log_softmax_rows(b);
      Tensor e = add(mul(c, c), scale(d, 0.25));
      Tensor f = exp(scale(e, 0.1));
      Tensor g = log(add(f, f));
      Tensor h = sqrt(add(mul(g, g), f));
      return sum(sub(h, scale(e, 0.5)));
    };
    const double err = grad_check(composite, Shape{m, n}, x0, 1e-3);
    CHECK(err <= 1e-4);
  }
}
