#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "core/gradcheck.hpp"
#include "core/matrix.hpp"
#include "core/rng.hpp"

using namespace cisskip;

namespace {

Matrix random_matrix(Rng& rng, int rows, int cols, double scale = 1.0) {
  Matrix m(rows, cols);
  for (double& v : m.values()) v = rng.uniform(-scale, scale);
  return m;
}

// Independent oracle: naive triple loop.
Matrix matmul_reference(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), b.cols());
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < b.cols(); ++j) {
      double acc = 0.0;
      for (int k = 0; k < a.cols(); ++k) acc += a(i, k) * b(k, j);
      out(i, j) = acc;
    }
  return out;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  REQUIRE(a.same_shape(b));
  double worst = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(a.values()[i] - b.values()[i]));
  }
  return worst;
}

}  // namespace

TEST_CASE("matmul identity and hand examples") {
  Matrix m(2, 2, {1, 2, 3, 4});
  CHECK(matmul(Matrix::identity(2), m) == m);

  Matrix a(1, 2, {1, 2});
  Matrix b(2, 1, {3, 4});
  Matrix prod = matmul(a, b);
  CHECK(prod.rows() == 1);
  CHECK(prod.cols() == 1);
  CHECK(prod(0, 0) == doctest::Approx(11.0));
}

TEST_CASE("matmul matches the triple-loop oracle") {
  Rng rng(11);
  Matrix a = random_matrix(rng, 5, 7);
  Matrix b = random_matrix(rng, 7, 3);
  CHECK(max_abs_diff(matmul(a, b), matmul_reference(a, b)) < 1e-12);
}

TEST_CASE("matmul rejects mismatched shapes naming both") {
  Matrix a(2, 3), b(4, 2);
  CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("[2x3]"), ShapeError);
  try {
    matmul(a, b);
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("[4x2]") != std::string::npos);
  }
}

TEST_CASE("matmul associativity on random triples") {
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    Matrix a = random_matrix(rng, 4, 6);
    Matrix b = random_matrix(rng, 6, 5);
    Matrix c = random_matrix(rng, 5, 3);
    Matrix left = matmul(matmul(a, b), c);
    Matrix right = matmul(a, matmul(b, c));
    for (size_t i = 0; i < left.size(); ++i) {
      double denom = std::max(std::abs(left.values()[i]), 1.0);
      CHECK(std::abs(left.values()[i] - right.values()[i]) / denom < 1e-9);
    }
  }
}

TEST_CASE("softmax rows: symmetry, stabilization, closed form") {
  Matrix flat(1, 2, {0, 0});
  Matrix s = softmax_rows(flat);
  CHECK(s(0, 0) == doctest::Approx(0.5));
  CHECK(s(0, 1) == doctest::Approx(0.5));

  Matrix big(1, 2, {1000, 1000});
  Matrix sb = softmax_rows(big);
  CHECK(sb.all_finite());
  CHECK(sb(0, 0) == doctest::Approx(0.5));

  Matrix ln3(1, 2, {0.0, std::log(3.0)});
  Matrix sl = softmax_rows(ln3);
  CHECK(sl(0, 0) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(sl(0, 1) == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("softmax rows sum to one under extreme magnitudes") {
  Rng rng(23);
  for (int trial = 0; trial < 200; ++trial) {
    Matrix m = random_matrix(rng, 3, 8, 1e4);
    Matrix s = softmax_rows(m);
    for (int i = 0; i < s.rows(); ++i) {
      double sum = 0.0;
      for (int j = 0; j < s.cols(); ++j) {
        CHECK(s(i, j) >= 0.0);
        sum += s(i, j);
      }
      CHECK(std::abs(sum - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("layer norm examples") {
  Matrix gamma = Matrix::full(1, 2, 1.0);
  Matrix beta(1, 2);

  Matrix constant(1, 2, {3.0, 3.0});
  Matrix out = layer_norm(constant, gamma, beta, 1e-5);
  CHECK(out(0, 0) == doctest::Approx(0.0));
  CHECK(out(0, 1) == doctest::Approx(0.0));

  const double eps = 1e-8;
  Matrix pm(1, 2, {1.0, -1.0});
  Matrix out2 = layer_norm(pm, gamma, beta, eps);
  CHECK(out2(0, 0) == doctest::Approx(1.0 / std::sqrt(1.0 + eps)).epsilon(1e-12));
  CHECK(out2(0, 1) == doctest::Approx(-1.0 / std::sqrt(1.0 + eps)).epsilon(1e-12));

  Matrix beta5 = Matrix::full(1, 2, 5.0);
  Matrix out3 = layer_norm(pm, gamma, beta5, eps);
  CHECK(out3(0, 0) - out2(0, 0) == doctest::Approx(5.0));
  CHECK(out3(0, 1) - out2(0, 1) == doctest::Approx(5.0));
}

TEST_CASE("layer norm normalizes rows to zero mean") {
  Rng rng(31);
  Matrix m = random_matrix(rng, 6, 16, 3.0);
  Matrix gamma = Matrix::full(1, 16, 1.0);
  Matrix beta(1, 16);
  Matrix out = layer_norm(m, gamma, beta, 1e-5);
  for (int i = 0; i < out.rows(); ++i) {
    double mean = 0.0;
    for (int j = 0; j < out.cols(); ++j) mean += out(i, j);
    CHECK(std::abs(mean / out.cols()) < 1e-10);
  }
}

TEST_CASE("layer norm rejects mismatched affine params") {
  Matrix m(2, 4);
  CHECK_THROWS_AS(layer_norm(m, Matrix::full(1, 3, 1.0), Matrix(1, 3), 1e-5), ShapeError);
}

TEST_CASE("gelu and sigmoid pointwise values") {
  CHECK(gelu_scalar(0.0) == doctest::Approx(0.0));
  CHECK(sigmoid_scalar(0.0) == doctest::Approx(0.5));
  CHECK(gelu_scalar(10.0) == doctest::Approx(10.0).epsilon(1e-7));
  CHECK(std::abs(gelu_scalar(10.0) - 10.0) < 1e-6);
  CHECK(sigmoid_scalar(std::log(3.0)) == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("grad_check on a quadratic is exact to O(h^2)") {
  Rng rng(41);
  Matrix x = random_matrix(rng, 3, 4);
  Matrix analytic = scale(x, 2.0);  // d/dx sum(x^2) = 2x
  auto loss = [&] {
    double s = 0.0;
    for (double v : x.values()) s += v * v;
    return s;
  };
  double err = grad_check(loss, {{&x, &analytic}}, 1e-5);
  CHECK(err <= 1e-8);
}

TEST_CASE("grad_check on a constant returns zero") {
  Matrix x(2, 2, {1, 2, 3, 4});
  Matrix analytic(2, 2);
  auto loss = [] { return 7.5; };
  CHECK(grad_check(loss, {{&x, &analytic}}, 1e-5) == 0.0);
}

TEST_CASE("grad_check rejects out-of-range steps") {
  Matrix x(1, 1, {1.0});
  Matrix g(1, 1, {0.0});
  auto loss = [] { return 0.0; };
  CHECK_THROWS_AS(grad_check(loss, {{&x, &g}}, 1e-2), RangeError);
  CHECK_THROWS_AS(grad_check(loss, {{&x, &g}}, 1e-8), RangeError);
}

// Backward passes of each primitive against central differences, driven
// through a fixed random linear functional of the output.
TEST_CASE("primitive backward passes match finite differences") {
  Rng rng(53);
  const double h = 1e-5;

  SUBCASE("matmul") {
    Matrix a = random_matrix(rng, 3, 5);
    Matrix b = random_matrix(rng, 5, 4);
    Matrix w = random_matrix(rng, 3, 4);  // functional weights
    auto loss = [&] {
      Matrix y = matmul(a, b);
      double s = 0.0;
      for (size_t i = 0; i < y.size(); ++i) s += w.values()[i] * y.values()[i];
      return s;
    };
    Matrix da = matmul(w, transpose(b));
    Matrix db = matmul(transpose(a), w);
    CHECK(grad_check(loss, {{&a, &da}, {&b, &db}}, h) <= 1e-6);
  }

  SUBCASE("softmax_rows") {
    Matrix x = random_matrix(rng, 3, 6);
    Matrix w = random_matrix(rng, 3, 6);
    auto loss = [&] {
      Matrix y = softmax_rows(x);
      double s = 0.0;
      for (size_t i = 0; i < y.size(); ++i) s += w.values()[i] * y.values()[i];
      return s;
    };
    Matrix dx = softmax_rows_backward(softmax_rows(x), w);
    CHECK(grad_check(loss, {{&x, &dx}}, h) <= 1e-4);
  }

  SUBCASE("gelu") {
    Matrix x = random_matrix(rng, 3, 6, 2.0);
    Matrix w = random_matrix(rng, 3, 6);
    auto loss = [&] {
      Matrix y = gelu(x);
      double s = 0.0;
      for (size_t i = 0; i < y.size(); ++i) s += w.values()[i] * y.values()[i];
      return s;
    };
    Matrix dx = hadamard(w, gelu_grad(x));
    CHECK(grad_check(loss, {{&x, &dx}}, h) <= 1e-4);
  }

  SUBCASE("layer_norm") {
    Matrix x = random_matrix(rng, 3, 6, 2.0);
    Matrix gamma = random_matrix(rng, 1, 6);
    Matrix beta = random_matrix(rng, 1, 6);
    Matrix w = random_matrix(rng, 3, 6);
    const double eps = 1e-5;
    auto loss = [&] {
      Matrix y = layer_norm(x, gamma, beta, eps);
      double s = 0.0;
      for (size_t i = 0; i < y.size(); ++i) s += w.values()[i] * y.values()[i];
      return s;
    };
    LayerNormCache cache;
    layer_norm(x, gamma, beta, eps, &cache);
    LayerNormGrads g = layer_norm_backward(cache, gamma, w);
    CHECK(grad_check(loss, {{&x, &g.dx}, {&gamma, &g.dgamma}, {&beta, &g.dbeta}}, h) <= 1e-4);
  }

  SUBCASE("sigmoid") {
    Matrix x = random_matrix(rng, 2, 5, 2.0);
    Matrix w = random_matrix(rng, 2, 5);
    auto loss = [&] {
      Matrix y = sigmoid(x);
      double s = 0.0;
      for (size_t i = 0; i < y.size(); ++i) s += w.values()[i] * y.values()[i];
      return s;
    };
    Matrix y = sigmoid(x);
    Matrix dsig(2, 5);
    for (size_t i = 0; i < y.size(); ++i) {
      dsig.values()[i] = w.values()[i] * y.values()[i] * (1.0 - y.values()[i]);
    }
    CHECK(grad_check(loss, {{&x, &dsig}}, h) <= 1e-4);
  }
}

TEST_CASE("matrix data length invariant") {
  CHECK_THROWS_AS(Matrix(2, 3, {1.0, 2.0}), ShapeError);
}
