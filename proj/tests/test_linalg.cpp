#include <doctest.h>

#include <cmath>
#include <random>

#include "mrdl/error.hpp"
#include "mrdl/linalg.hpp"
#include "support.hpp"

using namespace mrdl;

namespace {

Matrix naive_matmul(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.cols(); ++j) {
      long double s = 0.0L;
      for (std::size_t k = 0; k < a.cols(); ++k) s += static_cast<long double>(a(i, k)) * b(k, j);
      c(i, j) = static_cast<double>(s);
    }
  }
  return c;
}

double rel_frobenius(const Matrix& got, const Matrix& want) {
  const double denom = frobenius_norm(want);
  return frobenius_norm(sub(got, want)) / (denom == 0.0 ? 1.0 : denom);
}

}  // namespace

TEST_CASE("matmul identity and hand-checked product") {
  const Matrix m{{1.5, -2.0}, {0.25, 7.0}};
  CHECK(matmul(Matrix::identity(2), m) == m);
  CHECK(matmul(Matrix{{1, 2}, {3, 4}}, Matrix{{0}, {1}}) == Matrix{{2}, {4}});
}

TEST_CASE("matmul agrees with a triple loop") {
  std::mt19937_64 rng(11);
  const Matrix a = testing::random_matrix(5, 7, rng);
  const Matrix b = testing::random_matrix(7, 3, rng);
  const Matrix got = matmul(a, b);
  const Matrix want = naive_matmul(a, b);
  REQUIRE(got.rows() == 5);
  REQUIRE(got.cols() == 3);
  for (std::size_t i = 0; i < got.size(); ++i) CHECK(std::abs(got.values()[i] - want.values()[i]) <= 1e-12);

  for (std::size_t n : {1u, 8u, 33u, 64u}) {
    const Matrix x = testing::random_matrix(n, 64, rng);
    const Matrix y = testing::random_matrix(64, n, rng);
    CHECK(rel_frobenius(matmul(x, y), naive_matmul(x, y)) <= 1e-12);
  }
}

TEST_CASE("matmul rejects mismatched shapes") {
  CHECK_THROWS_AS(matmul(Matrix(2, 3), Matrix(2, 3)), ShapeError);
  CHECK_THROWS_AS(Matrix(2, 2, std::vector<double>(3)), ShapeError);
}

TEST_CASE("transpose of a product") {
  std::mt19937_64 rng(3);
  const Matrix a = testing::random_matrix(6, 4, rng);
  const Matrix b = testing::random_matrix(4, 9, rng);
  CHECK(transpose(transpose(a)) == a);
  CHECK(rel_frobenius(transpose(matmul(a, b)), matmul(transpose(b), transpose(a))) <= 1e-12);
}

TEST_CASE("sigmoid values") {
  CHECK(sigmoid(0.0) == 0.5);
  CHECK(std::abs(sigmoid(1.0) - 0.7310585786) <= 1e-9);
  const double big = sigmoid(700.0);
  CHECK(big > 0.0);
  CHECK(big <= 1.0);
  CHECK(std::isfinite(sigmoid(-1000.0)));
  CHECK(sigmoid(-1000.0) >= 0.0);

  const Matrix m = sigmoid_map(Matrix{{-3, -1, 0, 1, 3, 40}});
  for (std::size_t c = 1; c < m.cols(); ++c) CHECK(m(0, c) > m(0, c - 1));
  for (double v : m.values()) {
    CHECK(v > 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("elementwise identities") {
  std::mt19937_64 rng(5);
  const Matrix m = testing::random_matrix(3, 4, rng);
  CHECK(add(m, Matrix(3, 4)) == m);
  CHECK(sub(scale(m, 2.0), m) == m);
  CHECK(elementwise(m, Matrix(3, 4, 1.0), ElementOp::mul) == m);
  CHECK(hadamard(Matrix{{2, 3}}, Matrix{{4, -1}}) == Matrix{{8, -3}});
  CHECK_THROWS_AS(add(m, Matrix(4, 3)), ShapeError);
  CHECK_THROWS_AS(hadamard(m, Matrix(3, 5)), ShapeError);
}

TEST_CASE("row sums and vector products") {
  const Matrix m{{1, 2, 3}, {4, 5, 6}};
  CHECK(row_sums(m) == Vector{6, 15});
  CHECK(vecmat(Vector{1, 1}, m) == Vector{5, 7, 9});
  CHECK(matvec(m, Vector{1, 0, -1}) == Vector{-2, -2});
  CHECK(outer(Vector{1, 2}, Vector{3, 4, 5}) == Matrix{{3, 4, 5}, {6, 8, 10}});
  CHECK_THROWS_AS(vecmat(Vector{1, 2, 3}, m), ShapeError);
}

TEST_CASE("vecmat matches a one-row matmul bit for bit") {
  std::mt19937_64 rng(9);
  const Matrix w = testing::random_matrix(30, 17, rng);
  const Vector x = testing::random_vector(30, rng);
  const Matrix via_matmul = matmul(Matrix::row_vector(x), w);
  const Vector via_vecmat = vecmat(x, w);
  for (std::size_t j = 0; j < 17; ++j) CHECK(via_vecmat[j] == via_matmul(0, j));
}
