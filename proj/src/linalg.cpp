#include "mrdl/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mrdl/error.hpp"

namespace mrdl {

namespace {

std::string dims(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void require_same_shape(const Matrix& m, const Matrix& n, const char* what) {
  if (m.rows() != n.rows() || m.cols() != n.cols()) {
    throw ShapeError(std::string(what) + ": " + dims(m) + " vs " + dims(n));
  }
}

// out(i, :) += a(i, k) * b(k, :) for ascending k. Every product entry is
// accumulated in the same order regardless of the caller.
void gemm_rows(std::span<const double> a, std::size_t a_rows, std::size_t inner,
               std::span<const double> b, std::size_t b_cols, std::span<double> out) {
  for (std::size_t i = 0; i < a_rows; ++i) {
    double* out_row = out.data() + i * b_cols;
    for (std::size_t k = 0; k < inner; ++k) {
      const double aik = a[i * inner + k];
      const double* b_row = b.data() + k * b_cols;
      for (std::size_t j = 0; j < b_cols; ++j) out_row[j] += aik * b_row[j];
    }
  }
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw ShapeError("matrix data length " + std::to_string(data_.size()) + " does not match " +
                     std::to_string(rows) + "x" + std::to_string(cols));
  }
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw ShapeError("ragged matrix literal");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::row_vector(const Vector& v) { return Matrix(1, v.size(), v.raw()); }

double sigmoid(double x) noexcept { return 1.0 / (1.0 + std::exp(-x)); }

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw ShapeError("matmul: " + dims(a) + " by " + dims(b));
  Matrix out(a.rows(), b.cols());
  gemm_rows(a.values(), a.rows(), a.cols(), b.values(), b.cols(), out.values());
  return out;
}

Matrix sigmoid_map(const Matrix& m) {
  Matrix out = m;
  for (double& x : out.values()) x = sigmoid(x);
  return out;
}

Matrix elementwise(const Matrix& m, const Matrix& n, ElementOp op) {
  require_same_shape(m, n, "elementwise");
  Matrix out(m.rows(), m.cols());
  auto lhs = m.values();
  auto rhs = n.values();
  auto dst = out.values();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    switch (op) {
      case ElementOp::add: dst[i] = lhs[i] + rhs[i]; break;
      case ElementOp::sub: dst[i] = lhs[i] - rhs[i]; break;
      case ElementOp::mul: dst[i] = lhs[i] * rhs[i]; break;
    }
  }
  return out;
}

Matrix add(const Matrix& m, const Matrix& n) { return elementwise(m, n, ElementOp::add); }
Matrix sub(const Matrix& m, const Matrix& n) { return elementwise(m, n, ElementOp::sub); }
Matrix hadamard(const Matrix& m, const Matrix& n) { return elementwise(m, n, ElementOp::mul); }

Matrix transpose(const Matrix& m) {
  Matrix out(m.cols(), m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) out(c, r) = m(r, c);
  return out;
}

Matrix scale(const Matrix& m, double c) {
  Matrix out = m;
  for (double& x : out.values()) x *= c;
  return out;
}

Vector row_sums(const Matrix& m) {
  Vector out(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    double s = 0.0;
    for (double x : m.row(r)) s += x;
    out[r] = s;
  }
  return out;
}

Vector vecmat(const Vector& x, const Matrix& m) {
  if (x.size() != m.rows()) {
    throw ShapeError("vecmat: length " + std::to_string(x.size()) + " by " + dims(m));
  }
  Vector out(m.cols());
  gemm_rows(x.values(), 1, x.size(), m.values(), m.cols(), out.values());
  return out;
}

Vector matvec(const Matrix& m, const Vector& x) {
  if (x.size() != m.cols()) {
    throw ShapeError("matvec: " + dims(m) + " by length " + std::to_string(x.size()));
  }
  Vector out(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    double s = 0.0;
    auto row = m.row(r);
    for (std::size_t k = 0; k < row.size(); ++k) s += row[k] * x[k];
    out[r] = s;
  }
  return out;
}

Matrix outer(const Vector& a, const Vector& b) {
  Matrix out(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) out(i, j) = a[i] * b[j];
  return out;
}

Vector add(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) throw ShapeError("vector add: length mismatch");
  Vector out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

Vector sub(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) throw ShapeError("vector sub: length mismatch");
  Vector out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

Vector sigmoid_map(const Vector& v) {
  Vector out = v;
  for (double& x : out.values()) x = sigmoid(x);
  return out;
}

double frobenius_norm(const Matrix& m) {
  double s = 0.0;
  for (double x : m.values()) s += x * x;
  return std::sqrt(s);
}

bool all_finite(std::span<const double> values) noexcept {
  return std::all_of(values.begin(), values.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace mrdl
