#pragma once

// Dense row-major matrices and vectors of doubles. Functions take operands by
// const reference and return fresh values; nothing here mutates its inputs.

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace mrdl {

class Vector {
 public:
  Vector() = default;
  explicit Vector(std::size_t len, double fill = 0.0) : data_(len, fill) {}
  explicit Vector(std::vector<double> data) : data_(std::move(data)) {}
  Vector(std::initializer_list<double> values) : data_(values) {}

  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }

  std::span<const double> values() const noexcept { return data_; }
  std::span<double> values() noexcept { return data_; }
  const std::vector<double>& raw() const noexcept { return data_; }

  friend bool operator==(const Vector&, const Vector&) = default;

 private:
  std::vector<double> data_;
};

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  /// Throws ShapeError unless data.size() == rows * cols.
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  /// Row-by-row literal; all rows must have equal length.
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);
  /// A 1 x len matrix holding `v`.
  static Matrix row_vector(const Vector& v);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }

  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }

  std::span<const double> row(std::size_t r) const {
    return std::span<const double>(data_).subspan(r * cols_, cols_);
  }
  std::span<const double> values() const noexcept { return data_; }
  std::span<double> values() noexcept { return data_; }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

enum class ElementOp { add, sub, mul };

double sigmoid(double x) noexcept;

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix sigmoid_map(const Matrix& m);
Matrix elementwise(const Matrix& m, const Matrix& n, ElementOp op);
Matrix add(const Matrix& m, const Matrix& n);
Matrix sub(const Matrix& m, const Matrix& n);
Matrix hadamard(const Matrix& m, const Matrix& n);
Matrix transpose(const Matrix& m);
Matrix scale(const Matrix& m, double c);
Vector row_sums(const Matrix& m);

/// Row vector times matrix: out[j] = sum_k x[k] * m(k, j), accumulated in
/// ascending k. Bit-identical to matmul(Matrix::row_vector(x), m).
Vector vecmat(const Vector& x, const Matrix& m);
/// Matrix times column vector: out[i] = sum_k m(i, k) * x[k].
Vector matvec(const Matrix& m, const Vector& x);
Matrix outer(const Vector& a, const Vector& b);

Vector add(const Vector& a, const Vector& b);
Vector sub(const Vector& a, const Vector& b);
Vector sigmoid_map(const Vector& v);

double frobenius_norm(const Matrix& m);
bool all_finite(std::span<const double> values) noexcept;

}  // namespace mrdl
