// Copyright 2026 The lrdm-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "lrdm/error.hpp"

namespace lrdm {

using Vector = std::vector<double>;

inline constexpr double kNormEpsilon = 1e-12;

// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix identity(std::size_t n);
  static Matrix from_rows(const std::vector<std::vector<double>>& rows);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  const std::vector<double>& data() const noexcept { return data_; }

  void fill(double v);
  Matrix transposed() const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> v);

Vector l2_normalize(std::span<const double> v);
double cosine_sim(std::span<const double> a, std::span<const double> b);

// y += alpha * x
void axpy(double alpha, std::span<const double> x, std::span<double> y);

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix matmul_transpose_a(const Matrix& a, const Matrix& b);  // a^T b
Matrix matmul_transpose_b(const Matrix& a, const Matrix& b);  // a b^T

// out = m * x
void matvec(const Matrix& m, std::span<const double> x, std::span<double> out);
// out = m^T * x
void matvec_transposed(const Matrix& m, std::span<const double> x, std::span<double> out);
// m += alpha * u v^T
void add_outer(Matrix& m, double alpha, std::span<const double> u, std::span<const double> v);

Matrix add(const Matrix& a, const Matrix& b);
Matrix scaled(const Matrix& a, double s);
void add_scaled_inplace(Matrix& dst, double s, const Matrix& src);
double frobenius(const Matrix& m);
bool all_finite(std::span<const double> v);

// Singular values in descending order (one-sided Jacobi).
Vector singular_values(const Matrix& m);

// Central-difference gradient of f at p.
Vector finite_diff_grad(const std::function<double(std::span<const double>)>& f,
                        std::span<const double> p, double h);

}  // namespace lrdm
