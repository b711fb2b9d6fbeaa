// Copyright 2026 The lrdm-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "lrdm/tensor.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <string>

namespace lrdm {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DegenerateNorm: return "DegenerateNorm";
    case ErrorCode::DimMismatch: return "DimMismatch";
    case ErrorCode::NonFiniteEvaluation: return "NonFiniteEvaluation";
    case ErrorCode::WorldTooSmall: return "WorldTooSmall";
    case ErrorCode::InsufficientDistractors: return "InsufficientDistractors";
    case ErrorCode::MalformedRecord: return "MalformedRecord";
    case ErrorCode::MissingPseudo: return "MissingPseudo";
    case ErrorCode::SequenceTooLong: return "SequenceTooLong";
    case ErrorCode::UnknownToken: return "UnknownToken";
    case ErrorCode::UnsupportedVersion: return "UnsupportedVersion";
    case ErrorCode::CorruptTensor: return "CorruptTensor";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::DegenerateDelta: return "DegenerateDelta";
    case ErrorCode::DegenerateBatch: return "DegenerateBatch";
    case ErrorCode::CandidateSetInvalid: return "CandidateSetInvalid";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    case ErrorCode::MissingArtifact: return "MissingArtifact";
    case ErrorCode::MixedConfig: return "MixedConfig";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw Error(ErrorCode::DimMismatch, "matrix data length " + std::to_string(data_.size()) +
                                            " != " + std::to_string(rows) + "x" + std::to_string(cols));
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::from_rows(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) return {};
  Matrix m(rows.size(), rows.front().size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != m.cols()) throw Error(ErrorCode::DimMismatch, "ragged rows");
    std::copy(rows[r].begin(), rows[r].end(), m.row(r).begin());
  }
  return m;
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Matrix Matrix::transposed() const {
  Matrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

namespace {

// Four interleaved partial sums, combined in a fixed order.
inline double dot_raw(const double* __restrict a, const double* __restrict b, std::size_t n) {
  double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

inline void axpy_raw(double alpha, const double* __restrict x, double* __restrict y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

}  // namespace

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(ErrorCode::DimMismatch, "dot");
  return dot_raw(a.data(), b.data(), a.size());
}

double norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

Vector l2_normalize(std::span<const double> v) {
  const double n = norm(v);
  if (!(n > kNormEpsilon)) throw Error(ErrorCode::DegenerateNorm, "norm " + std::to_string(n));
  Vector out(v.begin(), v.end());
  for (double& x : out) x /= n;
  return out;
}

double cosine_sim(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(ErrorCode::DimMismatch, "cosine_sim");
  const double na = norm(a);
  const double nb = norm(b);
  if (!(na > kNormEpsilon) || !(nb > kNormEpsilon)) throw Error(ErrorCode::DegenerateNorm, "cosine_sim");
  const double c = dot(a, b) / (na * nb);
  return std::clamp(c, -1.0, 1.0);
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  const std::size_t n = x.size();
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw Error(ErrorCode::DimMismatch, "matmul");
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto out = c.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) axpy(a(i, k), b.row(k), out);
  }
  return c;
}

Matrix matmul_transpose_a(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw Error(ErrorCode::DimMismatch, "matmul_transpose_a");
  Matrix c(a.cols(), b.cols());
  for (std::size_t k = 0; k < a.rows(); ++k)
    for (std::size_t i = 0; i < a.cols(); ++i) axpy(a(k, i), b.row(k), c.row(i));
  return c;
}

Matrix matmul_transpose_b(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw Error(ErrorCode::DimMismatch, "matmul_transpose_b");
  Matrix c(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.rows(); ++j) c(i, j) = dot(a.row(i), b.row(j));
  return c;
}

void matvec(const Matrix& m, std::span<const double> x, std::span<double> out) {
  if (m.cols() != x.size() || m.rows() != out.size()) throw Error(ErrorCode::DimMismatch, "matvec");
  const std::size_t n = m.cols();
  const double* base = m.values().data();
  for (std::size_t r = 0; r < m.rows(); ++r) out[r] = dot_raw(base + r * n, x.data(), n);
}

void matvec_transposed(const Matrix& m, std::span<const double> x, std::span<double> out) {
  if (m.rows() != x.size() || m.cols() != out.size()) throw Error(ErrorCode::DimMismatch, "matvec_transposed");
  std::fill(out.begin(), out.end(), 0.0);
  const std::size_t n = m.cols();
  const double* base = m.values().data();
  for (std::size_t r = 0; r < m.rows(); ++r) axpy_raw(x[r], base + r * n, out.data(), n);
}

void add_outer(Matrix& m, double alpha, std::span<const double> u, std::span<const double> v) {
  if (m.rows() != u.size() || m.cols() != v.size()) throw Error(ErrorCode::DimMismatch, "add_outer");
  const std::size_t n = m.cols();
  double* base = m.values().data();
  for (std::size_t r = 0; r < m.rows(); ++r) axpy_raw(alpha * u[r], v.data(), base + r * n, n);
}

Matrix add(const Matrix& a, const Matrix& b) {
  Matrix c = a;
  add_scaled_inplace(c, 1.0, b);
  return c;
}

Matrix scaled(const Matrix& a, double s) {
  Matrix c = a;
  for (double& x : c.values()) x *= s;
  return c;
}

void add_scaled_inplace(Matrix& dst, double s, const Matrix& src) {
  if (dst.rows() != src.rows() || dst.cols() != src.cols()) throw Error(ErrorCode::DimMismatch, "add_scaled");
  axpy(s, src.values(), dst.values());
}

double frobenius(const Matrix& m) { return norm(m.values()); }

bool all_finite(std::span<const double> v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

Vector singular_values(const Matrix& m) {
  Eigen::MatrixXd e(m.rows(), m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) e(r, c) = m(r, c);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(e);
  const auto& s = svd.singularValues();
  return Vector(s.data(), s.data() + s.size());
}

Vector finite_diff_grad(const std::function<double(std::span<const double>)>& f,
                        std::span<const double> p, double h) {
  Vector x(p.begin(), p.end());
  Vector g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + h;
    const double up = f(x);
    x[i] = orig - h;
    const double down = f(x);
    x[i] = orig;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw Error(ErrorCode::NonFiniteEvaluation, "coordinate " + std::to_string(i));
    }
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

}  // namespace lrdm
