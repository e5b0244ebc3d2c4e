#pragma once

// Dense row-major matrix plus the handful of kernels the numeric modules
// share. Matrix products map onto Eigen; factorizations are implemented
// here.

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <vector>

#include "cota/common.hpp"

namespace cota::linalg {

template <typename Real>
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<Real> data;  // row-major

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), data(std::size_t(r) * std::size_t(c), Real(0)) {}

  Real& at(int r, int c) { return data[std::size_t(r) * std::size_t(cols) + std::size_t(c)]; }
  const Real& at(int r, int c) const {
    return data[std::size_t(r) * std::size_t(cols) + std::size_t(c)];
  }

  static Matrix identity(int n) {
    Matrix m(n, n);
    for (int i = 0; i < n; ++i) m.at(i, i) = Real(1);
    return m;
  }
};

template <typename Real>
using EigenMap =
    Eigen::Map<Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename Real>
using ConstEigenMap =
    Eigen::Map<const Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

// c[m x n] (+)= a[m x k] * b[k x n] on raw row-major buffers.
template <typename Real>
void gemm(const Real* a, const Real* b, Real* c, int m, int k, int n,
          bool accumulate = false, bool trans_a = false, bool trans_b = false) {
  ConstEigenMap<Real> ma(a, trans_a ? k : m, trans_a ? m : k);
  ConstEigenMap<Real> mb(b, trans_b ? n : k, trans_b ? k : n);
  EigenMap<Real> mc(c, m, n);
  if (!trans_a && !trans_b) {
    if (accumulate) mc.noalias() += ma * mb; else mc.noalias() = ma * mb;
  } else if (trans_a && !trans_b) {
    if (accumulate) mc.noalias() += ma.transpose() * mb; else mc.noalias() = ma.transpose() * mb;
  } else if (!trans_a && trans_b) {
    if (accumulate) mc.noalias() += ma * mb.transpose(); else mc.noalias() = ma * mb.transpose();
  } else {
    if (accumulate) mc.noalias() += ma.transpose() * mb.transpose();
    else mc.noalias() = ma.transpose() * mb.transpose();
  }
}

template <typename Real>
Matrix<Real> matmul(const Matrix<Real>& a, const Matrix<Real>& b) {
  if (a.cols != b.rows) throw Error("matmul: inner dimension mismatch");
  Matrix<Real> c(a.rows, b.cols);
  gemm(a.data.data(), b.data.data(), c.data.data(), a.rows, a.cols, b.cols);
  return c;
}

template <typename Real>
Matrix<Real> transpose(const Matrix<Real>& a) {
  Matrix<Real> t(a.cols, a.rows);
  for (int r = 0; r < a.rows; ++r)
    for (int c = 0; c < a.cols; ++c) t.at(c, r) = a.at(r, c);
  return t;
}

template <typename Real>
Real frobenius_norm_squared(const Matrix<Real>& a) {
  Real total = 0;
  for (Real v : a.data) total += v * v;
  return total;
}

// In-place column orthonormalization via modified Gram-Schmidt with one
// reorthogonalization pass. Columns that collapse to numerical zero are
// replaced by zero vectors so the caller can detect rank deficiency.
template <typename Real>
void orthonormalize_columns(Matrix<Real>& m) {
  const int rows = m.rows, cols = m.cols;
  auto dot_col = [&](int a, int b) {
    Real s = 0;
    for (int r = 0; r < rows; ++r) s += m.at(r, a) * m.at(r, b);
    return s;
  };
  for (int c = 0; c < cols; ++c) {
    for (int pass = 0; pass < 2; ++pass) {
      for (int prev = 0; prev < c; ++prev) {
        const Real proj = dot_col(prev, c);
        for (int r = 0; r < rows; ++r) m.at(r, c) -= proj * m.at(r, prev);
      }
    }
    const Real norm = std::sqrt(dot_col(c, c));
    if (norm > Real(1e-300)) {
      for (int r = 0; r < rows; ++r) m.at(r, c) /= norm;
    } else {
      for (int r = 0; r < rows; ++r) m.at(r, c) = 0;
    }
  }
}

}  // namespace cota::linalg
