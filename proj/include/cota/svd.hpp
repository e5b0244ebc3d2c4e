#pragma once

// Truncated SVD via randomized range finding (Halko, Martinsson, Tropp 2011)
// with power iterations, followed by a one-sided Jacobi SVD of the projected
// matrix. Works against dense matrices or column-compressed sparse matrices
// through a thin operator interface.

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "cota/common.hpp"
#include "cota/linalg.hpp"

namespace cota::svd {

using linalg::Matrix;

struct SvdResult {
  Matrix<double> u;                     // rows x rank
  std::vector<double> singular_values;  // nonincreasing, > 0
  Matrix<double> v;                     // cols x rank

  int rank() const { return int(singular_values.size()); }
};

// Sparse matrix stored column-wise; each column holds (row, value) pairs
// with strictly increasing row indices.
struct CscMatrix {
  int row_count = 0;
  std::vector<std::vector<std::pair<int, double>>> columns;

  int rows() const { return row_count; }
  int cols() const { return int(columns.size()); }

  Matrix<double> multiply(const Matrix<double>& x) const {
    Matrix<double> y(row_count, x.cols);
    for (int c = 0; c < cols(); ++c) {
      for (const auto& [r, value] : columns[std::size_t(c)]) {
        for (int t = 0; t < x.cols; ++t) y.at(r, t) += value * x.at(c, t);
      }
    }
    return y;
  }

  Matrix<double> multiply_transpose(const Matrix<double>& y) const {
    Matrix<double> x(cols(), y.cols);
    for (int c = 0; c < cols(); ++c) {
      for (const auto& [r, value] : columns[std::size_t(c)]) {
        for (int t = 0; t < y.cols; ++t) x.at(c, t) += value * y.at(r, t);
      }
    }
    return x;
  }

  double frobenius_norm_squared() const {
    double total = 0;
    for (const auto& column : columns)
      for (const auto& [r, value] : column) total += value * value;
    return total;
  }
};

struct DenseOp {
  const Matrix<double>* a;

  int rows() const { return a->rows; }
  int cols() const { return a->cols; }
  Matrix<double> multiply(const Matrix<double>& x) const { return linalg::matmul(*a, x); }
  Matrix<double> multiply_transpose(const Matrix<double>& y) const {
    Matrix<double> out(a->cols, y.cols);
    linalg::gemm(a->data.data(), y.data.data(), out.data.data(), a->cols, a->rows,
                 y.cols, false, /*trans_a=*/true, false);
    return out;
  }
  double frobenius_norm_squared() const { return linalg::frobenius_norm_squared(*a); }
};

namespace detail {

// One-sided Jacobi: orthogonalizes the columns of m in place, accumulating
// the rotations into v. On return m = U * diag(sigma) with U's columns
// orthonormal (zero columns for vanished singular values).
inline void one_sided_jacobi(Matrix<double>& m, Matrix<double>& v) {
  const int rows = m.rows, cols = m.cols;
  v = Matrix<double>::identity(cols);
  const double tol = 1e-14;
  for (int sweep = 0; sweep < 60; ++sweep) {
    bool rotated = false;
    for (int p = 0; p < cols - 1; ++p) {
      for (int q = p + 1; q < cols; ++q) {
        double alpha = 0, beta = 0, gamma = 0;
        for (int r = 0; r < rows; ++r) {
          const double mp = m.at(r, p), mq = m.at(r, q);
          alpha += mp * mp;
          beta += mq * mq;
          gamma += mp * mq;
        }
        if (alpha == 0.0 || beta == 0.0) continue;
        if (std::abs(gamma) <= tol * std::sqrt(alpha * beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = (zeta >= 0 ? 1.0 : -1.0) /
                         (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double cs = 1.0 / std::sqrt(1.0 + t * t);
        const double sn = cs * t;
        for (int r = 0; r < rows; ++r) {
          const double mp = m.at(r, p), mq = m.at(r, q);
          m.at(r, p) = cs * mp - sn * mq;
          m.at(r, q) = sn * mp + cs * mq;
        }
        for (int r = 0; r < cols; ++r) {
          const double vp = v.at(r, p), vq = v.at(r, q);
          v.at(r, p) = cs * vp - sn * vq;
          v.at(r, q) = sn * vp + cs * vq;
        }
      }
    }
    if (!rotated) break;
  }
}

// Full SVD of m (rows x cols) by one-sided Jacobi on its columns, keeping
// only strictly positive singular values, sorted nonincreasing.
inline SvdResult jacobi_svd(Matrix<double> m) {
  const int rows = m.rows, cols = m.cols;
  Matrix<double> v;
  one_sided_jacobi(m, v);
  std::vector<std::pair<double, int>> order;
  order.reserve(std::size_t(cols));
  for (int c = 0; c < cols; ++c) {
    double norm2 = 0;
    for (int r = 0; r < rows; ++r) norm2 += m.at(r, c) * m.at(r, c);
    order.emplace_back(std::sqrt(norm2), c);
  }
  std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  SvdResult result;
  int kept = 0;
  for (const auto& [sigma, _] : order)
    if (sigma > 0.0) ++kept;
  result.u = Matrix<double>(rows, kept);
  result.v = Matrix<double>(cols, kept);
  result.singular_values.reserve(std::size_t(kept));
  int out = 0;
  for (const auto& [sigma, c] : order) {
    if (sigma <= 0.0) continue;
    result.singular_values.push_back(sigma);
    for (int r = 0; r < rows; ++r) result.u.at(r, out) = m.at(r, c) / sigma;
    for (int r = 0; r < cols; ++r) result.v.at(r, out) = v.at(r, c);
    ++out;
  }
  return result;
}

}  // namespace detail

// Rank-limited randomized SVD. target_rank is the number of singular
// triplets requested; the sketch width is target_rank + oversample columns.
template <typename Op>
SvdResult randomized_svd(const Op& a, int target_rank, int oversample,
                         int power_iters, std::uint64_t seed) {
  const int rows = a.rows(), cols = a.cols();
  if (rows < 1 || cols < 1) throw Error("randomized_svd: empty matrix");
  if (target_rank < 1) throw Error("randomized_svd: target rank must be >= 1");
  const int sketch = std::min(target_rank + std::max(oversample, 0), std::min(rows, cols));

  Rng rng(seed);
  Matrix<double> omega(cols, sketch);
  for (double& value : omega.data) value = rng.normal();

  Matrix<double> q = a.multiply(omega);
  linalg::orthonormalize_columns(q);
  for (int iter = 0; iter < power_iters; ++iter) {
    Matrix<double> z = a.multiply_transpose(q);
    linalg::orthonormalize_columns(z);
    q = a.multiply(z);
    linalg::orthonormalize_columns(q);
  }

  // B = Q^T A, factored through its transpose so the Jacobi sweep
  // orthogonalizes only `sketch` columns.
  Matrix<double> bt = a.multiply_transpose(q);  // cols x sketch
  SvdResult small = detail::jacobi_svd(std::move(bt));
  // bt = W Sigma J^T  =>  A ~= (Q J) Sigma W^T.
  const int rank = std::min(small.rank(), target_rank);

  SvdResult result;
  result.singular_values.assign(small.singular_values.begin(),
                                small.singular_values.begin() + rank);
  Matrix<double> u_full(rows, small.rank());
  linalg::gemm(q.data.data(), small.v.data.data(), u_full.data.data(), rows,
               sketch, small.rank());
  result.u = Matrix<double>(rows, rank);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < rank; ++c) result.u.at(r, c) = u_full.at(r, c);
  result.v = Matrix<double>(cols, rank);
  for (int r = 0; r < cols; ++r)
    for (int c = 0; c < rank; ++c) result.v.at(r, c) = small.u.at(r, c);
  return result;
}

struct TruncatedSvd {
  SvdResult factors;        // truncated to k
  int k = 0;                // chosen rank
  double variance_retained = 0.0;
};

// Chooses the smallest k whose sigma^2 partial sum reaches
// variance_threshold of the exact squared Frobenius norm, capped at max_k.
template <typename Op>
TruncatedSvd truncated_svd_by_variance(const Op& a, double variance_threshold,
                                       int max_k, int oversample,
                                       int power_iters, std::uint64_t seed) {
  if (!(variance_threshold > 0.0) || variance_threshold > 1.0)
    throw UsageError("truncated_svd: variance threshold must be in (0, 1]");
  if (max_k < 1) throw UsageError("truncated_svd: max_k must be >= 1");
  const double total = a.frobenius_norm_squared();
  if (total <= 0.0) throw DataError("truncated_svd: matrix is all zeros");

  const int cap = std::min(max_k, std::min(a.rows(), a.cols()));
  SvdResult svd = randomized_svd(a, cap, oversample, power_iters, seed);

  // Relative slack absorbs roundoff when the partial sum should equal the
  // total exactly (threshold 1.0 on a full-rank sketch).
  const double target = variance_threshold * total * (1.0 - 1e-12);
  double cumulative = 0.0;
  int k = 0;
  for (int i = 0; i < svd.rank(); ++i) {
    cumulative += svd.singular_values[std::size_t(i)] * svd.singular_values[std::size_t(i)];
    k = i + 1;
    if (cumulative >= target) break;
  }

  TruncatedSvd out;
  out.k = k;
  out.variance_retained = cumulative / total;
  out.factors.singular_values.assign(svd.singular_values.begin(),
                                     svd.singular_values.begin() + k);
  out.factors.u = Matrix<double>(svd.u.rows, k);
  for (int r = 0; r < svd.u.rows; ++r)
    for (int c = 0; c < k; ++c) out.factors.u.at(r, c) = svd.u.at(r, c);
  out.factors.v = Matrix<double>(svd.v.rows, k);
  for (int r = 0; r < svd.v.rows; ++r)
    for (int c = 0; c < k; ++c) out.factors.v.at(r, c) = svd.v.at(r, c);
  return out;
}

}  // namespace cota::svd
