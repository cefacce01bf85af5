// SPDX-License-Identifier: Apache-2.0
#include "covcast/kernels.hpp"

#include "covcast/error.hpp"

#include <string>
#include <vector>

namespace covcast::kernels {

namespace {

std::string shape(const Matrix &m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void prepare_output(Matrix &c, std::size_t rows, std::size_t cols, bool accumulate,
                    const char *op) {
  if (accumulate) {
    if (c.rows() != rows || c.cols() != cols)
      throw Error(ErrorCode::ShapeMismatch, std::string(op) + ": accumulator is " + shape(c) +
                                                ", expected " + std::to_string(rows) + "x" +
                                                std::to_string(cols));
  } else if (c.rows() != rows || c.cols() != cols) {
    c = Matrix(rows, cols);
  } else {
    c.fill(0.0);
  }
}

// Row kernels shared by both implementations; the loop order fixes the
// summation order of every output element. Vectorising across j keeps that
// order, so every clone produces the same bits.
#if defined(__GNUC__) && !defined(__clang__) && defined(__x86_64__)
#define COVCAST_ROW_KERNEL __attribute__((target_clones("avx2", "default")))
#else
#define COVCAST_ROW_KERNEL
#endif

// out[j] += sum_p a[p * stride] * b(p, j) for j < n, p < k. Four reduction
// steps are folded per pass over the row, still added left to right.
COVCAST_ROW_KERNEL
void axpy_rows(const double *a, std::size_t stride, const double *b, std::size_t k,
               std::size_t n, double *out) {
  std::size_t p = 0;
  for (; p + 4 <= k; p += 4) {
    const double a0 = a[p * stride], a1 = a[(p + 1) * stride], a2 = a[(p + 2) * stride],
                 a3 = a[(p + 3) * stride];
    const double *b0 = b + p * n, *b1 = b0 + n, *b2 = b1 + n, *b3 = b2 + n;
    for (std::size_t j = 0; j < n; ++j)
      out[j] = (((out[j] + a0 * b0[j]) + a1 * b1[j]) + a2 * b2[j]) + a3 * b3[j];
  }
  for (; p < k; ++p) {
    const double av = a[p * stride];
    const double *brow = b + p * n;
    for (std::size_t j = 0; j < n; ++j)
      out[j] += av * brow[j];
  }
}

// c_row[j] += sum_p a(i,p) * b(p,j)
inline void nn_row(const Matrix &a, const Matrix &b, Matrix &c, std::size_t i) {
  axpy_rows(a.data() + i * a.cols(), 1, b.data(), a.cols(), b.cols(), c.data() + i * b.cols());
}

// c_row[j] += sum_r a(r,i) * b(r,j)
inline void tn_row(const Matrix &a, const Matrix &b, Matrix &c, std::size_t i) {
  axpy_rows(a.data() + i, a.cols(), b.data(), a.rows(), b.cols(), c.data() + i * b.cols());
}

// c_row[j] += dot(a_row(i), b_row(j)), with bt = b^T. Each dot product is
// summed from zero in scratch before it is added to c.
inline void nt_row(const Matrix &a, const Matrix &bt, Matrix &c, std::size_t i,
                   std::vector<double> &scratch) {
  const std::size_t n = bt.cols();
  scratch.assign(n, 0.0);
  axpy_rows(a.data() + i * a.cols(), 1, bt.data(), a.cols(), n, scratch.data());
  double *out = c.data() + i * n;
  for (std::size_t j = 0; j < n; ++j)
    out[j] += scratch[j];
}

Matrix transpose(const Matrix &m) {
  Matrix t(m.cols(), m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c)
      t(c, r) = m(r, c);
  return t;
}

void check_nn(const Matrix &a, const Matrix &b) {
  if (a.cols() != b.rows())
    throw Error(ErrorCode::ShapeMismatch, "gemm: " + shape(a) + " * " + shape(b));
}
void check_tn(const Matrix &a, const Matrix &b) {
  if (a.rows() != b.rows())
    throw Error(ErrorCode::ShapeMismatch, "gemm_tn: (" + shape(a) + ")^T * " + shape(b));
}
void check_nt(const Matrix &a, const Matrix &b) {
  if (a.cols() != b.cols())
    throw Error(ErrorCode::ShapeMismatch, "gemm_nt: " + shape(a) + " * (" + shape(b) + ")^T");
}

} // namespace

namespace serial {

void gemm(const Matrix &a, const Matrix &b, Matrix &c, bool accumulate) {
  check_nn(a, b);
  prepare_output(c, a.rows(), b.cols(), accumulate, "gemm");
  for (std::size_t i = 0; i < a.rows(); ++i)
    nn_row(a, b, c, i);
}

void gemm_tn(const Matrix &a, const Matrix &b, Matrix &c, bool accumulate) {
  check_tn(a, b);
  prepare_output(c, a.cols(), b.cols(), accumulate, "gemm_tn");
  for (std::size_t i = 0; i < a.cols(); ++i)
    tn_row(a, b, c, i);
}

void gemm_nt(const Matrix &a, const Matrix &b, Matrix &c, bool accumulate) {
  check_nt(a, b);
  prepare_output(c, a.rows(), b.rows(), accumulate, "gemm_nt");
  const Matrix bt = transpose(b);
  std::vector<double> scratch;
  for (std::size_t i = 0; i < a.rows(); ++i)
    nt_row(a, bt, c, i, scratch);
}

} // namespace serial

namespace parallel {

void gemm(const Matrix &a, const Matrix &b, Matrix &c, bool accumulate) {
  check_nn(a, b);
  prepare_output(c, a.rows(), b.cols(), accumulate, "gemm");
  const auto rows = static_cast<long>(a.rows());
  const bool big = a.rows() * a.cols() * b.cols() >= kMinParallelWork;
#pragma omp parallel for schedule(static) if (big)
  for (long i = 0; i < rows; ++i)
    nn_row(a, b, c, static_cast<std::size_t>(i));
}

void gemm_tn(const Matrix &a, const Matrix &b, Matrix &c, bool accumulate) {
  check_tn(a, b);
  prepare_output(c, a.cols(), b.cols(), accumulate, "gemm_tn");
  const auto rows = static_cast<long>(a.cols());
  const bool big = a.rows() * a.cols() * b.cols() >= kMinParallelWork;
#pragma omp parallel for schedule(static) if (big)
  for (long i = 0; i < rows; ++i)
    tn_row(a, b, c, static_cast<std::size_t>(i));
}

void gemm_nt(const Matrix &a, const Matrix &b, Matrix &c, bool accumulate) {
  check_nt(a, b);
  prepare_output(c, a.rows(), b.rows(), accumulate, "gemm_nt");
  const auto rows = static_cast<long>(a.rows());
  const bool big = a.rows() * a.cols() * b.rows() >= kMinParallelWork;
  const Matrix bt = transpose(b);
#pragma omp parallel if (big)
  {
    std::vector<double> scratch;
#pragma omp for schedule(static)
    for (long i = 0; i < rows; ++i)
      nt_row(a, bt, c, static_cast<std::size_t>(i), scratch);
  }
}

} // namespace parallel

} // namespace covcast::kernels
