// SPDX-License-Identifier: Apache-2.0
/**
 * @file   kernels.hpp
 * @brief  Matrix-product kernels used by the recurrent cells.
 *
 * Two implementations with identical signatures: `serial` is the reference,
 * `parallel` splits output rows across OpenMP threads. Every output element
 * is accumulated in the same order by both, so results are bit-identical.
 * Callers outside tests use the unqualified forwarding functions, which pick
 * the parallel kernel.
 */
#pragma once

#include "covcast/matrix.hpp"

namespace covcast::kernels {

namespace serial {
/// C = A * B, or C += A * B when accumulate is set.
void gemm(const Matrix &a, const Matrix &b, Matrix &c, bool accumulate = false);
/// C = A^T * B
void gemm_tn(const Matrix &a, const Matrix &b, Matrix &c, bool accumulate = false);
/// C = A * B^T
void gemm_nt(const Matrix &a, const Matrix &b, Matrix &c, bool accumulate = false);
} // namespace serial

namespace parallel {
void gemm(const Matrix &a, const Matrix &b, Matrix &c, bool accumulate = false);
void gemm_tn(const Matrix &a, const Matrix &b, Matrix &c, bool accumulate = false);
void gemm_nt(const Matrix &a, const Matrix &b, Matrix &c, bool accumulate = false);

/// Products with fewer multiply-adds than this stay on the calling thread.
inline constexpr std::size_t kMinParallelWork = std::size_t{1} << 16;
} // namespace parallel

inline void gemm(const Matrix &a, const Matrix &b, Matrix &c, bool accumulate = false) {
  parallel::gemm(a, b, c, accumulate);
}
inline void gemm_tn(const Matrix &a, const Matrix &b, Matrix &c, bool accumulate = false) {
  parallel::gemm_tn(a, b, c, accumulate);
}
inline void gemm_nt(const Matrix &a, const Matrix &b, Matrix &c, bool accumulate = false) {
  parallel::gemm_nt(a, b, c, accumulate);
}

} // namespace covcast::kernels
